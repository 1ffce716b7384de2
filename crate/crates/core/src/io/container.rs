//! Length-prefixed JSON header followed by a raw little-endian payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `[u32 LE header length][header JSON][payload]` via a temporary file
/// in the same directory, then renames it into place.
pub(crate) fn write_container(path: &Path, header: &impl Serialize, payload: &[u8]) -> Result<()> {
    let header = serde_json::to_vec(header).map_err(|e| Error::Header {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Header {
        path: path.into(),
        detail: "header longer than 4 GiB".into(),
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&len.to_le_bytes())?;
        f.write_all(&header)?;
        f.write_all(payload)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

/// Header fields every container carries.
pub(crate) trait ContainerHeader: DeserializeOwned {
    fn payload_sha256(&self) -> &str;
    /// Payload size implied by the header.
    fn expected_payload_len(&self) -> u64;
}

#[derive(serde::Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Reads and validates a container: truncation, version, declared length and
/// content hash are checked in that order, each with its own error.
pub(crate) fn read_container<H: ContainerHeader>(path: &Path, expected_version: u32) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |detail: String| Error::Truncated {
        path: path.into(),
        detail,
    };
    if bytes.len() < 4 {
        return Err(truncated(format!("{} bytes, no header length", bytes.len())));
    }
    let hlen = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let body = &bytes[4..];
    if body.len() < hlen {
        return Err(truncated(format!("header declares {hlen} bytes, {} present", body.len())));
    }
    let (head, payload) = body.split_at(hlen);
    let header_err = |e: serde_json::Error| Error::Header {
        path: path.into(),
        detail: e.to_string(),
    };
    let probe: VersionProbe = serde_json::from_slice(head).map_err(header_err)?;
    if probe.version != expected_version {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: probe.version,
            expected: expected_version,
        });
    }
    let header: H = serde_json::from_slice(head).map_err(header_err)?;
    let declared = header.expected_payload_len();
    let found = payload.len() as u64;
    if found < declared {
        return Err(truncated(format!("payload has {found} of {declared} bytes")));
    }
    if found != declared {
        return Err(Error::LengthMismatch {
            path: path.into(),
            declared,
            found,
        });
    }
    if sha256_hex(payload) != header.payload_sha256() {
        return Err(Error::HashMismatch { path: path.into() });
    }
    Ok((header, payload.to_vec()))
}
