use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Csv,
    Pgm,
}

impl FromStr for MapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MapFormat::Csv),
            "pgm" => Ok(MapFormat::Pgm),
            other => Err(Error::config(format!("unknown map format `{other}` (csv | pgm)"))),
        }
    }
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MapFormat::Csv => "csv",
            MapFormat::Pgm => "pgm",
        }
    }
}

/// Value range a PGM was scaled with, stored next to it as `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    pub maxval: u16,
}

fn check_frame(frame: &[f64], h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || frame.len() != h * w {
        return Err(Error::dim(format!("frame of {} values is not {h}x{w}", frame.len())));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("map contains non-finite values".into()));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes one row-major `h × w` frame. CSV holds one `y,x,value` line per cell
/// (shortest round-trip decimal); PGM is binary 16-bit grayscale scaled
/// linearly from the frame's `[min, max]`, which the JSON sidecar records.
/// Returns the files written.
pub fn export_frame(frame: &[f64], h: usize, w: usize, path: &Path, format: MapFormat) -> Result<Vec<PathBuf>> {
    check_frame(frame, h, w)?;
    match format {
        MapFormat::Csv => {
            let mut s = String::with_capacity(frame.len() * 16);
            for y in 0..h {
                for x in 0..w {
                    writeln!(s, "{y},{x},{}", frame[y * w + x]).expect("write to String");
                }
            }
            write_file(path, s.as_bytes())?;
            Ok(vec![path.to_path_buf()])
        }
        MapFormat::Pgm => {
            let maxval = u16::MAX;
            let min = frame.iter().copied().fold(f64::INFINITY, f64::min);
            let max = frame.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            let mut bytes = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
            for &v in frame {
                let q = if span > 0.0 {
                    ((v - min) / span * maxval as f64).round() as u16
                } else {
                    0
                };
                bytes.extend_from_slice(&q.to_be_bytes());
            }
            write_file(path, &bytes)?;
            let side = sidecar_path(path);
            let meta = PgmSidecar {
                width: w,
                height: h,
                min,
                max,
                maxval,
            };
            let json = serde_json::to_vec_pretty(&meta).expect("sidecar serializes");
            write_file(&side, &json)?;
            Ok(vec![path.to_path_buf(), side])
        }
    }
}

/// Writes frames `[T, H, W]` as `<dir>/<stem>_tNN.<ext>`.
pub fn export_maps(
    frames: &[f64],
    steps: usize,
    h: usize,
    w: usize,
    dir: &Path,
    stem: &str,
    format: MapFormat,
) -> Result<Vec<PathBuf>> {
    if frames.len() != steps * h * w {
        return Err(Error::dim(format!(
            "{} values are not {steps} frames of {h}x{w}",
            frames.len()
        )));
    }
    let mut out = Vec::new();
    for t in 0..steps {
        let path = dir.join(format!("{stem}_t{t:02}.{}", format.extension()));
        out.extend(export_frame(&frames[t * h * w..(t + 1) * h * w], h, w, &path, format)?);
    }
    Ok(out)
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Header {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Parses a CSV map back into `(h, w, values)`.
pub fn read_csv_frame(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cells = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        let parsed = match parts.as_slice() {
            [y, x, v] => y.parse::<usize>().ok().zip(x.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let ((y, x), v) = parsed.ok_or_else(|| parse_err(path, format!("line {}: `{line}`", n + 1)))?;
        cells.push((y, x, v));
    }
    let h = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let w = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if cells.len() != h * w {
        return Err(parse_err(path, format!("{} cells do not fill {h}x{w}", cells.len())));
    }
    let mut out = vec![0.0; h * w];
    for (y, x, v) in cells {
        out[y * w + x] = v;
    }
    Ok((h, w, out))
}

/// Parses a PGM map and its sidecar back into `(h, w, values)`.
pub fn read_pgm_frame(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let side_path = sidecar_path(path);
    let side: PgmSidecar = serde_json::from_slice(&fs::read(&side_path).map_err(|e| Error::io(&side_path, e))?)
        .map_err(|e| parse_err(&side_path, e.to_string()))?;
    // Header: magic, width, height, maxval, each followed by one whitespace byte.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "incomplete PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, format!("bad PGM field `{s}`")));
    if fields[0] != "P5" {
        return Err(parse_err(path, "not a binary PGM"));
    }
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    let data = bytes.get(pos..).unwrap_or_default();
    if maxval != side.maxval as usize || data.len() != 2 * w * h {
        return Err(parse_err(path, "PGM body does not match its header"));
    }
    let span = side.max - side.min;
    let values = data
        .chunks_exact(2)
        .map(|c| side.min + u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64 * span)
        .collect();
    Ok((h, w, values))
}
