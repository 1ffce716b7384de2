//! On-disk formats.
//!
//! Datasets and checkpoints share one container layout: a 4-byte little-endian
//! header length, a UTF-8 JSON header (format version, dimensions, provenance
//! and the SHA-256 of the payload) and a little-endian payload. Datasets store
//! `f32` records `[sample][perm | saturation | pressure][t][y][x]`; checkpoints
//! store `f64` tensors in header order.

mod checkpoint;
mod container;
mod dataset;
mod export;
mod manifest;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use container::sha256_hex;
pub use dataset::{
    append_dataset, read_dataset, record_bytes, sample_seeds, write_dataset, Dataset, GeneratorConfig, Sample,
    DATASET_VERSION,
};
pub use export::{export_frame, export_maps, read_csv_frame, read_pgm_frame, sidecar_path, MapFormat, PgmSidecar};
pub use manifest::{default_out_dir, hash_file, OutputRecord, RunManifest, OUT_DIR_ENV};
