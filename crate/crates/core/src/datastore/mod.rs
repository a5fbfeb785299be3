//! Artifact files: little-endian binary containers for numeric data, JSON for
//! reports, CSV for interchange with external datasets.
//!
//! Every binary container starts with a 4-byte magic and a `u16` format
//! version. Readers check every count against the bytes actually present
//! before allocating. Byte layouts are documented in `docs/formats.md`.

mod binary;
mod csv_io;
mod formats;

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use csv_io::{export_csv, import_csv, CsvLayout, TruthLayout};
pub use formats::*;

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} at offset 4 (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("truncated file: {needed} bytes needed at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("count mismatch at offset {offset}: {detail}")]
    CountMismatch { offset: usize, detail: String },
    #[error("invalid data at offset {offset}: {detail}")]
    Invalid { offset: usize, detail: String },
    #[error("CSV row {row}: {detail}")]
    Csv { row: usize, detail: String },
    #[error("JSON: {0}")]
    Json(String),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| DataError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| DataError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| DataError::io(path, e))?;
    tmp.persist(path).map_err(|e| DataError::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON serialization of a configuration value.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("configuration serializes to JSON"))
}

pub fn file_hash(path: &Path) -> Result<String, DataError> {
    Ok(sha256_hex(&read_file(path)?))
}
