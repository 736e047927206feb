//! File formats and dataset ingestion.

pub mod annotations;
pub mod config;
pub mod container;
pub mod detections;
pub mod manifest;
pub mod reports;

use std::path::Path;

use crate::error::{Error, Result};

pub use annotations::{parse_annotations, read_annotations, write_annotations};
pub use config::RunConfig;
pub use container::{
    read_tensors, read_weights, write_tensors, write_weights, TENSOR_MAGIC, WEIGHTS_MAGIC,
};
pub use detections::{format_detections, group_by_frame_scale, parse_detections, read_detections};
pub use manifest::{Manifest, ManifestEntry};
pub use reports::{format_reports, parse_reports, ReportLine};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Lines with their 1-based number, skipping blanks and `#` comments.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_f64(path: &Path, line: usize, what: &str, token: &str) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(path, line, format!("bad {what} `{token}`"))),
    }
}
