//! Per-frame ground-truth files.
//!
//! ```text
//! % bbGt version=3
//! person 10 20 30 60 0 0 0 0 0 0 0
//! ```
//!
//! Each body line is `label x y w h occlusion` optionally followed by the
//! visible-part box, an ignore flag and an angle. Only `person` boxes are
//! regular ground truth; every other label is kept as an ignore box.

use std::path::Path;

use crate::error::Result;
use crate::evaluation::{GroundTruthBox, Occlusion};
use crate::geometry::BBox;

use super::{parse_err, parse_f64};

pub const HEADER: &str = "% bbGt version=3";
pub const PERSON: &str = "person";

/// Parses one annotation file; coordinates are multiplied by `(sx, sy)`.
pub fn parse_annotations(text: &str, path: &Path, scale: (f64, f64)) -> Result<Vec<GroundTruthBox>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.find(|(_, l)| !l.is_empty()) {
        Some((_, l)) if l.starts_with("% bbGt") => {}
        Some((n, _)) => return Err(parse_err(path, n, "missing `% bbGt` header")),
        None => return Err(parse_err(path, 1, "missing `% bbGt` header")),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 6 {
            return Err(parse_err(path, n, format!("expected at least 6 fields, got {}", tok.len())));
        }
        let [x, y, w, h] = [1, 2, 3, 4].map(|i| parse_f64(path, n, "coordinate", tok[i]));
        let (x, y, w, h) = (x?, y?, w?, h?);
        if w < 0.0 || h < 0.0 {
            return Err(parse_err(path, n, "negative box size"));
        }
        let occlusion = tok[5]
            .parse::<u8>()
            .ok()
            .and_then(Occlusion::from_code)
            .ok_or_else(|| parse_err(path, n, format!("bad occlusion `{}`", tok[5])))?;
        let flagged = match tok.get(10) {
            Some(t) => parse_f64(path, n, "ignore flag", t)? != 0.0,
            None => false,
        };
        let (sx, sy) = scale;
        let bbox = BBox::new(x * sx, y * sy, (x + w) * sx, (y + h) * sy)
            .map_err(|e| parse_err(path, n, e.to_string()))?;
        out.push(GroundTruthBox {
            bbox,
            occlusion,
            ignore: flagged || tok[0] != PERSON,
            label: tok[0].to_string(),
        });
    }
    Ok(out)
}

pub fn read_annotations(path: &Path, scale: (f64, f64)) -> Result<Vec<GroundTruthBox>> {
    parse_annotations(&super::read_text(path)?, path, scale)
}

/// Serializes boxes in the same format. A regular `person` box flagged as
/// ignored keeps the flag in the ignore column.
pub fn write_annotations(gts: &[GroundTruthBox]) -> String {
    let mut out = format!("{HEADER}\n");
    for g in gts {
        let b = &g.bbox;
        let flag = u8::from(g.ignore && g.label == PERSON);
        out.push_str(&format!(
            "{} {} {} {} {} {} 0 0 0 0 {} 0\n",
            g.label,
            b.x_min,
            b.y_min,
            b.x_max - b.x_min,
            b.y_max - b.y_min,
            g.occlusion.code(),
            flag
        ));
    }
    out
}
