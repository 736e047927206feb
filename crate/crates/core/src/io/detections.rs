//! Detection dumps: one `frame_id modality scale x_min y_min x_max y_max
//! score` line per detection. Blank lines and `#` comments are skipped.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Result;
use crate::geometry::{BBox, Detection, Modality, Scale};

use super::{content_lines, parse_err, parse_f64};

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 8 {
            return Err(parse_err(path, n, format!("expected 8 fields, got {}", tok.len())));
        }
        let modality: Modality = tok[1].parse().map_err(|e: String| parse_err(path, n, e))?;
        let scale: Scale = tok[2].parse().map_err(|e: String| parse_err(path, n, e))?;
        let [a, b, c, d, s] = [3, 4, 5, 6, 7].map(|i| parse_f64(path, n, "number", tok[i]));
        let bbox = BBox::new(a?, b?, c?, d?).map_err(|e| parse_err(path, n, e.to_string()))?;
        let det = Detection::new(tok[0], modality, scale, bbox, s?)
            .map_err(|e| parse_err(path, n, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(&super::read_text(path)?, path)
}

/// Shortest round-trip float formatting, so parsing the output is lossless.
pub fn format_detection(d: &Detection) -> String {
    let b = &d.bbox;
    format!(
        "{} {} {} {} {} {} {} {}",
        d.frame_id, d.modality, d.scale, b.x_min, b.y_min, b.x_max, b.y_max, d.score
    )
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        out.push_str(&format_detection(d));
        out.push('\n');
    }
    out
}

/// Groups by `(frame_id, scale)` keeping file order inside each group.
pub fn group_by_frame_scale(dets: &[Detection]) -> BTreeMap<(String, Scale), Vec<Detection>> {
    let mut out: BTreeMap<(String, Scale), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        out.entry((d.frame_id.clone(), d.scale)).or_default().push(d.clone());
    }
    out
}
