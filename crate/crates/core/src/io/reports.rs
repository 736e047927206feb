//! Per-instance reliability reports: `frame_id scale r_v r_t overlap`,
//! where `overlap` is `1` when any detection touches the ground truth.

use std::path::Path;

use crate::balance::ReliabilityReport;
use crate::error::Result;
use crate::geometry::Scale;

use super::{content_lines, parse_err, parse_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub frame_id: String,
    pub scale: Scale,
    pub r_v: f64,
    pub r_t: f64,
    pub any_overlap: bool,
}

impl ReportLine {
    pub fn report(&self) -> ReliabilityReport {
        ReliabilityReport::from_scores(self.r_v, self.r_t, self.any_overlap)
    }
}

pub fn parse_reports(text: &str, path: &Path) -> Result<Vec<ReportLine>> {
    content_lines(text)
        .map(|(n, line)| {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(parse_err(path, n, format!("expected 5 fields, got {}", tok.len())));
            }
            let any_overlap = match tok[4] {
                "0" => false,
                "1" => true,
                t => return Err(parse_err(path, n, format!("bad overlap flag `{t}`"))),
            };
            Ok(ReportLine {
                frame_id: tok[0].into(),
                scale: tok[1].parse().map_err(|e: String| parse_err(path, n, e))?,
                r_v: parse_f64(path, n, "r_v", tok[2])?,
                r_t: parse_f64(path, n, "r_t", tok[3])?,
                any_overlap,
            })
        })
        .collect()
}

pub fn format_reports(lines: &[ReportLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            l.frame_id,
            l.scale,
            l.r_v,
            l.r_t,
            u8::from(l.any_overlap)
        ));
    }
    out
}
