//! Dataset manifests.
//!
//! ```text
//! frames = 3
//! stride = 1
//! annotation_scale = 1 1
//! # frame_id sequence index day|night annotation
//! set00_0001 set00 1 day ann/set00_0001.txt
//! ```
//!
//! Header lines are `key = value`; the rest are frame entries. Annotation
//! paths are relative to the manifest's directory. A frame is evaluated
//! only when its sequence also holds the `frames - 1` earlier frames spaced
//! `stride` indices apart; the frame itself is the last member.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::evaluation::{FrameRecord, TimeOfDay};

use super::annotations::read_annotations;
use super::{content_lines, parse_err, parse_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub frame_id: String,
    pub sequence: String,
    pub index: u64,
    pub time_of_day: TimeOfDay,
    /// As written in the manifest.
    pub annotation: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub frames: usize,
    pub stride: usize,
    /// Multipliers applied to annotation coordinates.
    pub annotation_scale: (f64, f64),
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m = Manifest {
            frames: 1,
            stride: 1,
            annotation_scale: (1.0, 1.0),
            entries: Vec::new(),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let mut seen = BTreeSet::new();
        for (n, line) in content_lines(text) {
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                let count = |v: &str| match v.parse::<usize>() {
                    Ok(x) if x >= 1 => Ok(x),
                    _ => Err(parse_err(path, n, format!("`{key}` must be a positive integer"))),
                };
                match key {
                    "frames" => m.frames = count(value)?,
                    "stride" => m.stride = count(value)?,
                    "annotation_scale" => {
                        let v: Vec<&str> = value.split_whitespace().collect();
                        let (sx, sy) = match v.as_slice() {
                            [s] => (*s, *s),
                            [x, y] => (*x, *y),
                            _ => return Err(parse_err(path, n, "annotation_scale takes one or two numbers")),
                        };
                        m.annotation_scale = (parse_f64(path, n, "scale", sx)?, parse_f64(path, n, "scale", sy)?);
                    }
                    other => return Err(parse_err(path, n, format!("unknown key `{other}`"))),
                }
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(parse_err(path, n, format!("expected 5 fields, got {}", tok.len())));
            }
            let index = tok[2]
                .parse::<u64>()
                .map_err(|_| parse_err(path, n, format!("bad index `{}`", tok[2])))?;
            let time_of_day = tok[3].parse().map_err(|e: String| parse_err(path, n, e))?;
            if !seen.insert(tok[0].to_string()) {
                return Err(parse_err(path, n, format!("duplicate frame id `{}`", tok[0])));
            }
            m.entries.push(ManifestEntry {
                frame_id: tok[0].into(),
                sequence: tok[1].into(),
                index,
                time_of_day,
                annotation: tok[4].into(),
            });
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&super::read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "frames = {}\nstride = {}\nannotation_scale = {} {}\n",
            self.frames, self.stride, self.annotation_scale.0, self.annotation_scale.1
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                e.frame_id,
                e.sequence,
                e.index,
                e.time_of_day,
                e.annotation.display()
            ));
        }
        out
    }

    /// Complete temporal groups, oldest member first, in manifest order of
    /// their last frame.
    pub fn groups(&self) -> Vec<Vec<&ManifestEntry>> {
        let by_key: HashMap<(&str, u64), &ManifestEntry> = self
            .entries
            .iter()
            .map(|e| ((e.sequence.as_str(), e.index), e))
            .collect();
        let span = (self.frames - 1) as u64 * self.stride as u64;
        self.entries
            .iter()
            .filter(|e| e.index >= span)
            .filter_map(|e| {
                (0..self.frames as u64)
                    .rev()
                    .map(|k| by_key.get(&(e.sequence.as_str(), e.index - k * self.stride as u64)).copied())
                    .collect::<Option<Vec<_>>>()
            })
            .collect()
    }

    pub fn annotation_path(&self, e: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&e.annotation)
    }

    /// One record per evaluated frame, with ground truth and no detections.
    pub fn load_records(&self) -> Result<Vec<FrameRecord>> {
        self.groups()
            .into_iter()
            .map(|g| {
                let e = g[g.len() - 1];
                let mut r = FrameRecord::new(e.frame_id.clone(), e.time_of_day);
                r.gts = read_annotations(&self.annotation_path(e), self.annotation_scale)?;
                Ok(r)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    const TEXT: &str = "frames = 3\nstride = 2\nannotation_scale = 1 1\n\
        a1 a 1 day x\na3 a 3 day x\na5 a 5 night x\na6 a 6 day x\na7 a 7 day x\nb5 b 5 day x\n";

    #[test]
    fn groups_need_full_history() {
        let m = Manifest::parse(TEXT, Path::new("m.txt")).unwrap();
        let g = m.groups();
        let ids: Vec<Vec<&str>> = g
            .iter()
            .map(|g| g.iter().map(|e| e.frame_id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a1", "a3", "a5"], vec!["a3", "a5", "a7"]]);
    }

    #[test]
    fn single_frame_groups_cover_everything() {
        let mut m = Manifest::parse(TEXT, Path::new("m.txt")).unwrap();
        m.frames = 1;
        assert_eq!(m.groups().len(), m.entries.len());
    }

    #[test]
    fn round_trip() {
        let m = Manifest::parse(TEXT, Path::new("d/m.txt")).unwrap();
        let back = Manifest::parse(&m.to_text(), Path::new("d/m.txt")).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.annotation_path(&m.entries[0]), PathBuf::from("d/x"));
    }

    #[test]
    fn rejects_duplicates_and_junk() {
        let dup = "a 1 s day x\n";
        assert!(Manifest::parse(dup, Path::new("m")).is_err());
        let dup = "a s 1 day x\na s 2 day y\n";
        assert!(Manifest::parse(dup, Path::new("m")).is_err());
        assert!(matches!(
            Manifest::parse("frames = 0\n", Path::new("m")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Manifest::parse("a s 1 dusk x\n", Path::new("m")).is_err());
        assert!(Manifest::parse("colour = red\n", Path::new("m")).is_err());
    }
}
