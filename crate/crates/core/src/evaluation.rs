//! Log-average miss rate over the standard pedestrian settings.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Bound, RangeBounds};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{iou, order_by_score, BBox, Detection};
use crate::postprocess::FusionStrategy;

pub const DEFAULT_MATCH_IOU: f64 = 0.5;
/// Number of FPPI reference points, log-spaced over `[1e-2, 1e0]`.
pub const FPPI_POINTS: usize = 9;
pub const MISS_RATE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Occlusion {
    None,
    Partial,
    Heavy,
}

impl Occlusion {
    /// Maps the annotation code `0 / 1 / 2`.
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Occlusion::None),
            1 => Some(Occlusion::Partial),
            2 => Some(Occlusion::Heavy),
            _ => None,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Occlusion::None => 0,
            Occlusion::Partial => 1,
            Occlusion::Heavy => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub occlusion: Occlusion,
    /// Boxes flagged here are never required to be detected.
    pub ignore: bool,
    /// Class label as written in the annotation file.
    pub label: String,
}

impl GroundTruthBox {
    pub fn new(bbox: BBox, occlusion: Occlusion) -> Self {
        Self {
            bbox,
            occlusion,
            ignore: false,
            label: "person".into(),
        }
    }

    pub fn height(&self) -> f64 {
        self.bbox.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeOfDay {
    Day,
    Night,
}

impl FromStr for TimeOfDay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "day" => Ok(TimeOfDay::Day),
            "night" => Ok(TimeOfDay::Night),
            other => Err(format!("unknown time of day `{other}`")),
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeOfDay::Day => "day",
            TimeOfDay::Night => "night",
        })
    }
}

/// Frame subset a cell is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    All,
    Day,
    Night,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::All, Split::Day, Split::Night];

    pub fn includes(&self, t: TimeOfDay) -> bool {
        match self {
            Split::All => true,
            Split::Day => t == TimeOfDay::Day,
            Split::Night => t == TimeOfDay::Night,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Day => "day",
            Split::Night => "night",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Split::All),
            "day" => Ok(Split::Day),
            "night" => Ok(Split::Night),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Height window and occlusion tiers that decide which boxes must be found.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetting {
    pub name: String,
    pub min_height: Bound<f64>,
    pub max_height: Bound<f64>,
    pub occlusions: Vec<Occlusion>,
    pub match_iou: f64,
}

impl EvalSetting {
    fn build(name: &str, min: Bound<f64>, max: Bound<f64>, occlusions: &[Occlusion]) -> Self {
        Self {
            name: name.into(),
            min_height: min,
            max_height: max,
            occlusions: occlusions.to_vec(),
            match_iou: DEFAULT_MATCH_IOU,
        }
    }

    /// Unoccluded or partially occluded, taller than 55 px.
    pub fn reasonable() -> Self {
        use Occlusion::*;
        Self::build("reasonable", Bound::Excluded(55.0), Bound::Unbounded, &[None, Partial])
    }

    pub fn all() -> Self {
        use Occlusion::*;
        Self::build("all", Bound::Unbounded, Bound::Unbounded, &[None, Partial, Heavy])
    }

    pub fn near() -> Self {
        Self::build("near", Bound::Excluded(115.0), Bound::Unbounded, &[Occlusion::None])
    }

    pub fn medium() -> Self {
        Self::build(
            "medium",
            Bound::Included(45.0),
            Bound::Included(115.0),
            &[Occlusion::None],
        )
    }

    pub fn far() -> Self {
        Self::build("far", Bound::Unbounded, Bound::Excluded(45.0), &[Occlusion::None])
    }

    pub fn occlusion_none() -> Self {
        Self::build("none", Bound::Unbounded, Bound::Unbounded, &[Occlusion::None])
    }

    pub fn occlusion_partial() -> Self {
        Self::build("partial", Bound::Unbounded, Bound::Unbounded, &[Occlusion::Partial])
    }

    pub fn occlusion_heavy() -> Self {
        Self::build("heavy", Bound::Unbounded, Bound::Unbounded, &[Occlusion::Heavy])
    }

    /// Every named setting, in report order.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::reasonable(),
            Self::near(),
            Self::medium(),
            Self::far(),
            Self::occlusion_none(),
            Self::occlusion_partial(),
            Self::occlusion_heavy(),
            Self::all(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::standard()
            .into_iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn accepts(&self, gt: &GroundTruthBox) -> bool {
        !gt.ignore
            && (self.min_height, self.max_height).contains(&gt.height())
            && self.occlusions.contains(&gt.occlusion)
    }
}

/// Splits ground truth into boxes that must be detected and boxes that
/// are only tolerated.
pub fn apply_setting(
    gts: &[GroundTruthBox],
    setting: &EvalSetting,
) -> (Vec<GroundTruthBox>, Vec<GroundTruthBox>) {
    gts.iter().cloned().partition(|g| setting.accepts(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched an ignored box: counts as neither.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub misses: usize,
    /// One label per detection, in the order given.
    pub labels: Vec<MatchLabel>,
}

/// Greedy matching. Detections must already be sorted by descending score;
/// each one claims the best unmatched evaluated box at `match_iou` or
/// above, else falls back to any ignored box, else is a false positive.
pub fn match_frame(
    dets: &[Detection],
    evaluated: &[GroundTruthBox],
    ignored: &[GroundTruthBox],
    match_iou: f64,
) -> FrameMatch {
    debug_assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
    let mut taken = vec![false; evaluated.len()];
    let mut labels = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in evaluated.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = iou(&d.bbox, &gt.bbox);
            if o >= match_iou && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        let label = if let Some((g, _)) = best {
            taken[g] = true;
            MatchLabel::TruePositive
        } else if ignored.iter().any(|gt| iou(&d.bbox, &gt.bbox) >= match_iou) {
            MatchLabel::Ignored
        } else {
            MatchLabel::FalsePositive
        };
        labels.push(label);
    }
    let tp = labels.iter().filter(|&&l| l == MatchLabel::TruePositive).count();
    let fp = labels.iter().filter(|&&l| l == MatchLabel::FalsePositive).count();
    FrameMatch {
        tp,
        fp,
        misses: evaluated.len() - tp,
        labels,
    }
}

/// Thresholds used to trace the miss-rate/FPPI curve.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScoreSweep {
    /// Every distinct detection score.
    #[default]
    AllScores,
    Thresholds(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissRate {
    /// Log-average miss rate in percent.
    pub mr: f64,
    /// All sampled miss rates were exactly zero.
    pub exact_zero: bool,
    pub curve: Vec<CurvePoint>,
    pub samples: [f64; FPPI_POINTS],
}

/// FPPI reference points `10^(-2 + k / 4)`, `k = 0..9`.
pub fn fppi_reference_points() -> [f64; FPPI_POINTS] {
    std::array::from_fn(|k| 10f64.powf(-2.0 + 2.0 * k as f64 / (FPPI_POINTS - 1) as f64))
}

/// Miss rate at each reference FPPI: the point with the largest FPPI not
/// above the reference (lowest miss rate on ties), else the curve's highest
/// miss rate.
pub fn sample_curve(curve: &[CurvePoint]) -> [f64; FPPI_POINTS] {
    let worst = curve
        .iter()
        .map(|p| p.miss_rate)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .unwrap_or(1.0);
    fppi_reference_points().map(|r| {
        curve
            .iter()
            .filter(|p| p.fppi <= r)
            .min_by(|a, b| b.fppi.total_cmp(&a.fppi).then(a.miss_rate.total_cmp(&b.miss_rate)))
            .map_or(worst, |p| p.miss_rate)
    })
}

pub fn log_average(samples: &[f64; FPPI_POINTS]) -> (f64, bool) {
    if samples.iter().all(|&m| m == 0.0) {
        return (0.0, true);
    }
    let mean_log = samples
        .iter()
        .map(|&m| m.max(MISS_RATE_FLOOR).ln())
        .sum::<f64>()
        / FPPI_POINTS as f64;
    (100.0 * mean_log.exp(), false)
}

/// Log-average miss rate over `(ground truth, detections)` frames.
pub fn log_average_miss_rate<'a, I>(
    frames: I,
    setting: &EvalSetting,
    sweep: &ScoreSweep,
) -> Result<MissRate>
where
    I: IntoIterator<Item = (&'a [GroundTruthBox], &'a [Detection])>,
{
    let mut n_frames = 0usize;
    let mut n_gt = 0usize;
    let mut scored: Vec<(f64, MatchLabel)> = Vec::new();
    for (gts, dets) in frames {
        n_frames += 1;
        let (evaluated, ignored) = apply_setting(gts, setting);
        n_gt += evaluated.len();
        let sorted: Vec<Detection> = order_by_score(&dets.iter().map(|d| d.score).collect::<Vec<_>>())
            .into_iter()
            .map(|i| dets[i].clone())
            .collect();
        let m = match_frame(&sorted, &evaluated, &ignored, setting.match_iou);
        scored.extend(sorted.iter().map(|d| d.score).zip(m.labels));
    }
    if n_gt == 0 {
        return Err(Error::EmptySetting(setting.name.clone()));
    }
    let mut thresholds: Vec<f64> = match sweep {
        ScoreSweep::AllScores => scored.iter().map(|(s, _)| *s).collect(),
        ScoreSweep::Thresholds(t) => t.clone(),
    };
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let curve: Vec<CurvePoint> = thresholds
        .into_iter()
        .map(|t| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for (s, l) in &scored {
                if *s >= t {
                    match l {
                        MatchLabel::TruePositive => tp += 1,
                        MatchLabel::FalsePositive => fp += 1,
                        MatchLabel::Ignored => {}
                    }
                }
            }
            CurvePoint {
                threshold: t,
                fppi: fp as f64 / n_frames as f64,
                miss_rate: 1.0 - tp as f64 / n_gt as f64,
            }
        })
        .collect();
    let samples = sample_curve(&curve);
    let (mr, exact_zero) = log_average(&samples);
    Ok(MissRate {
        mr,
        exact_zero,
        curve,
        samples,
    })
}

/// One evaluation unit with precomputed per-strategy detections.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub time_of_day: TimeOfDay,
    pub gts: Vec<GroundTruthBox>,
    pub detections: BTreeMap<FusionStrategy, Vec<Detection>>,
}

impl FrameRecord {
    pub fn new(frame_id: impl Into<String>, time_of_day: TimeOfDay) -> Self {
        Self {
            frame_id: frame_id.into(),
            time_of_day,
            gts: Vec::new(),
            detections: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrCell {
    pub setting: String,
    pub split: Split,
    pub strategy: FusionStrategy,
    /// `None` when the cell has no frames or no evaluated boxes.
    pub mr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MrTable {
    pub cells: Vec<MrCell>,
}

impl MrTable {
    pub fn get(&self, setting: &str, split: Split, strategy: FusionStrategy) -> Option<&MrCell> {
        self.cells
            .iter()
            .find(|c| c.setting == setting && c.split == split && c.strategy == strategy)
    }

    /// Tab-separated rows `setting split strategy mr`, `n/a` for empty cells.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("setting\tsplit\tstrategy\tmr\n");
        for c in &self.cells {
            let v = c.mr.map_or_else(|| "n/a".to_string(), |m| format!("{m:.6}"));
            out.push_str(&format!("{}\t{}\t{}\t{}\n", c.setting, c.split.as_str(), c.strategy, v));
        }
        out
    }
}

/// MR for every (setting, split, strategy) combination. A strategy missing
/// from a frame's record contributes no detections for that frame.
pub fn evaluate_matrix(
    records: &[FrameRecord],
    strategies: &[FusionStrategy],
    settings: &[EvalSetting],
    splits: &[Split],
) -> Result<MrTable> {
    let mut cells = Vec::new();
    for setting in settings {
        for &split in splits {
            for &strategy in strategies {
                let frames: Vec<(&[GroundTruthBox], &[Detection])> = records
                    .iter()
                    .filter(|r| split.includes(r.time_of_day))
                    .map(|r| {
                        let dets = r.detections.get(&strategy).map_or(&[][..], Vec::as_slice);
                        (r.gts.as_slice(), dets)
                    })
                    .collect();
                let mr = if frames.is_empty() {
                    None
                } else {
                    match log_average_miss_rate(frames, setting, &ScoreSweep::AllScores) {
                        Ok(m) => Some(m.mr),
                        Err(Error::EmptySetting(_)) => None,
                        Err(e) => return Err(e),
                    }
                };
                cells.push(MrCell {
                    setting: setting.name.clone(),
                    split,
                    strategy,
                    mr,
                });
            }
        }
    }
    Ok(MrTable { cells })
}
