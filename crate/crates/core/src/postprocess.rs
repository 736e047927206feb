//! Cross-modal box fusion and the four output strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{iou, nms, BBox, Detection, Modality, Scale, DEFAULT_NMS_THRESHOLD};

/// How the two detection branches are turned into final detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionStrategy {
    /// NMS on the visible branch only.
    Vis,
    /// NMS on the thermal branch only.
    Ir,
    /// Joint NMS over both branches.
    Both,
    /// Per-scale cross-modal pairing, then joint NMS over fused boxes.
    Algo1,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 4] = [
        FusionStrategy::Vis,
        FusionStrategy::Ir,
        FusionStrategy::Both,
        FusionStrategy::Algo1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionStrategy::Vis => "vis",
            FusionStrategy::Ir => "ir",
            FusionStrategy::Both => "both",
            FusionStrategy::Algo1 => "algo1",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vis" => Ok(FusionStrategy::Vis),
            "ir" => Ok(FusionStrategy::Ir),
            "both" => Ok(FusionStrategy::Both),
            "algo1" => Ok(FusionStrategy::Algo1),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub conf_threshold_v: f64,
    pub conf_threshold_t: f64,
    pub iou_thres: f64,
    pub nms_threshold: f64,
    pub strategy: FusionStrategy,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            conf_threshold_v: 0.2,
            conf_threshold_t: 0.2,
            iou_thres: 0.5,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            strategy: FusionStrategy::Algo1,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("conf_thres_v", self.conf_threshold_v),
            ("conf_thres_t", self.conf_threshold_t),
            ("iou_thres", self.iou_thres),
            ("nms_thres", self.nms_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    key: key.into(),
                    message: format!("{v} is outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// One matched visible/thermal pair merged into their hull.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDetection {
    pub bbox: BBox,
    pub f_conf: f64,
    /// Index into the visible input slice.
    pub parent_v: usize,
    /// Index into the thermal input slice.
    pub parent_t: usize,
    pub scale: Scale,
    pub frame_id: String,
}

impl FusedDetection {
    /// `(x_c, y_c, w, h)`
    pub fn center_form(&self) -> (f64, f64, f64, f64) {
        self.bbox.center_form()
    }

    pub fn to_detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            score: self.f_conf,
            modality: Modality::Fused,
            scale: self.scale,
            frame_id: self.frame_id.clone(),
        }
    }
}

/// Keeps detections scoring at least `threshold`, in input order.
pub fn filter(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.score >= threshold)
        .cloned()
        .collect()
}

type FrameGroups<'a> = BTreeMap<&'a str, (Vec<usize>, Vec<usize>)>;

fn group_by_frame<'a>(vis: &'a [Detection], ir: &'a [Detection]) -> FrameGroups<'a> {
    let mut frames: FrameGroups<'a> = BTreeMap::new();
    for (i, d) in vis.iter().enumerate() {
        frames.entry(d.frame_id.as_str()).or_default().0.push(i);
    }
    for (j, d) in ir.iter().enumerate() {
        frames.entry(d.frame_id.as_str()).or_default().1.push(j);
    }
    frames
}

/// Pairs every confident visible box with every confident thermal box of
/// the same frame whose IoU reaches `iou_thres`, and replaces each pair by
/// its hull scored with the mean confidence. Frames are visited in
/// frame-id order, pairs visible-major.
pub fn fuse_scale(
    vis: &[Detection],
    ir: &[Detection],
    cfg: &PostprocessConfig,
) -> Result<Vec<FusedDetection>> {
    let mut scales = vis.iter().chain(ir).map(|d| d.scale);
    if let Some(first) = scales.next() {
        if scales.any(|s| s != first) {
            return Err(Error::MixedScale);
        }
    }
    let mut fused = Vec::new();
    for (frame_id, (vi, ti)) in group_by_frame(vis, ir) {
        let vf: Vec<usize> = vi
            .into_iter()
            .filter(|&i| vis[i].score >= cfg.conf_threshold_v)
            .collect();
        let tf: Vec<usize> = ti
            .into_iter()
            .filter(|&j| ir[j].score >= cfg.conf_threshold_t)
            .collect();
        if vf.is_empty() || tf.is_empty() {
            continue;
        }
        for &i in &vf {
            for &j in &tf {
                let (bv, bt) = (&vis[i], &ir[j]);
                if iou(&bv.bbox, &bt.bbox) >= cfg.iou_thres {
                    fused.push(FusedDetection {
                        bbox: bv.bbox.hull(&bt.bbox),
                        f_conf: (bv.score + bt.score) / 2.0,
                        parent_v: i,
                        parent_t: j,
                        scale: bv.scale,
                        frame_id: frame_id.to_string(),
                    });
                }
            }
        }
    }
    Ok(fused)
}

/// Final detections of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutput {
    pub strategy: FusionStrategy,
    pub detections: Vec<Detection>,
}

/// Per-frame NMS, frames in id order.
fn nms_per_frame(dets: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    let mut frames: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        frames.entry(d.frame_id.clone()).or_default().push(d);
    }
    frames
        .into_values()
        .flat_map(|f| nms(&f, threshold))
        .collect()
}

pub fn run_strategy(
    vis: &[Detection],
    ir: &[Detection],
    cfg: &PostprocessConfig,
) -> Result<StrategyOutput> {
    cfg.validate()?;
    let pool: Vec<Detection> = match cfg.strategy {
        FusionStrategy::Vis => vis.to_vec(),
        FusionStrategy::Ir => ir.to_vec(),
        FusionStrategy::Both => vis.iter().chain(ir).cloned().collect(),
        FusionStrategy::Algo1 => {
            let mut fused = Vec::new();
            for scale in Scale::ALL {
                let v: Vec<Detection> = vis.iter().filter(|d| d.scale == scale).cloned().collect();
                let t: Vec<Detection> = ir.iter().filter(|d| d.scale == scale).cloned().collect();
                fused.extend(fuse_scale(&v, &t, cfg)?.iter().map(FusedDetection::to_detection));
            }
            fused
        }
    };
    Ok(StrategyOutput {
        strategy: cfg.strategy,
        detections: nms_per_frame(pool, cfg.nms_threshold),
    })
}
