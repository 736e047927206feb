//! Axis-aligned box algebra shared by the loss, post-processing and
//! evaluation code.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default IoU threshold for greedy NMS.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.45;

/// Axis-aligned box in corner form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box from corners, rejecting inverted or non-finite input.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min > x_max || y_min > y_max {
            return Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from center form `(x_c, y_c, w, h)`.
    pub fn from_center(x_c: f64, y_c: f64, w: f64, h: f64) -> Result<Self> {
        if !(w >= 0.0 && h >= 0.0) {
            return Err(Error::InvalidBox {
                x_min: x_c,
                y_min: y_c,
                x_max: w,
                y_max: h,
            });
        }
        Self::new(x_c - w / 2.0, y_c - h / 2.0, x_c + w / 2.0, y_c + h / 2.0)
    }

    /// Center-form view `(x_c, y_c, w, h)`.
    pub fn center_form(&self) -> (f64, f64, f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.width(),
            self.height(),
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Area of the overlap region, zero when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest axis-aligned box containing both inputs.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Scales all coordinates by independent x/y factors.
    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Intersection over union. Zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Complete IoU: IoU minus the normalized squared center distance minus the
/// aspect-ratio consistency penalty.
pub fn ciou(pred: &BBox, gt: &BBox) -> Result<f64> {
    let (pw, ph, gw, gh) = (pred.width(), pred.height(), gt.width(), gt.height());
    if pw <= 0.0 || ph <= 0.0 || gw <= 0.0 || gh <= 0.0 {
        return Err(Error::DegenerateAspectRatio);
    }
    let overlap = iou(pred, gt);

    let (pcx, pcy, _, _) = pred.center_form();
    let (gcx, gcy, _, _) = gt.center_form();
    let center_dist = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let enclosing = pred.hull(gt);
    let diag = enclosing.width().powi(2) + enclosing.height().powi(2);

    let v = 4.0 / (PI * PI) * ((gw / gh).atan() - (pw / ph).atan()).powi(2);
    // v == 0 covers the identical-box case where alpha would be 0/0.
    let aspect = if v == 0.0 {
        0.0
    } else {
        v * v / ((1.0 - overlap) + v)
    };
    Ok(overlap - center_dist / diag - aspect)
}

/// Which sensor produced a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Visible,
    Thermal,
    Fused,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Visible => "vis",
            Modality::Thermal => "ir",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vis" | "visible" => Ok(Modality::Visible),
            "ir" | "thermal" => Ok(Modality::Thermal),
            "fused" => Ok(Modality::Fused),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Detector feature-map scale. Strides assume a 640-pixel input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scale {
    S80,
    S40,
    S20,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::S80, Scale::S40, Scale::S20];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::S80 => "s80",
            Scale::S40 => "s40",
            Scale::S20 => "s20",
        }
    }

    /// Feature-map side length.
    pub fn side(&self) -> usize {
        match self {
            Scale::S80 => 80,
            Scale::S40 => 40,
            Scale::S20 => 20,
        }
    }

    pub fn default_stride(&self) -> f64 {
        match self {
            Scale::S80 => 8.0,
            Scale::S40 => 16.0,
            Scale::S20 => 32.0,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s80" => Ok(Scale::S80),
            "s40" => Ok(Scale::S40),
            "s20" => Ok(Scale::S20),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

/// A scored box from one detection branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub modality: Modality,
    pub scale: Scale,
    pub frame_id: String,
}

impl Detection {
    pub fn new(
        frame_id: impl Into<String>,
        modality: Modality,
        scale: Scale,
        bbox: BBox,
        score: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidConfig {
                key: "score".into(),
                message: format!("{score} is outside [0, 1]"),
            });
        }
        Ok(Self {
            bbox,
            score,
            modality,
            scale,
            frame_id: frame_id.into(),
        })
    }
}

/// Indices ordered by descending score, stable on ties.
pub(crate) fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy NMS over parallel box/score slices; returns surviving indices in
/// descending score order.
pub fn nms_indices(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    debug_assert_eq!(boxes.len(), scores.len());
    let mut keep: Vec<usize> = Vec::new();
    for idx in order_by_score(scores) {
        if keep
            .iter()
            .all(|&k| iou(&boxes[k], &boxes[idx]) <= iou_threshold)
        {
            keep.push(idx);
        }
    }
    keep
}

/// Class-agnostic greedy NMS.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    nms_indices(&boxes, &scores, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}
