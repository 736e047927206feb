//! Modality reliability and the KL alignment loss.
//!
//! Each branch is scored by the mean of its top-N CIoU values against the
//! ground truth. RoI features of the more reliable branch's top boxes are
//! pulled from both feature sequences, turned into cosine relation
//! matrices, and compared with a row-wise KL divergence that pushes the
//! weaker branch towards the stronger one.

use crate::error::{Error, Result};
use crate::geometry::{ciou, iou, order_by_score, BBox, Detection, Modality};
use crate::tensor::Tensor4;

pub const DEFAULT_N_TOP: usize = 300;
/// RoIAlign output grid side.
pub const ROI_GRID: usize = 3;
/// Bilinear samples per bin along each axis.
pub const ROI_SAMPLING_RATIO: usize = 2;

/// Outcome of scoring both branches against one frame's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub r_v: f64,
    pub r_t: f64,
    pub reference: Modality,
    /// Indices into the visible detections, best CIoU first, at most `n_top`.
    pub top_visible: Vec<usize>,
    pub top_thermal: Vec<usize>,
    /// Whether any detection of either branch overlaps any ground truth.
    pub any_overlap: bool,
}

impl ReliabilityReport {
    /// Builds a report from precomputed reliabilities (no box bookkeeping).
    pub fn from_scores(r_v: f64, r_t: f64, any_overlap: bool) -> Self {
        Self {
            r_v,
            r_t,
            reference: if r_t > r_v {
                Modality::Thermal
            } else {
                Modality::Visible
            },
            top_visible: Vec::new(),
            top_thermal: Vec::new(),
            any_overlap,
        }
    }

    pub fn thermal_dominant(&self) -> bool {
        self.r_t > self.r_v
    }

    /// Number of reference boxes feeding the relation matrices.
    pub fn n_used(&self) -> usize {
        self.reference_indices().len()
    }

    pub fn reference_indices(&self) -> &[usize] {
        match self.reference {
            Modality::Thermal => &self.top_thermal,
            _ => &self.top_visible,
        }
    }
}

/// Best CIoU of each detection against any ground-truth box.
pub fn best_ciou_scores(dets: &[Detection], gts: &[BBox]) -> Result<Vec<f64>> {
    dets.iter()
        .map(|d| {
            gts.iter()
                .map(|g| ciou(&d.bbox, g))
                .try_fold(f64::NEG_INFINITY, |best, v| v.map(|v| best.max(v)))
        })
        .collect()
}

/// Mean of the `n_top` largest scores plus the indices that produced them.
/// Fewer than `n_top` scores are averaged over what is available; an empty
/// list scores zero.
pub fn top_mean(scores: &[f64], n_top: usize) -> (f64, Vec<usize>) {
    let mut order = order_by_score(scores);
    order.truncate(n_top);
    if order.is_empty() {
        return (0.0, order);
    }
    let mean = order.iter().map(|&i| scores[i]).sum::<f64>() / order.len() as f64;
    (mean, order)
}

pub fn reliability(
    vis: &[Detection],
    ir: &[Detection],
    gts: &[BBox],
    n_top: usize,
) -> Result<ReliabilityReport> {
    if gts.is_empty() {
        return Err(Error::NoReferenceObjects);
    }
    if n_top == 0 {
        return Err(Error::InvalidConfig {
            key: "n_top".into(),
            message: "must be at least 1".into(),
        });
    }
    let (r_v, top_visible) = top_mean(&best_ciou_scores(vis, gts)?, n_top);
    let (r_t, top_thermal) = top_mean(&best_ciou_scores(ir, gts)?, n_top);
    let any_overlap = vis
        .iter()
        .chain(ir)
        .any(|d| gts.iter().any(|g| iou(&d.bbox, g) > 0.0));
    let mut report = ReliabilityReport::from_scores(r_v, r_t, any_overlap);
    report.top_visible = top_visible;
    report.top_thermal = top_thermal;
    Ok(report)
}

/// Flattened `(F, C, 3, 3)` RoI feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiFeature {
    pub values: Vec<f64>,
    /// Index of the box this feature was pooled from.
    pub source: usize,
}

/// Bilinear interpolation with the usual RoIAlign border handling: samples
/// more than one pixel outside the map read zero, samples in the border
/// band clamp to the edge.
fn bilinear(plane: &[f64], h: usize, w: usize, mut y: f64, mut x: f64) -> f64 {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return 0.0;
    }
    y = y.max(0.0);
    x = x.max(0.0);
    let mut y0 = y.floor() as usize;
    let mut x0 = x.floor() as usize;
    let y1;
    let x1;
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        y = y0 as f64;
    } else {
        y1 = y0 + 1;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        x = x0 as f64;
    } else {
        x1 = x0 + 1;
    }
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    hy * hx * plane[y0 * w + x0]
        + hy * lx * plane[y0 * w + x1]
        + ly * hx * plane[y1 * w + x0]
        + ly * lx * plane[y1 * w + x1]
}

/// Pools a 3x3 grid from every frame and channel. The box is in
/// feature-map coordinates with pixel `i` covering `[i, i + 1)`; each bin
/// averages 2x2 bilinear samples at its quarter points.
pub fn roi_align(feature_map: &Tensor4, bbox: &BBox, source: usize) -> Result<RoiFeature> {
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::EmptyRoi);
    }
    let [f, c, h, w] = feature_map.dims();
    // Half-pixel alignment: continuous coordinate u maps to index u - 0.5.
    let (x0, y0) = (bbox.x_min - 0.5, bbox.y_min - 0.5);
    let bin_w = bbox.width() / ROI_GRID as f64;
    let bin_h = bbox.height() / ROI_GRID as f64;
    let n = ROI_SAMPLING_RATIO;
    let mut values = Vec::with_capacity(f * c * ROI_GRID * ROI_GRID);
    for fi in 0..f {
        for ci in 0..c {
            let plane = feature_map.plane(fi, ci);
            for by in 0..ROI_GRID {
                for bx in 0..ROI_GRID {
                    let mut acc = 0.0;
                    for sy in 0..n {
                        let y = y0 + by as f64 * bin_h + (sy as f64 + 0.5) * bin_h / n as f64;
                        for sx in 0..n {
                            let x =
                                x0 + bx as f64 * bin_w + (sx as f64 + 0.5) * bin_w / n as f64;
                            acc += bilinear(plane, h, w, y, x);
                        }
                    }
                    values.push(acc / (n * n) as f64);
                }
            }
        }
    }
    Ok(RoiFeature { values, source })
}

/// Pairwise cosine similarities.
pub fn cosine_matrix(features: &[RoiFeature]) -> Result<Vec<Vec<f64>>> {
    let norms: Vec<f64> = features
        .iter()
        .map(|f| f.values.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNormFeature(i));
    }
    let n = features.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        out[i][i] = 1.0;
        for j in i + 1..n {
            let dot: f64 = features[i]
                .values
                .iter()
                .zip(&features[j].values)
                .map(|(a, b)| a * b)
                .sum();
            let c = dot / (norms[i] * norms[j]);
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    Ok(out)
}

/// Row-stochastic `N x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    rows: Vec<Vec<f64>>,
}

impl RelationMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Row-wise softmax (max-subtracted).
pub fn relation_matrix(cos: &[Vec<f64>]) -> RelationMatrix {
    let rows = cos
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|v| v / z).collect()
        })
        .collect();
    RelationMatrix { rows }
}

/// `sum_i sum_j p_ij ln(p_ij / q_ij)` with `0 ln 0 = 0`.
pub fn kl_rowwise(p: &RelationMatrix, q: &RelationMatrix) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch(p.n(), q.n()));
    }
    let mut total = 0.0;
    for (pr, qr) in p.rows.iter().zip(&q.rows) {
        if pr.len() != qr.len() {
            return Err(Error::DimensionMismatch(pr.len(), qr.len()));
        }
        for (&a, &b) in pr.iter().zip(qr) {
            if a > 0.0 {
                total += a * (a / b).ln();
            }
        }
    }
    Ok(total)
}

/// KL from the reference branch's relation matrix to the other branch's.
pub fn kl_loss(
    report: &ReliabilityReport,
    m_v: &RelationMatrix,
    m_t: &RelationMatrix,
) -> Result<f64> {
    let n = report.n_used();
    for m in [m_v, m_t] {
        if m.n() != n {
            return Err(Error::DimensionMismatch(n, m.n()));
        }
    }
    if report.thermal_dominant() {
        kl_rowwise(m_t, m_v)
    } else {
        kl_rowwise(m_v, m_t)
    }
}

/// Detector losses plus the weighted KL term.
pub fn total_loss(
    l_reg_v: f64,
    l_reg_t: f64,
    l_obj_v: f64,
    l_obj_t: f64,
    l_kl: f64,
    beta: f64,
) -> f64 {
    l_reg_v + l_reg_t + l_obj_v + l_obj_t + beta * l_kl
}

/// Everything produced by one single-scale KL evaluation.
#[derive(Debug, Clone)]
pub struct KlOutcome {
    pub report: ReliabilityReport,
    pub m_v: RelationMatrix,
    pub m_t: RelationMatrix,
    pub loss: f64,
}

/// Reliability, RoI pooling at the reference boxes, relation matrices and
/// the KL loss for one scale. Boxes are in image pixels and are mapped to
/// the feature maps with `1 / stride`.
pub fn kl_alignment(
    vis: &[Detection],
    ir: &[Detection],
    gts: &[BBox],
    vis_features: &Tensor4,
    ir_features: &Tensor4,
    n_top: usize,
    stride: f64,
) -> Result<KlOutcome> {
    ir_features.ensure_dims("thermal features", vis_features.dims())?;
    let report = reliability(vis, ir, gts, n_top)?;
    let source = match report.reference {
        Modality::Thermal => ir,
        _ => vis,
    };
    let scale = 1.0 / stride;
    let mut f_v = Vec::with_capacity(report.n_used());
    let mut f_t = Vec::with_capacity(report.n_used());
    for &i in report.reference_indices() {
        let b = source[i].bbox.scaled(scale, scale);
        f_v.push(roi_align(vis_features, &b, i)?);
        f_t.push(roi_align(ir_features, &b, i)?);
    }
    let (m_v, m_t) = if f_v.is_empty() {
        (
            RelationMatrix { rows: Vec::new() },
            RelationMatrix { rows: Vec::new() },
        )
    } else {
        (
            relation_matrix(&cosine_matrix(&f_v)?),
            relation_matrix(&cosine_matrix(&f_t)?),
        )
    };
    let loss = kl_loss(&report, &m_v, &m_t)?;
    Ok(KlOutcome {
        report,
        m_v,
        m_t,
        loss,
    })
}

/// Percentage of valid (image, scale) instances where the thermal branch
/// is the more reliable one. Absent reports and instances where no
/// detection overlaps the ground truth are skipped.
pub fn thermal_reliability_percentage<'a, I>(reports: I) -> Result<f64>
where
    I: IntoIterator<Item = Option<&'a ReliabilityReport>>,
{
    let (mut thermal, mut valid) = (0usize, 0usize);
    for report in reports.into_iter().flatten() {
        if !report.any_overlap {
            continue;
        }
        valid += 1;
        if report.thermal_dominant() {
            thermal += 1;
        }
    }
    if valid == 0 {
        return Err(Error::NoValidInstances);
    }
    Ok(100.0 * thermal as f64 / valid as f64)
}

/// Complement of [`thermal_reliability_percentage`]. For any `t` in
/// `[0, 100]`, `t + (100 - t)` rounds back to exactly 100.
pub fn visible_reliability_percentage(thermal_percent: f64) -> f64 {
    100.0 - thermal_percent
}
