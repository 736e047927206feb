//! Straight-line reference implementations used as test oracles. Nothing
//! here calls into the library's numerical code; only plain data types are
//! shared.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use stripfusion::tensor::NdArray;
use stripfusion::{BBox, Detection, Tensor4};

/// Dense `(F, C, H, W)` buffer with bounds-checked accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub f: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl Dense {
    pub fn zeros(f: usize, c: usize, h: usize, w: usize) -> Self {
        Self { f, c, h, w, d: vec![0.0; f * c * h * w] }
    }

    pub fn from_tensor(t: &Tensor4) -> Self {
        let [f, c, h, w] = t.dims();
        Self { f, c, h, w, d: t.data().to_vec() }
    }

    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec([self.f, self.c, self.h, self.w], self.d.clone()).unwrap()
    }

    fn idx(&self, f: usize, c: usize, y: usize, x: usize) -> usize {
        assert!(f < self.f && c < self.c && y < self.h && x < self.w);
        ((f * self.c + c) * self.h + y) * self.w + x
    }

    pub fn get(&self, f: usize, c: usize, y: usize, x: usize) -> f64 {
        self.d[self.idx(f, c, y, x)]
    }

    /// Zero outside the plane.
    pub fn get_padded(&self, f: usize, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.get(f, c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, f: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(f, c, y, x);
        self.d[i] = v;
    }

    pub fn channels(&self, start: usize, n: usize) -> Dense {
        let mut out = Dense::zeros(self.f, n, self.h, self.w);
        for f in 0..self.f {
            for c in 0..n {
                for y in 0..self.h {
                    for x in 0..self.w {
                        out.set(f, c, y, x, self.get(f, start + c, y, x));
                    }
                }
            }
        }
        out
    }

    pub fn plus(&self, o: &Dense) -> Dense {
        assert_eq!((self.f, self.c, self.h, self.w), (o.f, o.c, o.h, o.w));
        let d = self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect();
        Dense { d, ..*self }
    }
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_array<R: Rng>(dims: &[usize], rng: &mut R) -> NdArray {
    let n = dims.iter().product();
    NdArray::new(dims.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn w4(a: &NdArray, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
    let [_, ci, kh, kw] = [a.dims[0], a.dims[1], a.dims[2], a.dims[3]];
    a.data[((o * ci + i) * kh + ky) * kw + kx]
}

/// Grouped 2-D cross-correlation with zero "same" padding.
pub fn naive_conv(x: &Dense, weight: &NdArray, bias: Option<&NdArray>, groups: usize) -> Dense {
    let (c_out, per_group, kh, kw) = (weight.dims[0], weight.dims[1], weight.dims[2], weight.dims[3]);
    assert_eq!(per_group * groups, x.c);
    let out_per_group = c_out / groups;
    let mut out = Dense::zeros(x.f, c_out, x.h, x.w);
    for f in 0..x.f {
        for o in 0..c_out {
            let g = o / out_per_group;
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = bias.map_or(0.0, |b| b.data[o]);
                    for i in 0..per_group {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let sy = y as isize + ky as isize - (kh / 2) as isize;
                                let sx = xx as isize + kx as isize - (kw / 2) as isize;
                                acc += w4(weight, o, i, ky, kx)
                                    * x.get_padded(f, g * per_group + i, sy, sx);
                            }
                        }
                    }
                    out.set(f, o, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Per-pixel `W x + b` over channels.
pub fn naive_affine(x: &Dense, weight: &NdArray, bias: &NdArray) -> Dense {
    let (c_out, c_in) = (weight.dims[0], weight.dims[1]);
    assert_eq!(c_in, x.c);
    let mut out = Dense::zeros(x.f, c_out, x.h, x.w);
    for f in 0..x.f {
        for y in 0..x.h {
            for xx in 0..x.w {
                for o in 0..c_out {
                    let mut acc = bias.data[o];
                    for i in 0..c_in {
                        acc += weight.data[o * c_in + i] * x.get(f, i, y, xx);
                    }
                    out.set(f, o, y, xx, acc);
                }
            }
        }
    }
    out
}

pub fn gelu_tanh(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (k * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn naive_mlp(x: &Dense, w: &BTreeMap<String, NdArray>, prefix: &str) -> Dense {
    let p = |s: &str| &w[&format!("{prefix}.{s}")];
    let mut hidden = naive_affine(x, p("fc1.weight"), p("fc1.bias"));
    hidden.d.iter_mut().for_each(|v| *v = gelu_tanh(*v));
    naive_affine(&hidden, p("fc2.weight"), p("fc2.bias"))
}

/// `(N, Cg, kh, kw)` -> the `(Cg, 1, kh, kw)` kernel of group `g`.
pub fn group_slice(k: &NdArray, g: usize) -> NdArray {
    let per = k.dims[1] * k.dims[2] * k.dims[3];
    NdArray::new(vec![k.dims[1], 1, k.dims[2], k.dims[3]], k.data[g * per..(g + 1) * per].to_vec())
        .unwrap()
}

pub fn ref_cgsfmm(x: &Dense, row: &NdArray, col: &NdArray) -> Dense {
    let groups = row.dims[0];
    let cg = x.c / groups;
    let mut out = Dense::zeros(x.f, x.c, x.h, x.w);
    let mut prev: Option<Dense> = None;
    for g in 0..groups {
        let mut input = x.channels(g * cg, cg);
        if let Some(p) = &prev {
            input = input.plus(p);
        }
        let r = naive_conv(&input, &group_slice(row, g), None, cg);
        let y = naive_conv(&r, &group_slice(col, g), None, cg);
        for f in 0..x.f {
            for c in 0..cg {
                for yy in 0..x.h {
                    for xx in 0..x.w {
                        out.set(f, g * cg + c, yy, xx, y.get(f, c, yy, xx));
                    }
                }
            }
        }
        prev = Some(y);
    }
    out
}

pub fn ref_lsfmm(x: &Dense, w: &BTreeMap<String, NdArray>) -> Dense {
    let c = x.c;
    let r = naive_conv(x, &w["lsfmm.height"], None, c);
    let col = naive_conv(x, &w["lsfmm.width"], None, c);
    let m = naive_mlp(&r.plus(&col), w, "lsfmm.mlp");
    let (rw, rb) = (&w["lsfmm.reweight.weight"], &w["lsfmm.reweight.bias"]);
    let mut out = Dense::zeros(x.f, c, x.h, x.w);
    for f in 0..x.f {
        let mut pooled = vec![0.0; c];
        for (ch, p) in pooled.iter_mut().enumerate() {
            let mut s = 0.0;
            for y in 0..x.h {
                for xx in 0..x.w {
                    s += m.get(f, ch, y, xx);
                }
            }
            *p = s / (x.h * x.w) as f64;
        }
        for ch in 0..c {
            let logit = |k: usize| {
                let o = 3 * ch + k;
                rb.data[o] + (0..c).map(|i| rw.data[o * c + i] * pooled[i]).sum::<f64>()
            };
            let e = [logit(0).exp(), logit(1).exp(), logit(2).exp()];
            let z = e[0] + e[1] + e[2];
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = e[0] / z * r.get(f, ch, y, xx)
                        + e[1] / z * col.get(f, ch, y, xx)
                        + e[2] / z * x.get(f, ch, y, xx);
                    out.set(f, ch, y, xx, v);
                }
            }
        }
    }
    out
}

pub fn ref_grn(x: &Dense, gamma: &NdArray, beta: &NdArray) -> Dense {
    let mut out = x.clone();
    for f in 0..x.f {
        let norms: Vec<f64> = (0..x.c)
            .map(|c| {
                let mut s = 0.0;
                for y in 0..x.h {
                    for xx in 0..x.w {
                        s += x.get(f, c, y, xx).powi(2);
                    }
                }
                s.sqrt()
            })
            .collect();
        let mean = norms.iter().sum::<f64>() / x.c as f64;
        for c in 0..x.c {
            let n = norms[c] / (mean + 1e-6);
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = x.get(f, c, y, xx);
                    out.set(f, c, y, xx, gamma.data[c] * v * n + beta.data[c] + v);
                }
            }
        }
    }
    out
}

pub fn ref_channel_mixing(x: &Dense, w: &BTreeMap<String, NdArray>) -> Dense {
    let k = &w["mixing.conv.weight"];
    let groups = x.c / k.dims[1];
    let conv = naive_conv(x, k, Some(&w["mixing.conv.bias"]), groups);
    let g = ref_grn(&conv, &w["mixing.grn.gamma"], &w["mixing.grn.beta"]);
    x.plus(&naive_mlp(&g, w, "mixing.mlp"))
}

/// Layer norm over each token's `2 s^2` patch values per channel, token
/// mixing with MLP-2, residual add.
pub fn ref_temporal(vis: &Dense, ir: &Dense, w: &BTreeMap<String, NdArray>, s: usize) -> (Dense, Dense) {
    let (pw, ph) = (vis.w / s, vis.h / s);
    let p = pw * ph;
    let fp = vis.f * p;
    let ss = s * s;
    let (gam, bet) = (&w["temporal.norm.weight"], &w["temporal.norm.bias"]);
    let (mw, mb) = (&w["temporal.mlp2.weight"], &w["temporal.mlp2.bias"]);
    let coord = |t: usize, k: usize| {
        let (f, q) = (t / p, t % p);
        let (py, px) = (q / pw, q % pw);
        (f, py * s + (k % ss) / s, px * s + (k % ss) % s)
    };
    // normed[t][c][k]
    let mut normed = vec![vec![vec![0.0; 2 * ss]; vis.c]; fp];
    for (t, tok) in normed.iter_mut().enumerate() {
        for (c, row) in tok.iter_mut().enumerate() {
            let vals: Vec<f64> = (0..2 * ss)
                .map(|k| {
                    let (f, y, x) = coord(t, k);
                    if k < ss { vis.get(f, c, y, x) } else { ir.get(f, c, y, x) }
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            for k in 0..2 * ss {
                row[k] = (vals[k] - mean) / (var + 1e-5).sqrt() * gam.data[k] + bet.data[k];
            }
        }
    }
    let (mut ov, mut oi) = (vis.clone(), ir.clone());
    for t in 0..fp {
        for c in 0..vis.c {
            for k in 0..2 * ss {
                let mut acc = mb.data[t];
                for u in 0..fp {
                    acc += mw.data[t * fp + u] * normed[u][c][k];
                }
                let (f, y, x) = coord(t, k);
                if k < ss {
                    ov.set(f, c, y, x, vis.get(f, c, y, x) + acc);
                } else {
                    oi.set(f, c, y, x, ir.get(f, c, y, x) + acc);
                }
            }
        }
    }
    (ov, oi)
}

/// Branch front end: depthwise, pointwise, MLP-1.
pub fn ref_branch(x: &Dense, w: &BTreeMap<String, NdArray>, m: &str) -> Dense {
    let p = |s: &str| &w[&format!("{m}.{s}")];
    let d = naive_conv(x, p("dws.depthwise"), None, x.c);
    let pw = naive_affine(&d, p("dws.pointwise.weight"), p("dws.pointwise.bias"));
    naive_affine(&pw, p("mlp1.weight"), p("mlp1.bias"))
}

/// Full module, written from the dataflow description.
pub fn reference_forward(
    vis: &Tensor4,
    ir: &Tensor4,
    weights: &[(String, NdArray)],
    patch: usize,
) -> (Tensor4, Tensor4) {
    let w: BTreeMap<String, NdArray> = weights.iter().cloned().collect();
    let v1 = ref_branch(&Dense::from_tensor(vis), &w, "vis");
    let i1 = ref_branch(&Dense::from_tensor(ir), &w, "ir");
    let (f, c, h, wd) = (v1.f, v1.c, v1.h, v1.w);

    let mut z = Dense::zeros(f, c, 2 * h, wd);
    for fi in 0..f {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..wd {
                    z.set(fi, ci, 2 * y, x, v1.get(fi, ci, y, x));
                    z.set(fi, ci, 2 * y + 1, x, i1.get(fi, ci, y, x));
                }
            }
        }
    }
    let half = c / 2;
    let a = ref_cgsfmm(&z.channels(0, half), &w["cgsfmm.row"], &w["cgsfmm.col"]);
    let b = ref_lsfmm(&z.channels(half, half), &w);
    let mut cat = Dense::zeros(f, c, 2 * h, wd);
    for fi in 0..f {
        for ci in 0..c {
            for y in 0..2 * h {
                for x in 0..wd {
                    let v = if ci < half { a.get(fi, ci, y, x) } else { b.get(fi, ci - half, y, x) };
                    cat.set(fi, ci, y, x, v);
                }
            }
        }
    }
    let merged = naive_affine(&cat, &w["merge.weight"], &w["merge.bias"]);
    let (mut dv, mut di) = (Dense::zeros(f, c, h, wd), Dense::zeros(f, c, h, wd));
    for fi in 0..f {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..wd {
                    dv.set(fi, ci, y, x, merged.get(fi, ci, 2 * y, x));
                    di.set(fi, ci, y, x, merged.get(fi, ci, 2 * y + 1, x));
                }
            }
        }
    }
    let v2 = ref_channel_mixing(&dv.plus(&v1), &w);
    let i2 = ref_channel_mixing(&di.plus(&i1), &w);
    let (vo, io) = ref_temporal(&v2, &i2, &w, patch);
    (vo.to_tensor(), io.to_tensor())
}

// ---- post-processing -------------------------------------------------

pub fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let area = |r: &BBox| (r.x_max - r.x_min) * (r.y_max - r.y_min);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 { 0.0 } else { inter / union }
}

/// `(frame, hull, mean score, vis index, ir index)` for every confident
/// cross-modal pair of the same frame at or above `iou_thres`.
pub fn brute_pairs(
    vis: &[Detection],
    ir: &[Detection],
    conf_v: f64,
    conf_t: f64,
    iou_thres: f64,
) -> Vec<(String, BBox, f64, usize, usize)> {
    let mut frames: Vec<&str> = vis.iter().chain(ir).map(|d| d.frame_id.as_str()).collect();
    frames.sort();
    frames.dedup();
    let mut out = Vec::new();
    for fr in frames {
        let vs: Vec<usize> = (0..vis.len()).filter(|&i| vis[i].frame_id == fr && vis[i].score >= conf_v).collect();
        let ts: Vec<usize> = (0..ir.len()).filter(|&j| ir[j].frame_id == fr && ir[j].score >= conf_t).collect();
        for &i in &vs {
            for &j in &ts {
                let (a, b) = (&vis[i].bbox, &ir[j].bbox);
                if ref_iou(a, b) >= iou_thres {
                    let hull = BBox {
                        x_min: a.x_min.min(b.x_min),
                        y_min: a.y_min.min(b.y_min),
                        x_max: a.x_max.max(b.x_max),
                        y_max: a.y_max.max(b.y_max),
                    };
                    out.push((fr.to_string(), hull, (vis[i].score + ir[j].score) / 2.0, i, j));
                }
            }
        }
    }
    out
}

/// The unique subset `K` of `dets` (one frame) such that a box is in `K`
/// exactly when no higher-ranked member of `K` overlaps it above `thr`.
/// Rank is descending score, ties by input position. Checked against every
/// pair, and returned in rank order.
pub fn brute_suppression(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let n = dets.len();
    let rank_before = |a: usize, b: usize| dets[a].score > dets[b].score || (dets[a].score == dets[b].score && a < b);
    let mut order: Vec<usize> = (0..n).collect();
    // Selection by counting how many boxes outrank each one.
    order.sort_by_key(|&i| (0..n).filter(|&j| rank_before(j, i)).count());
    let mut kept = vec![false; n];
    for &i in &order {
        kept[i] = (0..n).all(|j| !(kept[j] && rank_before(j, i) && ref_iou(&dets[j].bbox, &dets[i].bbox) > thr));
    }
    // Exhaustive consistency check of the defining property.
    for i in 0..n {
        let blocked = (0..n).any(|j| kept[j] && rank_before(j, i) && ref_iou(&dets[j].bbox, &dets[i].bbox) > thr);
        assert_eq!(kept[i], !blocked);
    }
    order.into_iter().filter(|&i| kept[i]).map(|i| dets[i].clone()).collect()
}

/// Suppression applied frame by frame, frames in id order.
pub fn brute_nms_frames(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let mut frames: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        frames.entry(d.frame_id.as_str()).or_default().push(d.clone());
    }
    frames.values().flat_map(|f| brute_suppression(f, thr)).collect()
}

// ---- reliability and KL ----------------------------------------------

pub fn ref_ciou(p: &BBox, g: &BBox) -> f64 {
    let (pw, ph) = (p.x_max - p.x_min, p.y_max - p.y_min);
    let (gw, gh) = (g.x_max - g.x_min, g.y_max - g.y_min);
    let i = ref_iou(p, g);
    let rho2 = ((p.x_min + p.x_max) / 2.0 - (g.x_min + g.x_max) / 2.0).powi(2)
        + ((p.y_min + p.y_max) / 2.0 - (g.y_min + g.y_max) / 2.0).powi(2);
    let cw = p.x_max.max(g.x_max) - p.x_min.min(g.x_min);
    let ch = p.y_max.max(g.y_max) - p.y_min.min(g.y_min);
    let v = 4.0 / std::f64::consts::PI.powi(2) * ((gw / gh).atan() - (pw / ph).atan()).powi(2);
    let alpha = if v == 0.0 { 0.0 } else { v / ((1.0 - i) + v) };
    i - rho2 / (cw * cw + ch * ch) - alpha * v
}

/// Mean of the best `n` per-detection CIoU values and the detection
/// indices they came from, best first.
pub fn ref_reliability(dets: &[Detection], gts: &[BBox], n: usize) -> (f64, Vec<usize>) {
    let mut scored: Vec<(f64, usize)> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| (gts.iter().map(|g| ref_ciou(&d.bbox, g)).fold(f64::MIN, f64::max), i))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(n);
    if scored.is_empty() {
        return (0.0, vec![]);
    }
    let mean = scored.iter().map(|s| s.0).sum::<f64>() / scored.len() as f64;
    (mean, scored.into_iter().map(|s| s.1).collect())
}

/// Bilinear read with the aligned RoIAlign border rules.
pub fn ref_bilinear(m: &Dense, f: usize, c: usize, y: f64, x: f64) -> f64 {
    let (h, w) = (m.h as f64, m.w as f64);
    if y < -1.0 || y > h || x < -1.0 || x > w {
        return 0.0;
    }
    let y = y.max(0.0).min(h - 1.0);
    let x = x.max(0.0).min(w - 1.0);
    let (y0, x0) = (y.floor(), x.floor());
    let (y1, x1) = ((y0 + 1.0).min(h - 1.0), (x0 + 1.0).min(w - 1.0));
    let (ly, lx) = (y - y0, x - x0);
    let g = |yy: f64, xx: f64| m.get(f, c, yy as usize, xx as usize);
    (1.0 - ly) * (1.0 - lx) * g(y0, x0)
        + (1.0 - ly) * lx * g(y0, x1)
        + ly * (1.0 - lx) * g(y1, x0)
        + ly * lx * g(y1, x1)
}

/// 3x3 bins, 2x2 samples per bin, half-pixel offset.
pub fn ref_roi_align(m: &Dense, b: &BBox) -> Vec<f64> {
    let mut out = Vec::new();
    let (bw, bh) = ((b.x_max - b.x_min) / 3.0, (b.y_max - b.y_min) / 3.0);
    for f in 0..m.f {
        for c in 0..m.c {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for (sy, sx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                        let y = b.y_min + (i as f64 + sy) * bh - 0.5;
                        let x = b.x_min + (j as f64 + sx) * bw - 0.5;
                        s += ref_bilinear(m, f, c, y, x);
                    }
                    out.push(s / 4.0);
                }
            }
        }
    }
    out
}

pub fn ref_relation(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len();
    let norm = |v: &Vec<f64>| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = features[i].iter().zip(&features[j]).map(|(a, b)| a * b).sum();
            m[i][j] = dot / (norm(&features[i]) * norm(&features[j]));
        }
        let z: f64 = m[i].iter().map(|v| v.exp()).sum();
        for j in 0..n {
            m[i][j] = m[i][j].exp() / z;
        }
    }
    m
}

pub fn ref_kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (pr, qr) in p.iter().zip(q) {
        for (a, b) in pr.iter().zip(qr) {
            if *a > 0.0 {
                s += a * (a / b).ln();
            }
        }
    }
    s
}

/// `(r_v, r_t, loss)` for one scale, boxes mapped to the maps by `1/stride`.
pub fn ref_kl_pipeline(
    vis: &[Detection],
    ir: &[Detection],
    gts: &[BBox],
    fv: &Tensor4,
    ft: &Tensor4,
    n_top: usize,
    stride: f64,
) -> (f64, f64, f64) {
    let (r_v, top_v) = ref_reliability(vis, gts, n_top);
    let (r_t, top_t) = ref_reliability(ir, gts, n_top);
    let thermal_ref = r_t > r_v;
    let (src, idx) = if thermal_ref { (ir, &top_t) } else { (vis, &top_v) };
    let (mv, mt) = (Dense::from_tensor(fv), Dense::from_tensor(ft));
    let boxes: Vec<BBox> = idx
        .iter()
        .map(|&i| {
            let b = src[i].bbox;
            BBox { x_min: b.x_min / stride, y_min: b.y_min / stride, x_max: b.x_max / stride, y_max: b.y_max / stride }
        })
        .collect();
    let pv: Vec<Vec<f64>> = boxes.iter().map(|b| ref_roi_align(&mv, b)).collect();
    let pt: Vec<Vec<f64>> = boxes.iter().map(|b| ref_roi_align(&mt, b)).collect();
    let (rv, rt) = (ref_relation(&pv), ref_relation(&pt));
    let loss = if thermal_ref { ref_kl(&rt, &rv) } else { ref_kl(&rv, &rt) };
    (r_v, r_t, loss)
}

// ---- random inputs ---------------------------------------------------

pub fn random_box<R: Rng>(rng: &mut R, extent: f64, min_side: f64, max_side: f64) -> BBox {
    let w = rng.gen_range(min_side..max_side);
    let h = rng.gen_range(min_side..max_side);
    let x = rng.gen_range(0.0..extent);
    let y = rng.gen_range(0.0..extent);
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Up to `max_per` detections per modality, spread over `frames` frames
/// and all three scales. Thermal boxes are often jittered copies of visible
/// ones so that pairs exist.
pub fn random_detections<R: Rng>(
    rng: &mut R,
    frames: usize,
    max_per: usize,
) -> (Vec<Detection>, Vec<Detection>) {
    use stripfusion::{Modality, Scale};
    let nv = rng.gen_range(0..=max_per);
    let nt = rng.gen_range(0..=max_per);
    let mut vis = Vec::new();
    for _ in 0..nv {
        let f = format!("f{}", rng.gen_range(0..frames));
        let s = Scale::ALL[rng.gen_range(0..3)];
        let b = random_box(rng, 60.0, 4.0, 30.0);
        vis.push(Detection::new(f, Modality::Visible, s, b, rng.gen_range(0.0..=1.0)).unwrap());
    }
    let mut ir = Vec::new();
    for _ in 0..nt {
        let (f, s, b) = if !vis.is_empty() && rng.gen_bool(0.6) {
            let v = &vis[rng.gen_range(0..vis.len())];
            let j = |r: &mut R| r.gen_range(-3.0..3.0);
            let b = v.bbox;
            let (x0, y0) = (b.x_min + j(rng), b.y_min + j(rng));
            let nb = BBox::new(x0, y0, x0.max(b.x_max + j(rng)) + 0.5, y0.max(b.y_max + j(rng)) + 0.5).unwrap();
            (v.frame_id.clone(), v.scale, nb)
        } else {
            (
                format!("f{}", rng.gen_range(0..frames)),
                Scale::ALL[rng.gen_range(0..3)],
                random_box(rng, 60.0, 4.0, 30.0),
            )
        };
        // Coarse scores make exact ties common.
        let score = (rng.gen_range(0.0..=1.0f64) * 20.0).round() / 20.0;
        ir.push(Detection::new(f, Modality::Thermal, s, b, score).unwrap());
    }
    (vis, ir)
}

pub fn person(x: f64, y: f64, w: f64, h: f64, occ: stripfusion::evaluation::Occlusion) -> stripfusion::evaluation::GroundTruthBox {
    stripfusion::evaluation::GroundTruthBox::new(BBox::new(x, y, x + w, y + h).unwrap(), occ)
}

pub fn det_on(b: BBox, score: f64) -> Detection {
    Detection::new("f", stripfusion::Modality::Fused, stripfusion::Scale::S40, b, score).unwrap()
}

/// Three frames, four required boxes, one ignored box.
///
/// | score | frame | outcome |
/// |-------|-------|---------|
/// | 0.9   | A     | tp      |
/// | 0.8   | B     | fp      |
/// | 0.7   | C     | ignored |
/// | 0.6   | B     | tp      |
/// | 0.5   | A     | fp      |
/// | 0.3   | C     | fp      |
pub fn hand_corpus() -> Vec<(Vec<stripfusion::evaluation::GroundTruthBox>, Vec<Detection>)> {
    use stripfusion::evaluation::Occlusion;
    let g1 = person(0.0, 0.0, 30.0, 60.0, Occlusion::None);
    let g2 = person(100.0, 0.0, 30.0, 70.0, Occlusion::Partial);
    let g3 = person(0.0, 0.0, 30.0, 80.0, Occlusion::None);
    let g4 = person(0.0, 0.0, 30.0, 90.0, Occlusion::None);
    let short = person(200.0, 0.0, 25.0, 50.0, Occlusion::None);
    let far = |x: f64| BBox::new(x, 300.0, x + 30.0, 360.0).unwrap();
    vec![
        (vec![g1.clone(), g2], vec![det_on(g1.bbox, 0.9), det_on(far(0.0), 0.5)]),
        (vec![g3.clone()], vec![det_on(far(50.0), 0.8), det_on(g3.bbox, 0.6)]),
        (vec![g4, short.clone()], vec![det_on(short.bbox, 0.7), det_on(far(100.0), 0.3)]),
    ]
}

/// Reasonable-setting MR of [`hand_corpus`]: seven samples at miss rate
/// 0.75 and two at 0.5.
pub fn hand_corpus_mr() -> f64 {
    100.0 * (0.75f64.ln() * 7.0 / 9.0 + 0.5f64.ln() * 2.0 / 9.0).exp()
}
