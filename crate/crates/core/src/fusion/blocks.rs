//! Mixing blocks of the strip fusion module.

use crate::error::{Error, Result};
use crate::tensor::{NdArray, Tensor4};

use super::conv::{conv2d, pointwise_mlp, strip_conv};
use super::params::{CgsfmmParams, ChannelMixingParams, LsfmmParams, TemporalParams};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const GRN_EPS: f64 = 1e-6;

/// Stacks the two modalities along H with alternating rows: output row
/// `2i` is visible row `i`, row `2i + 1` is thermal row `i`.
pub fn interleave_rows(vis: &Tensor4, ir: &Tensor4) -> Result<Tensor4> {
    ir.ensure_dims("thermal input", vis.dims())?;
    let [f, c, h, w] = vis.dims();
    let mut out = Tensor4::zeros([f, c, 2 * h, w]);
    for fi in 0..f {
        for ci in 0..c {
            let (v, t) = (vis.plane(fi, ci), ir.plane(fi, ci));
            let dst = out.plane_mut(fi, ci);
            for y in 0..h {
                dst[(2 * y) * w..(2 * y + 1) * w].copy_from_slice(&v[y * w..(y + 1) * w]);
                dst[(2 * y + 1) * w..(2 * y + 2) * w].copy_from_slice(&t[y * w..(y + 1) * w]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`interleave_rows`].
pub fn deinterleave_rows(x: &Tensor4) -> Result<(Tensor4, Tensor4)> {
    let [f, c, h2, w] = x.dims();
    if h2 % 2 != 0 {
        return Err(Error::Indivisible {
            what: "interleaved height".into(),
            value: h2,
            divisor: 2,
        });
    }
    let h = h2 / 2;
    let mut vis = Tensor4::zeros([f, c, h, w]);
    let mut ir = Tensor4::zeros([f, c, h, w]);
    for fi in 0..f {
        for ci in 0..c {
            let src = x.plane(fi, ci);
            let v = vis.plane_mut(fi, ci);
            for y in 0..h {
                v[y * w..(y + 1) * w].copy_from_slice(&src[(2 * y) * w..(2 * y + 1) * w]);
            }
            let t = ir.plane_mut(fi, ci);
            for y in 0..h {
                t[y * w..(y + 1) * w].copy_from_slice(&src[(2 * y + 1) * w..(2 * y + 2) * w]);
            }
        }
    }
    Ok((vis, ir))
}

fn group_kernel(k: &NdArray, g: usize) -> NdArray {
    let [_, cg, kh, kw] = [k.dims[0], k.dims[1], k.dims[2], k.dims[3]];
    let n = cg * kh * kw;
    NdArray {
        dims: vec![cg, 1, kh, kw],
        data: k.data[g * n..(g + 1) * n].to_vec(),
    }
}

/// Cascade-group strip mixing. Channels are split into `N_g` groups; group
/// `g` sees its own slice plus the output of group `g - 1`, then runs a row
/// strip followed by a column strip.
pub fn cgsfmm(x: &Tensor4, params: &CgsfmmParams) -> Result<Tensor4> {
    let c = x.channels();
    let groups = params.groups();
    if groups == 0 || c % groups != 0 {
        return Err(Error::Indivisible {
            what: "cascade-group channels".into(),
            value: c,
            divisor: groups,
        });
    }
    let cg = c / groups;
    params
        .row
        .ensure_dims("cgsfmm.row", &[groups, cg, params.row.dims[2], params.row.dims[3]])?;
    params
        .col
        .ensure_dims("cgsfmm.col", &[groups, cg, params.col.dims[2], params.col.dims[3]])?;
    let mut outputs: Vec<Tensor4> = Vec::with_capacity(groups);
    for g in 0..groups {
        let slice = x.channel_slice(g * cg, cg);
        let input = match outputs.last() {
            Some(prev) => slice.add(prev)?,
            None => slice,
        };
        let rows = strip_conv(&input, &group_kernel(&params.row, g))?;
        outputs.push(strip_conv(&rows, &group_kernel(&params.col, g))?);
    }
    let refs: Vec<&Tensor4> = outputs.iter().collect();
    Tensor4::concat_channels(&refs)
}

/// Per-frame, per-channel softmax gates `[g_height, g_width, g_identity]`
/// computed from the strip branch outputs. Indexed `[frame][channel]`.
pub fn lsfmm_gates(
    height_branch: &Tensor4,
    width_branch: &Tensor4,
    params: &LsfmmParams,
) -> Result<Vec<Vec<[f64; 3]>>> {
    let [f, c, h, w] = height_branch.dims();
    params
        .reweight
        .weight
        .ensure_dims("lsfmm.reweight.weight", &[3 * c, c])?;
    let mixed = pointwise_mlp("lsfmm.mlp", &height_branch.add(width_branch)?, &params.mlp)?;
    let area = (h * w) as f64;
    let mut gates = Vec::with_capacity(f);
    for fi in 0..f {
        let pooled: Vec<f64> = (0..c)
            .map(|ci| mixed.plane(fi, ci).iter().sum::<f64>() / area)
            .collect();
        let logits: Vec<f64> = (0..3 * c)
            .map(|o| {
                let row = &params.reweight.weight.data[o * c..(o + 1) * c];
                params.reweight.bias.data[o]
                    + row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let frame_gates = (0..c)
            .map(|ci| {
                let l = &logits[3 * ci..3 * ci + 3];
                let m = l[0].max(l[1]).max(l[2]);
                let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp()];
                let z = e[0] + e[1] + e[2];
                [e[0] / z, e[1] / z, e[2] / z]
            })
            .collect();
        gates.push(frame_gates);
    }
    Ok(gates)
}

/// Local strip mixing: `g1 * height(x) + g2 * width(x) + g3 * x` with
/// softmax gates from pooled MLP features.
pub fn lsfmm(x: &Tensor4, params: &LsfmmParams) -> Result<Tensor4> {
    let c = x.channels();
    for (name, k) in [("lsfmm.height", &params.height), ("lsfmm.width", &params.width)] {
        if k.dims.len() != 4 || k.dims[0] != c || k.dims[1] != 1 {
            return Err(Error::shape(name, &[c, 1, 0, 0], &k.dims));
        }
    }
    let r = strip_conv(x, &params.height)?;
    let col = strip_conv(x, &params.width)?;
    let gates = lsfmm_gates(&r, &col, params)?;
    let [f, _, h, w] = x.dims();
    let mut out = Tensor4::zeros(x.dims());
    for fi in 0..f {
        for ci in 0..c {
            let [g1, g2, g3] = gates[fi][ci];
            let (rp, cp, xp) = (r.plane(fi, ci), col.plane(fi, ci), x.plane(fi, ci));
            let dst = out.plane_mut(fi, ci);
            for p in 0..h * w {
                dst[p] = g1 * rp[p] + g2 * cp[p] + g3 * xp[p];
            }
        }
    }
    Ok(out)
}

/// Global response normalization: each channel scaled by its spatial L2
/// norm relative to the mean norm across channels.
pub fn grn(x: &Tensor4, gamma: &NdArray, beta: &NdArray) -> Result<Tensor4> {
    let [f, c, _, _] = x.dims();
    gamma.ensure_dims("grn.gamma", &[c])?;
    beta.ensure_dims("grn.beta", &[c])?;
    let mut out = x.clone();
    for fi in 0..f {
        let norms: Vec<f64> = (0..c)
            .map(|ci| x.plane(fi, ci).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mean = norms.iter().sum::<f64>() / c as f64;
        for ci in 0..c {
            let n = norms[ci] / (mean + GRN_EPS);
            let (g, b) = (gamma.data[ci], beta.data[ci]);
            for v in out.plane_mut(fi, ci) {
                *v = g * (*v * n) + b + *v;
            }
        }
    }
    Ok(out)
}

/// Grouped large-kernel conv, GRN, pointwise MLP, then a residual add.
pub fn channel_mixing(x: &Tensor4, params: &ChannelMixingParams) -> Result<Tensor4> {
    let groups = params.groups();
    let conv = conv2d(
        "mixing.conv.weight",
        x,
        &params.conv,
        Some(&params.conv_bias),
        groups,
    )?;
    let normed = grn(&conv, &params.grn_gamma, &params.grn_beta)?;
    let mixed = pointwise_mlp("mixing.mlp", &normed, &params.mlp)?;
    x.add(&mixed)
}

/// Frame/patch token layout used by the temporal mixer: a dense
/// `(F * P, C, 2S)` array where token `f * P + p` holds patch `p` of frame
/// `f`, visible pixels first then thermal.
pub(crate) struct PatchTokens {
    pub two_s: usize,
    pub data: Vec<f64>,
}

pub(crate) fn patchify(vis: &Tensor4, ir: &Tensor4, s: usize) -> PatchTokens {
    let [f, c, h, w] = vis.dims();
    let (ph, pw) = (h / s, w / s);
    let p = ph * pw;
    let ss = s * s;
    let two_s = 2 * ss;
    let mut data = vec![0.0; f * p * c * two_s];
    for fi in 0..f {
        for py in 0..ph {
            for px in 0..pw {
                let token = fi * p + py * pw + px;
                for ci in 0..c {
                    let base = (token * c + ci) * two_s;
                    for k in 0..ss {
                        let (y, x) = (py * s + k / s, px * s + k % s);
                        data[base + k] = vis.at(fi, ci, y, x);
                        data[base + ss + k] = ir.at(fi, ci, y, x);
                    }
                }
            }
        }
    }
    PatchTokens { two_s, data }
}

pub(crate) fn unpatchify(tokens: &PatchTokens, dims: [usize; 4], s: usize) -> (Tensor4, Tensor4) {
    let [f, c, h, w] = dims;
    let (ph, pw) = (h / s, w / s);
    let p = ph * pw;
    let ss = s * s;
    let mut vis = Tensor4::zeros(dims);
    let mut ir = Tensor4::zeros(dims);
    for fi in 0..f {
        for py in 0..ph {
            for px in 0..pw {
                let token = fi * p + py * pw + px;
                for ci in 0..c {
                    let base = (token * c + ci) * tokens.two_s;
                    for k in 0..ss {
                        let (y, x) = (py * s + k / s, px * s + k % s);
                        *vis.at_mut(fi, ci, y, x) = tokens.data[base + k];
                        *ir.at_mut(fi, ci, y, x) = tokens.data[base + ss + k];
                    }
                }
            }
        }
    }
    (vis, ir)
}

/// Patches both modalities, layer-normalizes each `2S` token row, mixes
/// across the merged frame/patch axis with MLP-2, and adds the result back
/// onto the inputs.
pub fn temporal_fuse(
    vis: &Tensor4,
    ir: &Tensor4,
    params: &TemporalParams,
    s: usize,
) -> Result<(Tensor4, Tensor4)> {
    ir.ensure_dims("thermal input", vis.dims())?;
    let [f, c, h, w] = vis.dims();
    for (what, v) in [("height", h), ("width", w)] {
        if s == 0 || v % s != 0 {
            return Err(Error::Indivisible {
                what: format!("{what} (patch size)"),
                value: v,
                divisor: s,
            });
        }
    }
    let p = (h / s) * (w / s);
    let fp = f * p;
    let two_s = 2 * s * s;
    params.norm_weight.ensure_dims("temporal.norm.weight", &[two_s])?;
    params.norm_bias.ensure_dims("temporal.norm.bias", &[two_s])?;
    params.mlp2.weight.ensure_dims("temporal.mlp2.weight", &[fp, fp])?;
    params.mlp2.bias.ensure_dims("temporal.mlp2.bias", &[fp])?;

    let mut tokens = patchify(vis, ir, s);
    for row in tokens.data.chunks_mut(two_s) {
        let mean = row.iter().sum::<f64>() / two_s as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / two_s as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (k, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * params.norm_weight.data[k] + params.norm_bias.data[k];
        }
    }

    // (FP, C, 2S) viewed as C * 2S independent sequences of length FP.
    let stride = c * two_s;
    let mut mixed = vec![0.0; tokens.data.len()];
    for out_t in 0..fp {
        let wrow = &params.mlp2.weight.data[out_t * fp..(out_t + 1) * fp];
        let dst = &mut mixed[out_t * stride..(out_t + 1) * stride];
        dst.iter_mut().for_each(|v| *v = params.mlp2.bias.data[out_t]);
        for (in_t, &k) in wrow.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            let src = &tokens.data[in_t * stride..(in_t + 1) * stride];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    tokens.data = mixed;
    let (dv, di) = unpatchify(&tokens, [f, c, h, w], s);
    Ok((vis.add(&dv)?, ir.add(&di)?))
}
