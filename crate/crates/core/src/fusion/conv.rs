//! Convolution primitives with zero "same" padding.

use crate::error::{Error, Result};
use crate::tensor::{NdArray, Tensor4};

use super::params::{Affine, DwsConvParams, Mlp};

pub(crate) fn ensure_odd(name: &str, kh: usize, kw: usize) -> Result<()> {
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::EvenKernel {
            name: name.to_string(),
            kh,
            kw,
        });
    }
    Ok(())
}

/// Accumulates one `(kh, kw)` kernel applied to `src` into `dst`, both
/// `h x w` planes, with zero padding.
#[inline]
pub(crate) fn accumulate_plane(
    dst: &mut [f64],
    src: &[f64],
    kernel: &[f64],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    for ky in 0..kh {
        let dy = ky as isize - ph;
        let y_lo = (-dy).max(0) as usize;
        let y_hi = (h as isize - dy).min(h as isize).max(0) as usize;
        for kx in 0..kw {
            let k = kernel[ky * kw + kx];
            if k == 0.0 {
                continue;
            }
            let dx = kx as isize - pw;
            let x_lo = (-dx).max(0) as usize;
            let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
            for y in y_lo..y_hi {
                let sy = (y as isize + dy) as usize;
                let src_row = &src[sy * w..(sy + 1) * w];
                let dst_row = &mut dst[y * w..(y + 1) * w];
                for x in x_lo..x_hi {
                    dst_row[x] += k * src_row[(x as isize + dx) as usize];
                }
            }
        }
    }
}

/// Grouped 2-D convolution of a single frame, writing into `out` frame `f`.
/// `weight` is `(C_out, C_in / groups, kh, kw)` flattened.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_frame(
    x: &Tensor4,
    f: usize,
    weight: &[f64],
    c_out: usize,
    groups: usize,
    kh: usize,
    kw: usize,
    bias: Option<&[f64]>,
    out: &mut Tensor4,
) {
    let [_, c_in, h, w] = x.dims();
    let in_per_group = c_in / groups;
    let out_per_group = c_out / groups;
    let ksize = kh * kw;
    for o in 0..c_out {
        let g = o / out_per_group;
        let plane = out.plane_mut(f, o);
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..in_per_group {
            let c = g * in_per_group + i;
            let off = (o * in_per_group + i) * ksize;
            accumulate_plane(plane, x.plane(f, c), &weight[off..off + ksize], h, w, kh, kw);
        }
    }
}

/// Grouped convolution with zero "same" padding applied to every frame.
pub fn conv2d(
    name: &str,
    x: &Tensor4,
    weight: &NdArray,
    bias: Option<&NdArray>,
    groups: usize,
) -> Result<Tensor4> {
    let [f, c_in, h, w] = x.dims();
    if weight.dims.len() != 4 {
        return Err(Error::shape(name, &[0, 0, 0, 0], &weight.dims));
    }
    let (c_out, kh, kw) = (weight.dims[0], weight.dims[2], weight.dims[3]);
    ensure_odd(name, kh, kw)?;
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
        return Err(Error::Indivisible {
            what: format!("{name} channels"),
            value: c_in,
            divisor: groups,
        });
    }
    weight.ensure_dims(name, &[c_out, c_in / groups, kh, kw])?;
    if let Some(b) = bias {
        b.ensure_dims(&format!("{name} bias"), &[c_out])?;
    }
    let mut out = Tensor4::zeros([f, c_out, h, w]);
    for fi in 0..f {
        conv_frame(
            x,
            fi,
            &weight.data,
            c_out,
            groups,
            kh,
            kw,
            bias.map(|b| b.data.as_slice()),
            &mut out,
        );
    }
    Ok(out)
}

/// Per-channel (depthwise) convolution; `kernel` is `(C, 1, kh, kw)`.
pub fn strip_conv(x: &Tensor4, kernel: &NdArray) -> Result<Tensor4> {
    if kernel.dims.len() == 4 {
        ensure_odd("strip kernel", kernel.dims[2], kernel.dims[3])?;
    }
    conv2d("strip kernel", x, kernel, None, x.channels())
}

/// Pointwise affine map over channels: `y[o] = sum_c W[o, c] x[c] + b[o]`.
pub fn pointwise(name: &str, x: &Tensor4, affine: &Affine) -> Result<Tensor4> {
    let [f, c_in, h, w] = x.dims();
    let c_out = affine.out_features();
    affine.weight.ensure_dims(name, &[c_out, c_in])?;
    let plane = h * w;
    let mut out = Tensor4::zeros([f, c_out, h, w]);
    for fi in 0..f {
        for o in 0..c_out {
            let dst = out.plane_mut(fi, o);
            dst.iter_mut().for_each(|v| *v = affine.bias.data[o]);
            for c in 0..c_in {
                let k = affine.weight.data[o * c_in + c];
                if k == 0.0 {
                    continue;
                }
                let src = x.plane(fi, c);
                for p in 0..plane {
                    dst[p] += k * src[p];
                }
            }
        }
    }
    Ok(out)
}

/// Tanh approximation of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Two pointwise layers with GELU between them.
pub fn pointwise_mlp(name: &str, x: &Tensor4, mlp: &Mlp) -> Result<Tensor4> {
    let mut hidden = pointwise(name, x, &mlp.fc1)?;
    hidden.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    pointwise(name, &hidden, &mlp.fc2)
}

/// Depthwise convolution followed by a pointwise affine map.
pub fn dws_conv(x: &Tensor4, params: &DwsConvParams) -> Result<Tensor4> {
    let c = x.channels();
    let dw = &params.depthwise;
    if dw.dims.len() != 4 || dw.dims[0] != c || dw.dims[1] != 1 {
        return Err(Error::shape("depthwise kernel", &[c, 1, 3, 3], &dw.dims));
    }
    let depth = conv2d("depthwise kernel", x, dw, None, c)?;
    if params.pointwise.in_features() != c {
        return Err(Error::shape(
            "pointwise weight",
            &[c, c],
            &params.pointwise.weight.dims,
        ));
    }
    pointwise("pointwise weight", &depth, &params.pointwise)
}
