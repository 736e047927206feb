//! Temporally adaptive convolution (forward only).
//!
//! A shared base kernel is rescaled per frame and per output channel by
//! calibration factors `alpha_t` computed from pooled frame descriptors:
//! two temporal 1-D convolutions (GELU between them) followed by a linear
//! projection, offset by one so a zeroed branch leaves the base kernel as is.

use crate::error::{Error, Result};
use crate::tensor::{NdArray, Tensor4};

use super::conv::{conv_frame, ensure_odd, gelu};
use super::params::TadaParams;

/// Zero-padded "same" 1-D convolution over frames. `seq` is `[t][c_in]`,
/// `weight` is `(c_out, c_in, k)`.
fn temporal_conv(seq: &[Vec<f64>], weight: &NdArray, bias: &NdArray) -> Vec<Vec<f64>> {
    let (c_out, c_in, k) = (weight.dims[0], weight.dims[1], weight.dims[2]);
    let half = (k / 2) as isize;
    let t_len = seq.len() as isize;
    (0..t_len)
        .map(|t| {
            (0..c_out)
                .map(|o| {
                    let mut acc = bias.data[o];
                    for j in 0..k {
                        let src = t + j as isize - half;
                        if src < 0 || src >= t_len {
                            continue;
                        }
                        let frame = &seq[src as usize];
                        for c in 0..c_in {
                            acc += weight.data[(o * c_in + c) * k + j] * frame[c];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Per-frame calibration factors, indexed `[frame][output channel]`.
pub fn calibration_factors(x: &Tensor4, params: &TadaParams) -> Result<Vec<Vec<f64>>> {
    let [f, c_in, h, w] = x.dims();
    let c_out = params.base.dims[0];
    let hidden = params.calib_conv1.dims.first().copied().unwrap_or(0);
    let kt = params.calib_conv1.dims.get(2).copied().unwrap_or(0);
    ensure_odd("tada.calib.conv1.weight", kt, 1)?;
    params
        .calib_conv1
        .ensure_dims("tada.calib.conv1.weight", &[hidden, c_in, kt])?;
    params
        .calib_conv1_bias
        .ensure_dims("tada.calib.conv1.bias", &[hidden])?;
    params
        .calib_conv2
        .ensure_dims("tada.calib.conv2.weight", &[hidden, hidden, kt])?;
    params
        .calib_conv2_bias
        .ensure_dims("tada.calib.conv2.bias", &[hidden])?;
    params
        .calib_fc
        .weight
        .ensure_dims("tada.calib.fc.weight", &[c_out, hidden])?;
    params.calib_fc.bias.ensure_dims("tada.calib.fc.bias", &[c_out])?;

    let area = (h * w) as f64;
    let descriptors: Vec<Vec<f64>> = (0..f)
        .map(|t| {
            (0..c_in)
                .map(|c| x.plane(t, c).iter().sum::<f64>() / area)
                .collect()
        })
        .collect();
    let mut h1 = temporal_conv(&descriptors, &params.calib_conv1, &params.calib_conv1_bias);
    h1.iter_mut().flatten().for_each(|v| *v = gelu(*v));
    let h2 = temporal_conv(&h1, &params.calib_conv2, &params.calib_conv2_bias);
    Ok(h2
        .iter()
        .map(|z| {
            (0..c_out)
                .map(|o| {
                    let row = &params.calib_fc.weight.data[o * hidden..(o + 1) * hidden];
                    1.0 + params.calib_fc.bias.data[o]
                        + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        })
        .collect())
}

/// Convolves frame `t` with `alpha_t ⊙ W_base` (scaling per output channel).
pub fn tada_conv(x: &Tensor4, params: &TadaParams) -> Result<Tensor4> {
    let [f, c_in, h, w] = x.dims();
    let base = &params.base;
    if base.dims.len() != 4 || base.dims[1] != c_in {
        return Err(Error::shape("tada.base", &[0, c_in, 0, 0], &base.dims));
    }
    let (c_out, kh, kw) = (base.dims[0], base.dims[2], base.dims[3]);
    ensure_odd("tada.base", kh, kw)?;
    let alpha = calibration_factors(x, params)?;
    let per_out = c_in * kh * kw;
    let mut out = Tensor4::zeros([f, c_out, h, w]);
    let mut scaled = vec![0.0; base.data.len()];
    for (t, factors) in alpha.iter().enumerate() {
        for o in 0..c_out {
            for i in 0..per_out {
                scaled[o * per_out + i] = factors[o] * base.data[o * per_out + i];
            }
        }
        conv_frame(x, t, &scaled, c_out, 1, kh, kw, None, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::conv::conv2d;
    use crate::fusion::params::{FusionConfig, FusionWeights};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> TadaParams {
        let cfg = FusionConfig::for_shape(3, 8, 8, 8);
        FusionWeights::seeded(&cfg, seed).unwrap().tada
    }

    #[test]
    fn zero_calibration_is_plain_conv() {
        let p = params(1).without_calibration();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor4::random([3, 8, 6, 6], 1.0, &mut rng);
        let expected = conv2d("base", &x, &p.base, None, 1).unwrap();
        assert_eq!(tada_conv(&x, &p).unwrap(), expected);
        for a in calibration_factors(&x, &p).unwrap() {
            assert!(a.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn single_frame_is_scaled_base_conv() {
        let p = params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Tensor4::random([1, 8, 5, 5], 1.0, &mut rng);
        let alpha = &calibration_factors(&x, &p).unwrap()[0];
        let plain = conv2d("base", &x, &p.base, None, 1).unwrap();
        let got = tada_conv(&x, &p).unwrap();
        for o in 0..8 {
            for (g, b) in got.plane(0, o).iter().zip(plain.plane(0, o)) {
                assert!((g - alpha[o] * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let p = params(3);
        let x = Tensor4::zeros([2, 4, 5, 5]);
        assert!(tada_conv(&x, &p).is_err());
    }
}
