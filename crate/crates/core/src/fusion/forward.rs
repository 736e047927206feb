//! Full strip fusion forward pass.

use crate::error::Result;
use crate::tensor::Tensor4;

use super::blocks::{cgsfmm, channel_mixing, deinterleave_rows, interleave_rows, lsfmm, temporal_fuse};
use super::conv::{dws_conv, pointwise};
use super::params::FusionWeights;

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTaps {
    /// MLP-1 outputs, the first residual taps.
    pub vis1: Tensor4,
    pub ir1: Tensor4,
    /// Channel-mixing outputs, the second residual taps.
    pub vis2: Tensor4,
    pub ir2: Tensor4,
    pub vis_out: Tensor4,
    pub ir_out: Tensor4,
}

/// Runs the module on one scale and returns fused `(visible, thermal)`
/// features with the input shape.
pub fn strip_fusion_forward(
    vis: &Tensor4,
    ir: &Tensor4,
    weights: &FusionWeights,
) -> Result<(Tensor4, Tensor4)> {
    let taps = forward_with_taps(vis, ir, weights)?;
    Ok((taps.vis_out, taps.ir_out))
}

pub fn forward_with_taps(
    vis: &Tensor4,
    ir: &Tensor4,
    weights: &FusionWeights,
) -> Result<ForwardTaps> {
    let block = |name: &'static str| move |e: crate::Error| e.in_block(name);
    ir.ensure_dims("thermal input", vis.dims())
        .map_err(block("input"))?;
    let cfg = weights.check_input(vis.dims()).map_err(block("weights"))?;

    let vis1 = dws_conv(vis, &weights.vis_dws)
        .and_then(|t| pointwise("vis.mlp1", &t, &weights.vis_mlp1))
        .map_err(block("vis branch"))?;
    let ir1 = dws_conv(ir, &weights.ir_dws)
        .and_then(|t| pointwise("ir.mlp1", &t, &weights.ir_mlp1))
        .map_err(block("ir branch"))?;

    let stacked = interleave_rows(&vis1, &ir1).map_err(block("interleave"))?;
    let half = cfg.channels / 2;
    let long_range = cgsfmm(&stacked.channel_slice(0, half), &weights.cgsfmm)
        .map_err(block("cgsfmm"))?;
    let local = lsfmm(&stacked.channel_slice(half, half), &weights.lsfmm)
        .map_err(block("lsfmm"))?;
    let merged = Tensor4::concat_channels(&[&long_range, &local])
        .and_then(|t| pointwise("merge", &t, &weights.merge))
        .map_err(block("merge"))?;
    let (dv, di) = deinterleave_rows(&merged).map_err(block("deinterleave"))?;

    let vis2 = dv
        .add(&vis1)
        .and_then(|t| channel_mixing(&t, &weights.mixing))
        .map_err(block("channel mixing"))?;
    let ir2 = di
        .add(&ir1)
        .and_then(|t| channel_mixing(&t, &weights.mixing))
        .map_err(block("channel mixing"))?;

    let (vis_out, ir_out) =
        temporal_fuse(&vis2, &ir2, &weights.temporal, cfg.patch).map_err(block("temporal"))?;
    Ok(ForwardTaps {
        vis1,
        ir1,
        vis2,
        ir2,
        vis_out,
        ir_out,
    })
}
