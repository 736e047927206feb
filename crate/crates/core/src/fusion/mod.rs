//! Forward pass of the strip fusion module and its sub-blocks.
//!
//! Dataflow for one feature-map scale, with both inputs `(F, C, H, W)`:
//!
//! ```text
//! vis -> DWSC -> MLP-1 = vis1 --+                         +-- + vis1 -> mixing = vis2 --+
//!                               +- interleave rows --+    |                             +- temporal -> outputs
//! ir  -> DWSC -> MLP-1 = ir1  --+   (F, C, 2H, W)    |    +-- + ir1  -> mixing = ir2  --+
//!                                                    |    |
//!                      first C/2 -> CGSFMM ---+      |    |
//!                      last  C/2 -> LSFMM  ---+- concat -> merge FC -> deinterleave
//! ```

mod blocks;
mod conv;
mod forward;
mod params;
mod tada;

pub use blocks::{
    cgsfmm, channel_mixing, deinterleave_rows, grn, interleave_rows, lsfmm, lsfmm_gates,
    temporal_fuse, GRN_EPS, LAYER_NORM_EPS,
};
pub use conv::{conv2d, dws_conv, gelu, pointwise, pointwise_mlp, strip_conv};
pub use forward::{forward_with_taps, strip_fusion_forward, ForwardTaps};
pub use params::{
    Affine, CgsfmmParams, ChannelMixingParams, DwsConvParams, FusionConfig, FusionWeights,
    LsfmmParams, Mlp, TadaParams, TemporalParams, CGSFMM_COL_KERNEL, CGSFMM_ROW_KERNEL,
    LSFMM_HEIGHT_KERNEL, LSFMM_WIDTH_KERNEL, MIXING_KERNEL,
};
pub use tada::{calibration_factors, tada_conv};
