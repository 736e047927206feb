//! Cross-modal fusion toolkit for visible/thermal pedestrian detection.
//!
//! The crate covers the non-training numerical core of a two-branch
//! (visible + thermal) detector:
//!
//! - [`geometry`]: boxes, IoU, CIoU, hulls and greedy NMS.
//! - [`fusion`]: forward pass of the strip fusion module over dense
//!   `(F, C, H, W)` feature sequences, plus the temporally adaptive
//!   convolution used in the backbones.
//! - [`balance`]: CIoU reliability scoring, RoIAlign, relation matrices and
//!   the row-wise KL alignment loss.
//! - [`postprocess`]: per-scale cross-modal box fusion and the four output
//!   strategies (VIS, IR, Both, Algo1).
//! - [`evaluation`]: log-average miss rate over the usual pedestrian
//!   settings and day/night splits.
//! - [`io`]: annotation/detection text formats, binary tensor containers,
//!   manifests and run configuration.

pub mod balance;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod postprocess;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{BBox, Detection, Modality, Scale};
pub use tensor::Tensor4;
