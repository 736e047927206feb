//! Learned parameters of the strip fusion module.
//!
//! Architecture hyperparameters (group counts, hidden widths, patch size)
//! are not stored separately; they are recovered from tensor shapes when a
//! bundle is loaded, and checked against the input at forward time.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::NdArray;

/// `y = W x + b` over channels; `weight` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: NdArray,
    pub bias: NdArray,
}

impl Affine {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: NdArray::zeros(&[out, inp]),
            bias: NdArray::zeros(&[out]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a.weight.data[i * n + i] = 1.0;
        }
        a
    }

    pub fn out_features(&self) -> usize {
        self.weight.dims[0]
    }

    pub fn in_features(&self) -> usize {
        self.weight.dims.get(1).copied().unwrap_or(0)
    }
}

/// Two affine layers with GELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Affine,
    pub fc2: Affine,
}

impl Mlp {
    pub fn zeros(inp: usize, hidden: usize, out: usize) -> Self {
        Self {
            fc1: Affine::zeros(hidden, inp),
            fc2: Affine::zeros(out, hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwsConvParams {
    /// `(C, 1, k, k)`
    pub depthwise: NdArray,
    pub pointwise: Affine,
}

/// Cascade-group strip mixing: per-group row `(1, 5)` and column `(5, 1)`
/// depthwise kernels stored as `(N_g, C_g, kh, kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgsfmmParams {
    pub row: NdArray,
    pub col: NdArray,
}

impl CgsfmmParams {
    pub fn groups(&self) -> usize {
        self.row.dims[0]
    }
}

/// Local strip mixing with softmax gating over (height, width, identity).
#[derive(Debug, Clone, PartialEq)]
pub struct LsfmmParams {
    /// `(C_h, 1, 5, 7)`
    pub height: NdArray,
    /// `(C_h, 1, 7, 5)`
    pub width: NdArray,
    pub mlp: Mlp,
    /// `C_h -> 3 C_h`, logit for channel `c`, branch `k` at `3 c + k`.
    pub reweight: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMixingParams {
    /// `(C, C / groups, 11, 11)`
    pub conv: NdArray,
    pub conv_bias: NdArray,
    pub grn_gamma: NdArray,
    pub grn_beta: NdArray,
    pub mlp: Mlp,
}

impl ChannelMixingParams {
    pub fn groups(&self) -> usize {
        let per_group = self.conv.dims[1];
        if per_group == 0 {
            0
        } else {
            self.conv.dims[0] / per_group
        }
    }
}

/// Layer norm over the concatenated patch axis plus the frame/patch mixer.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalParams {
    /// `(2 S)`
    pub norm_weight: NdArray,
    pub norm_bias: NdArray,
    /// `(F P, F P)`
    pub mlp2: Affine,
}

impl TemporalParams {
    /// Patch side `s`, recovered from `2 S = 2 s^2`.
    pub fn patch_size(&self) -> Option<usize> {
        let two_s = self.norm_weight.len();
        if two_s % 2 != 0 {
            return None;
        }
        let s = ((two_s / 2) as f64).sqrt().round() as usize;
        (s * s * 2 == two_s).then_some(s)
    }
}

/// Base kernel plus the per-frame calibration branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TadaParams {
    /// `(C_out, C_in, k, k)`
    pub base: NdArray,
    /// `(C_r, C_in, k_t)`
    pub calib_conv1: NdArray,
    pub calib_conv1_bias: NdArray,
    /// `(C_r, C_r, k_t)`
    pub calib_conv2: NdArray,
    pub calib_conv2_bias: NdArray,
    /// `C_r -> C_out`
    pub calib_fc: Affine,
}

impl TadaParams {
    /// Copy with every calibration-branch parameter set to zero.
    pub fn without_calibration(&self) -> Self {
        let zero = |a: &NdArray| NdArray::zeros(&a.dims);
        Self {
            base: self.base.clone(),
            calib_conv1: zero(&self.calib_conv1),
            calib_conv1_bias: zero(&self.calib_conv1_bias),
            calib_conv2: zero(&self.calib_conv2),
            calib_conv2_bias: zero(&self.calib_conv2_bias),
            calib_fc: Affine {
                weight: zero(&self.calib_fc.weight),
                bias: zero(&self.calib_fc.bias),
            },
        }
    }
}

/// Every learned parameter of one strip fusion module.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub vis_dws: DwsConvParams,
    pub ir_dws: DwsConvParams,
    pub vis_mlp1: Affine,
    pub ir_mlp1: Affine,
    pub cgsfmm: CgsfmmParams,
    pub lsfmm: LsfmmParams,
    pub merge: Affine,
    pub mixing: ChannelMixingParams,
    pub temporal: TemporalParams,
    pub tada: TadaParams,
}

/// Shape hyperparameters used to build a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub cgsfmm_groups: usize,
    pub mixing_groups: usize,
    pub dws_kernel: usize,
    pub mixing_kernel: usize,
    pub lsfmm_hidden: usize,
    pub mixing_hidden: usize,
    pub tada_kernel: usize,
    pub tada_temporal_kernel: usize,
    pub tada_hidden: usize,
}

pub const CGSFMM_ROW_KERNEL: (usize, usize) = (1, 5);
pub const CGSFMM_COL_KERNEL: (usize, usize) = (5, 1);
pub const LSFMM_HEIGHT_KERNEL: (usize, usize) = (5, 7);
pub const LSFMM_WIDTH_KERNEL: (usize, usize) = (7, 5);
pub const MIXING_KERNEL: usize = 11;

impl FusionConfig {
    /// Defaults for a given `(F, C, H, W)`: patch 4, four cascade groups,
    /// channel-pair groups in the mixing conv.
    pub fn for_shape(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            channels,
            height,
            width,
            patch: 4,
            cgsfmm_groups: 4,
            mixing_groups: (channels / 2).max(1),
            dws_kernel: 3,
            mixing_kernel: MIXING_KERNEL,
            lsfmm_hidden: (channels / 2).max(1),
            mixing_hidden: 2 * channels,
            tada_kernel: 3,
            tada_temporal_kernel: 3,
            tada_hidden: (channels / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let div = |what: &str, value: usize, divisor: usize| -> Result<()> {
            if divisor == 0 || value % divisor != 0 {
                return Err(Error::Indivisible {
                    what: what.to_string(),
                    value,
                    divisor,
                });
            }
            Ok(())
        };
        if self.frames == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig {
                key: "shape".into(),
                message: "all dimensions must be positive".into(),
            });
        }
        div("channels (modality split)", self.channels, 2)?;
        div("half channels (cascade groups)", self.channels / 2, self.cgsfmm_groups)?;
        div("channels (mixing groups)", self.channels, self.mixing_groups)?;
        div("height (patch size)", self.height, self.patch)?;
        div("width (patch size)", self.width, self.patch)?;
        for (name, k) in [
            ("dws kernel", self.dws_kernel),
            ("mixing kernel", self.mixing_kernel),
            ("tada kernel", self.tada_kernel),
            ("tada temporal kernel", self.tada_temporal_kernel),
        ] {
            if k % 2 == 0 {
                return Err(Error::EvenKernel {
                    name: name.into(),
                    kh: k,
                    kw: k,
                });
            }
        }
        Ok(())
    }

    pub fn patches(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// Declared name and shape of every tensor, in container order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let ch = c / 2;
        let ng = self.cgsfmm_groups;
        let k = self.dws_kernel;
        let mk = self.mixing_kernel;
        let s2 = 2 * self.patch * self.patch;
        let fp = self.frames * self.patches();
        let cr = self.tada_hidden;
        let kt = self.tada_temporal_kernel;
        let tk = self.tada_kernel;
        let mut m: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: &str, dims: &[usize]| m.push((name.to_string(), dims.to_vec()));
        for modality in ["vis", "ir"] {
            push(&format!("{modality}.dws.depthwise"), &[c, 1, k, k]);
            push(&format!("{modality}.dws.pointwise.weight"), &[c, c]);
            push(&format!("{modality}.dws.pointwise.bias"), &[c]);
            push(&format!("{modality}.mlp1.weight"), &[c, c]);
            push(&format!("{modality}.mlp1.bias"), &[c]);
        }
        let (rh, rw) = CGSFMM_ROW_KERNEL;
        let (ch_, cw) = CGSFMM_COL_KERNEL;
        push("cgsfmm.row", &[ng, ch / ng, rh, rw]);
        push("cgsfmm.col", &[ng, ch / ng, ch_, cw]);
        let (hh, hw) = LSFMM_HEIGHT_KERNEL;
        let (wh, ww) = LSFMM_WIDTH_KERNEL;
        push("lsfmm.height", &[ch, 1, hh, hw]);
        push("lsfmm.width", &[ch, 1, wh, ww]);
        push("lsfmm.mlp.fc1.weight", &[self.lsfmm_hidden, ch]);
        push("lsfmm.mlp.fc1.bias", &[self.lsfmm_hidden]);
        push("lsfmm.mlp.fc2.weight", &[ch, self.lsfmm_hidden]);
        push("lsfmm.mlp.fc2.bias", &[ch]);
        push("lsfmm.reweight.weight", &[3 * ch, ch]);
        push("lsfmm.reweight.bias", &[3 * ch]);
        push("merge.weight", &[c, c]);
        push("merge.bias", &[c]);
        push("mixing.conv.weight", &[c, c / self.mixing_groups, mk, mk]);
        push("mixing.conv.bias", &[c]);
        push("mixing.grn.gamma", &[c]);
        push("mixing.grn.beta", &[c]);
        push("mixing.mlp.fc1.weight", &[self.mixing_hidden, c]);
        push("mixing.mlp.fc1.bias", &[self.mixing_hidden]);
        push("mixing.mlp.fc2.weight", &[c, self.mixing_hidden]);
        push("mixing.mlp.fc2.bias", &[c]);
        push("temporal.norm.weight", &[s2]);
        push("temporal.norm.bias", &[s2]);
        push("temporal.mlp2.weight", &[fp, fp]);
        push("temporal.mlp2.bias", &[fp]);
        push("tada.base", &[c, c, tk, tk]);
        push("tada.calib.conv1.weight", &[cr, c, kt]);
        push("tada.calib.conv1.bias", &[cr]);
        push("tada.calib.conv2.weight", &[cr, cr, kt]);
        push("tada.calib.conv2.bias", &[cr]);
        push("tada.calib.fc.weight", &[c, cr]);
        push("tada.calib.fc.bias", &[c]);
        m
    }
}

fn init_value(name: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n: usize = dims.iter().product();
    if name == "temporal.norm.weight" {
        return (0..n).map(|_| 1.0 + rng.gen_range(-0.1..0.1)).collect();
    }
    let bound = if name.ends_with("bias") || name.contains(".grn.") {
        0.1
    } else {
        let fan_in: usize = dims[1..].iter().product::<usize>().max(1);
        1.0 / (fan_in as f64).sqrt()
    };
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl FusionWeights {
    /// Deterministic pseudo-random bundle for testing; the same seed and
    /// config always give bit-identical weights.
    pub fn seeded(config: &FusionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .manifest()
            .into_iter()
            .map(|(name, dims)| {
                let data = init_value(&name, &dims, &mut rng);
                (name, NdArray { dims, data })
            })
            .collect();
        Self::from_named(tensors)
    }

    /// Bundle with every parameter zero except neutral layer-norm scales.
    pub fn zeros(config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .manifest()
            .into_iter()
            .map(|(name, dims)| {
                let mut a = NdArray::zeros(&dims);
                if name == "temporal.norm.weight" {
                    a.data.iter_mut().for_each(|v| *v = 1.0);
                }
                (name, a)
            })
            .collect();
        Self::from_named(tensors)
    }

    /// Assembles a bundle from named tensors, requiring each name exactly
    /// once and consistent shapes.
    pub fn from_named(tensors: Vec<(String, NdArray)>) -> Result<Self> {
        let mut map: BTreeMap<String, NdArray> = BTreeMap::new();
        for (name, t) in tensors {
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::DuplicateTensor(name));
            }
        }
        let mut take = |name: &str| -> Result<NdArray> {
            map.remove(name)
                .ok_or_else(|| Error::MissingWeight(name.to_string()))
        };
        let mut aff = |prefix: &str| -> Result<Affine> {
            Ok(Affine {
                weight: take(&format!("{prefix}.weight"))?,
                bias: take(&format!("{prefix}.bias"))?,
            })
        };
        let vis_dws_pw = aff("vis.dws.pointwise")?;
        let vis_mlp1 = aff("vis.mlp1")?;
        let ir_dws_pw = aff("ir.dws.pointwise")?;
        let ir_mlp1 = aff("ir.mlp1")?;
        let lsfmm_fc1 = aff("lsfmm.mlp.fc1")?;
        let lsfmm_fc2 = aff("lsfmm.mlp.fc2")?;
        let reweight = aff("lsfmm.reweight")?;
        let merge = aff("merge")?;
        let mixing_fc1 = aff("mixing.mlp.fc1")?;
        let mixing_fc2 = aff("mixing.mlp.fc2")?;
        let mlp2 = aff("temporal.mlp2")?;
        let calib_fc = aff("tada.calib.fc")?;
        let mut take = |name: &str| -> Result<NdArray> {
            map.remove(name)
                .ok_or_else(|| Error::MissingWeight(name.to_string()))
        };

        let weights = FusionWeights {
            vis_dws: DwsConvParams {
                depthwise: take("vis.dws.depthwise")?,
                pointwise: vis_dws_pw,
            },
            ir_dws: DwsConvParams {
                depthwise: take("ir.dws.depthwise")?,
                pointwise: ir_dws_pw,
            },
            vis_mlp1,
            ir_mlp1,
            cgsfmm: CgsfmmParams {
                row: take("cgsfmm.row")?,
                col: take("cgsfmm.col")?,
            },
            lsfmm: LsfmmParams {
                height: take("lsfmm.height")?,
                width: take("lsfmm.width")?,
                mlp: Mlp {
                    fc1: lsfmm_fc1,
                    fc2: lsfmm_fc2,
                },
                reweight,
            },
            merge,
            mixing: ChannelMixingParams {
                conv: take("mixing.conv.weight")?,
                conv_bias: take("mixing.conv.bias")?,
                grn_gamma: take("mixing.grn.gamma")?,
                grn_beta: take("mixing.grn.beta")?,
                mlp: Mlp {
                    fc1: mixing_fc1,
                    fc2: mixing_fc2,
                },
            },
            temporal: TemporalParams {
                norm_weight: take("temporal.norm.weight")?,
                norm_bias: take("temporal.norm.bias")?,
                mlp2,
            },
            tada: TadaParams {
                base: take("tada.base")?,
                calib_conv1: take("tada.calib.conv1.weight")?,
                calib_conv1_bias: take("tada.calib.conv1.bias")?,
                calib_conv2: take("tada.calib.conv2.weight")?,
                calib_conv2_bias: take("tada.calib.conv2.bias")?,
                calib_fc,
            },
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::InvalidConfig {
                key: extra.clone(),
                message: "unexpected tensor in weight bundle".into(),
            });
        }
        weights.config()?;
        Ok(weights)
    }

    /// Recovers the shape hyperparameters and checks every declared shape.
    /// `frames`, `height` and `width` are left at values consistent with
    /// the stored shapes where they can be inferred; callers check the
    /// input against [`FusionWeights::check_input`].
    pub fn config(&self) -> Result<FusionConfig> {
        let rank = |name: &str, a: &NdArray, r: usize| -> Result<()> {
            if a.dims.len() != r {
                return Err(Error::shape(name, &vec![0; r], &a.dims));
            }
            Ok(())
        };
        rank("vis.mlp1.weight", &self.vis_mlp1.weight, 2)?;
        rank("vis.dws.depthwise", &self.vis_dws.depthwise, 4)?;
        rank("cgsfmm.row", &self.cgsfmm.row, 4)?;
        rank("mixing.conv.weight", &self.mixing.conv, 4)?;
        rank("lsfmm.mlp.fc1.weight", &self.lsfmm.mlp.fc1.weight, 2)?;
        rank("mixing.mlp.fc1.weight", &self.mixing.mlp.fc1.weight, 2)?;
        rank("tada.base", &self.tada.base, 4)?;
        rank("tada.calib.conv1.weight", &self.tada.calib_conv1, 3)?;
        rank("temporal.mlp2.weight", &self.temporal.mlp2.weight, 2)?;

        let channels = self.vis_mlp1.weight.dims[0];
        let patch = self.temporal.patch_size().ok_or_else(|| Error::InvalidConfig {
            key: "temporal.norm.weight".into(),
            message: "length must be 2 s^2".into(),
        })?;
        let fp = self.temporal.mlp2.weight.dims[0];
        let per_group = self.mixing.conv.dims[1];
        let mixing_groups = if per_group == 0 { 0 } else { channels / per_group };
        let cfg = FusionConfig {
            // One frame spanning all F*P patches; the real split is only
            // known once an input arrives (see `check_input`).
            frames: 1,
            channels,
            height: patch,
            width: patch * fp,
            patch,
            cgsfmm_groups: self.cgsfmm.groups(),
            mixing_groups,
            dws_kernel: self.vis_dws.depthwise.dims[2],
            mixing_kernel: self.mixing.conv.dims[2],
            lsfmm_hidden: self.lsfmm.mlp.fc1.weight.dims[0],
            mixing_hidden: self.mixing.mlp.fc1.weight.dims[0],
            tada_kernel: self.tada.base.dims[2],
            tada_temporal_kernel: self.tada.calib_conv1.dims[2],
            tada_hidden: self.tada.calib_conv1.dims[0],
        };
        cfg.validate()?;
        for ((name, dims), (_, t)) in cfg.manifest().iter().zip(self.to_named().iter()) {
            if &t.dims != dims {
                return Err(Error::shape(name.clone(), dims, &t.dims));
            }
        }
        Ok(cfg)
    }

    /// Checks an input `(F, C, H, W)` against the bundle.
    pub fn check_input(&self, dims: [usize; 4]) -> Result<FusionConfig> {
        let stored = self.config()?;
        let [f, c, h, w] = dims;
        let mut cfg = stored;
        cfg.frames = f;
        cfg.height = h;
        cfg.width = w;
        if c != stored.channels {
            return Err(Error::shape(
                "input channels",
                &[f, stored.channels, h, w],
                &dims,
            ));
        }
        cfg.validate()?;
        let fp = f * cfg.patches();
        self.temporal
            .mlp2
            .weight
            .ensure_dims("temporal.mlp2.weight", &[fp, fp])?;
        Ok(cfg)
    }

    /// Named tensors in container order.
    pub fn to_named(&self) -> Vec<(String, NdArray)> {
        let mut out: Vec<(String, NdArray)> = Vec::new();
        let mut push = |name: &str, a: &NdArray| out.push((name.to_string(), a.clone()));
        for (m, dws, mlp1) in [
            ("vis", &self.vis_dws, &self.vis_mlp1),
            ("ir", &self.ir_dws, &self.ir_mlp1),
        ] {
            push(&format!("{m}.dws.depthwise"), &dws.depthwise);
            push(&format!("{m}.dws.pointwise.weight"), &dws.pointwise.weight);
            push(&format!("{m}.dws.pointwise.bias"), &dws.pointwise.bias);
            push(&format!("{m}.mlp1.weight"), &mlp1.weight);
            push(&format!("{m}.mlp1.bias"), &mlp1.bias);
        }
        push("cgsfmm.row", &self.cgsfmm.row);
        push("cgsfmm.col", &self.cgsfmm.col);
        push("lsfmm.height", &self.lsfmm.height);
        push("lsfmm.width", &self.lsfmm.width);
        push("lsfmm.mlp.fc1.weight", &self.lsfmm.mlp.fc1.weight);
        push("lsfmm.mlp.fc1.bias", &self.lsfmm.mlp.fc1.bias);
        push("lsfmm.mlp.fc2.weight", &self.lsfmm.mlp.fc2.weight);
        push("lsfmm.mlp.fc2.bias", &self.lsfmm.mlp.fc2.bias);
        push("lsfmm.reweight.weight", &self.lsfmm.reweight.weight);
        push("lsfmm.reweight.bias", &self.lsfmm.reweight.bias);
        push("merge.weight", &self.merge.weight);
        push("merge.bias", &self.merge.bias);
        push("mixing.conv.weight", &self.mixing.conv);
        push("mixing.conv.bias", &self.mixing.conv_bias);
        push("mixing.grn.gamma", &self.mixing.grn_gamma);
        push("mixing.grn.beta", &self.mixing.grn_beta);
        push("mixing.mlp.fc1.weight", &self.mixing.mlp.fc1.weight);
        push("mixing.mlp.fc1.bias", &self.mixing.mlp.fc1.bias);
        push("mixing.mlp.fc2.weight", &self.mixing.mlp.fc2.weight);
        push("mixing.mlp.fc2.bias", &self.mixing.mlp.fc2.bias);
        push("temporal.norm.weight", &self.temporal.norm_weight);
        push("temporal.norm.bias", &self.temporal.norm_bias);
        push("temporal.mlp2.weight", &self.temporal.mlp2.weight);
        push("temporal.mlp2.bias", &self.temporal.mlp2.bias);
        push("tada.base", &self.tada.base);
        push("tada.calib.conv1.weight", &self.tada.calib_conv1);
        push("tada.calib.conv1.bias", &self.tada.calib_conv1_bias);
        push("tada.calib.conv2.weight", &self.tada.calib_conv2);
        push("tada.calib.conv2.bias", &self.tada.calib_conv2_bias);
        push("tada.calib.fc.weight", &self.tada.calib_fc.weight);
        push("tada.calib.fc.bias", &self.tada.calib_fc.bias);
        out
    }
}
