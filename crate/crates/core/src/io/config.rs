//! Run configuration from `key = value` files.

use std::path::Path;

use crate::balance::DEFAULT_N_TOP;
use crate::error::{Error, Result};
use crate::evaluation::{EvalSetting, Split, DEFAULT_MATCH_IOU};
use crate::geometry::Scale;
use crate::postprocess::PostprocessConfig;

use super::{content_lines, parse_err};

pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_PATCH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub beta: f64,
    pub n_top: usize,
    pub postprocess: PostprocessConfig,
    pub patch: usize,
    pub settings: Vec<String>,
    pub splits: Vec<Split>,
    pub match_iou: f64,
    /// Feature-map stride per scale, in `Scale::ALL` order.
    pub strides: [f64; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            n_top: DEFAULT_N_TOP,
            postprocess: PostprocessConfig::default(),
            patch: DEFAULT_PATCH,
            settings: EvalSetting::standard().into_iter().map(|s| s.name).collect(),
            splits: Split::ALL.to_vec(),
            match_iou: DEFAULT_MATCH_IOU,
            strides: Scale::ALL.map(|s| s.default_stride()),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::InvalidConfig {
        key: key.into(),
        message: message.into(),
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(invalid(key, format!("`{value}` is not a number"))),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    pub const KEYS: [&'static str; 12] = [
        "beta",
        "n_top",
        "conf_thres_v",
        "conf_thres_t",
        "iou_thres",
        "nms_thres",
        "strategy",
        "patch",
        "settings",
        "splits",
        "match_iou",
        "strides",
    ];

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in content_lines(text) {
            let Some((k, v)) = line.split_once('=') else {
                return Err(parse_err(path, n, "expected `key = value`"));
            };
            cfg.set(k.trim(), v.trim())
                .map_err(|e| parse_err(path, n, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&super::read_text(path)?, path)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let pp = &mut self.postprocess;
        match key {
            "beta" => self.beta = number(key, value)?,
            "n_top" => {
                self.n_top = value
                    .parse()
                    .map_err(|_| invalid(key, format!("`{value}` is not an integer")))?
            }
            "conf_thres_v" => pp.conf_threshold_v = number(key, value)?,
            "conf_thres_t" => pp.conf_threshold_t = number(key, value)?,
            "iou_thres" => pp.iou_thres = number(key, value)?,
            "nms_thres" => pp.nms_threshold = number(key, value)?,
            "strategy" => pp.strategy = value.parse().map_err(|e: String| invalid(key, e))?,
            "patch" => {
                self.patch = value
                    .parse()
                    .map_err(|_| invalid(key, format!("`{value}` is not an integer")))?
            }
            "settings" => {
                self.settings = list(value)
                    .map(|s| {
                        EvalSetting::by_name(s)
                            .map(|s| s.name)
                            .ok_or_else(|| invalid(key, format!("unknown setting `{s}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "splits" => {
                self.splits = list(value)
                    .map(|s| s.parse().map_err(|e: String| invalid(key, e)))
                    .collect::<Result<_>>()?
            }
            "match_iou" => self.match_iou = number(key, value)?,
            "strides" => {
                let v = list(value).map(|s| number(key, s)).collect::<Result<Vec<_>>>()?;
                self.strides = v
                    .try_into()
                    .map_err(|_| invalid(key, "expected three strides for s80, s40, s20"))?;
            }
            other => return Err(invalid(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.postprocess.validate()?;
        if !(self.beta >= 0.0) {
            return Err(invalid("beta", "must be non-negative"));
        }
        if self.n_top < 1 {
            return Err(invalid("n_top", "must be at least 1"));
        }
        if self.patch < 1 {
            return Err(invalid("patch", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.match_iou) {
            return Err(invalid("match_iou", "must lie in [0, 1]"));
        }
        if self.strides.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("strides", "must be positive"));
        }
        if self.settings.is_empty() {
            return Err(invalid("settings", "at least one setting is required"));
        }
        if self.splits.is_empty() {
            return Err(invalid("splits", "at least one split is required"));
        }
        Ok(())
    }

    pub fn stride(&self, scale: Scale) -> f64 {
        let i = Scale::ALL.iter().position(|&s| s == scale).unwrap_or(0);
        self.strides[i]
    }

    /// Named settings with this run's matching threshold.
    pub fn eval_settings(&self) -> Vec<EvalSetting> {
        self.settings
            .iter()
            .filter_map(|n| EvalSetting::by_name(n))
            .map(|mut s| {
                s.match_iou = self.match_iou;
                s
            })
            .collect()
    }

    fn value(&self, key: &str) -> String {
        let pp = &self.postprocess;
        match key {
            "beta" => self.beta.to_string(),
            "n_top" => self.n_top.to_string(),
            "conf_thres_v" => pp.conf_threshold_v.to_string(),
            "conf_thres_t" => pp.conf_threshold_t.to_string(),
            "iou_thres" => pp.iou_thres.to_string(),
            "nms_thres" => pp.nms_threshold.to_string(),
            "strategy" => pp.strategy.to_string(),
            "patch" => self.patch.to_string(),
            "settings" => self.settings.join(","),
            "splits" => self
                .splits
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "match_iou" => self.match_iou.to_string(),
            "strides" => self
                .strides
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key, one `key = value` line each. Parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.value(k)))
            .collect()
    }

    /// The same lines prefixed with `# ` for results-file headers.
    pub fn header(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("# {k} = {}\n", self.value(k)))
            .collect()
    }
}
