use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("degenerate aspect ratio")]
    DegenerateAspectRatio,

    #[error("shape mismatch in `{name}`: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("kernel `{name}` has even side ({kh}x{kw}); odd sides are required")]
    EvenKernel { name: String, kh: usize, kw: usize },

    #[error("{what}: {value} is not divisible by {divisor}")]
    Indivisible {
        what: String,
        value: usize,
        divisor: usize,
    },

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("duplicate tensor `{0}`")]
    DuplicateTensor(String),

    #[error("in block `{block}`: {source}")]
    Block {
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("mixed scale ids in a single-scale call")]
    MixedScale,

    #[error("no reference objects")]
    NoReferenceObjects,

    #[error("zero-norm RoI feature at index {0}")]
    ZeroNormFeature(usize),

    #[error("RoI box must have positive area")]
    EmptyRoi,

    #[error("relation matrices have mismatched dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("no valid instances")]
    NoValidInstances,

    #[error("empty setting `{0}`")]
    EmptySetting(String),

    #[error("invalid value for `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(name: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            name: name.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn in_block(self, block: &'static str) -> Self {
        Error::Block {
            block,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error came from the filesystem rather than from content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
