use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step size underflow at tau = {tau} (h = {step:e})")]
    NonConvergence { tau: f64, step: f64 },

    #[error("non-finite state at tau = {tau}: {state:?}")]
    NonFinite { tau: f64, state: Vec<f64> },

    #[error("negative {which} population {value:e} at t = {t:e} s")]
    NegativePopulation { t: f64, which: &'static str, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("bias {ib} outside tabulated range [{min}, {max}]")]
    BiasOutOfRange { ib: f64, min: f64, max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("series do not overlap in time")]
    EmptyOverlap,

    #[error("trace has zero integral")]
    ZeroIntegral,

    #[error("unknown {what} '{name}'")]
    Unknown { what: &'static str, name: String },

    #[error("signal for dendrite {0} was not recorded")]
    NotRecorded(usize),

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: file truncated")]
    Truncated { path: PathBuf },

    #[error("{path}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { path: PathBuf, stored: u32, computed: u32 },

    #[error("{path}: not a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: malformed contents: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFinite { .. }
                | Error::NegativePopulation { .. }
                | Error::ZeroIntegral
        )
    }
}
