//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability: {0}")]
    InvalidProbability(f64),

    #[error("non-finite logit: {0}")]
    NonFiniteLogit(f64),

    #[error("invalid clamping epsilon {0}; expected a value in (0, 0.5)")]
    InvalidEpsilon(f64),

    #[error("log singularity: -ln(p) is undefined at p = {0}")]
    LogSingularity(f64),

    #[error("order too small: {0} (need at least 1)")]
    OrderTooSmall(usize),

    #[error("series too short: [{m}/{n}] needs {needed} coefficients, got {got}")]
    SeriesTooShort {
        m: usize,
        n: usize,
        needed: usize,
        got: usize,
    },

    #[error("invalid Taylor series: {0}")]
    InvalidSeries(String),

    #[error("degenerate Padé system (condition estimate {condition:e})")]
    DegeneratePade { condition: f64 },

    #[error("pole encountered: |Q(t)| = {0:e}")]
    PoleEncountered(f64),

    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),

    #[error("incomplete spec: {0}")]
    IncompleteSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("non-finite loss {value} at z = {z}")]
    NonFiniteLoss { z: f64, value: f64 },

    #[error("unknown curve label: {0}")]
    UnknownLabel(String),

    #[error("ratio too large for n_max: smallest class rounds to {count} samples")]
    RatioTooLarge { count: usize },

    #[error("class too small to split: class {class} has {count} samples, need at least {needed}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty evaluation")]
    EmptyEvaluation,

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
