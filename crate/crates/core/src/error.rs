//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum too short: {len} points, need at least {min}")]
    SpectrumTooShort { len: usize, min: usize },

    #[error("total ion current over [{lo}, {hi}] is {tic}, cannot normalize")]
    ZeroTic { lo: f64, hi: f64, tic: f64 },

    #[error("batch of {len} spectra is too small, need at least {min}")]
    BatchTooSmall { len: usize, min: usize },

    #[error("m/z grids do not match: {detail}")]
    GridMismatch { detail: String },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("no peaks found in mean profile")]
    NoPeaksFound,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("feature vector has {got} entries, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("sample ids do not match between sources: {detail}")]
    SampleMismatch { detail: String },

    #[error("cannot select {k} columns from {p}")]
    KTooLarge { k: usize, p: usize },

    #[error("too few samples for split plan: {n} ({detail})")]
    TooFewSamples { n: usize, detail: String },

    #[error("label and prediction lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("reports were produced under different split plans")]
    PlanMismatch,

    #[error("need at least 2 repeats for the corrected t-test, got {got}")]
    TooFewRepeats { got: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
