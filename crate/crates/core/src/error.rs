use thiserror::Error;

/// Errors produced by the quantization kernels and builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate calibration: every sample is zero")]
    DegenerateCalibration,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("bit-width {bits} outside [{min}, {max}]")]
    BitWidth { bits: u32, min: u32, max: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("code {code} outside input range [{lo}, {hi}]")]
    CodeOutOfRange { code: i64, lo: i64, hi: i64 },

    #[error("table entry {value} at slot {slot} outside [{lo}, {hi}]")]
    EntryOutOfRange {
        slot: usize,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("positive element {0} in stabilized input")]
    PositiveInput(f64),

    #[error("anchor locations must be strictly increasing")]
    NonIncreasingAnchors,

    #[error("ray direction is not unit length (norm {0})")]
    NonUnitDirection(f64),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("accumulator overflow: need {needed} bits, have {available}")]
    AccumulatorOverflow { needed: u32, available: u32 },

    #[error("unknown function '{0}'")]
    UnknownFunction(String),

    #[error("malformed binary table: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
