use thiserror::Error;

/// Errors across the arithmetic, series, engine and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precision mismatch: {left} vs {right} fractional bits")]
    PrecisionMismatch { left: u32, right: u32 },

    #[error("precision must be a positive multiple of 64 bits, got {0}")]
    InvalidPrecision(u32),

    #[error("modulus must be nonzero")]
    ZeroModulus,

    #[error("numerator {numerator} out of range for modulus {modulus} with shift {shift}")]
    NumeratorOutOfRange {
        numerator: u64,
        modulus: u64,
        shift: u32,
    },

    #[error("shift of {shift} bits leaves no working precision at {precision} bits")]
    ShiftOutOfRange { shift: u32, precision: u32 },

    #[error("bit count {count} exceeds precision {precision}")]
    BitCountOutOfRange { count: u32, precision: u32 },

    #[error("montgomery modulus must be odd, at least 3 and below 2^63, got {0}")]
    InvalidMontgomeryModulus(u64),

    #[error("head term exponent is negative at k={k}; the term belongs to the tail")]
    NegativeHeadExponent { k: u64 },

    #[error("tail term shift is not positive at k={k}; the term belongs to the head")]
    NonPositiveTailShift { k: u64 },

    #[error("invalid series spec: {0}")]
    InvalidSeries(String),

    #[error("unknown formula preset `{0}`; known presets: bbp16, bellard")]
    UnknownFormula(String),

    #[error("invalid extraction request: {0}")]
    InvalidRequest(String),

    #[error("cannot partition into zero parts")]
    ZeroPartitions,

    #[error("plan does not cover the request: {0}")]
    PlanMismatch(String),

    #[error("checkpoint store i/o: {0}")]
    Storage(#[from] std::io::Error),

    #[error("malformed checkpoint data: {0}")]
    MalformedCheckpoint(String),

    #[error("run metadata mismatch for {field}: store has `{stored}`, request has `{requested}`")]
    MetaMismatch {
        field: &'static str,
        stored: String,
        requested: String,
    },

    #[error("run interrupted; completed jobs are persisted and the run can be resumed")]
    Interrupted,

    #[error("extraction results cover disjoint bit ranges")]
    DisjointRanges,

    #[error("bit position {position} is outside the run's range {start}..{end}")]
    PositionNotCovered { position: u64, start: u64, end: u64 },

    #[error("error model needs at least one term")]
    EmptyErrorModel,

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
