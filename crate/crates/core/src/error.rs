use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },

    #[error("block {block}: non-finite function value at index {index}")]
    NonFiniteInBlock { block: usize, index: usize },

    #[error("insufficient points: {points} points for {kappa} blocks")]
    InsufficientPoints { points: usize, kappa: usize },

    #[error("invalid blocked sample: {0}")]
    InvalidSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("p must exceed 1 (got {0})")]
    PNotAboveOne(f64),

    #[error("epsilon {epsilon} exceeds ε₀={epsilon0}")]
    ExceedsEpsilon0 { epsilon: f64, epsilon0: f64 },

    #[error("ε exceeds E[s]: epsilon {epsilon} > expected_s {expected_s}")]
    EpsilonExceedsEnvelope { epsilon: f64, expected_s: f64 },

    #[error("empty modulus: loss not continuous at scale (a={a}, b={b})")]
    EmptyModulus { a: f64, b: f64 },

    #[error("net radius insufficient: candidate {candidate} fails on {bad_blocks} blocks (budget {budget})")]
    NetRadiusInsufficient {
        candidate: usize,
        bad_blocks: usize,
        budget: f64,
    },

    #[error("missing true mean for function `{0}`")]
    MissingTrueMean(String),

    #[error("infinite p-th central moment (p={p})")]
    InfiniteMoment { p: f64 },

    #[error("value overflows the integer range: ln = {0}")]
    Overflow(f64),
}
