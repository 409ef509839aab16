use thiserror::Error;

/// Crate-wide error type. Operations forward errors from the layers below,
/// so a single enum keeps the failure surface in one place.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-positive parameter: {0}")]
    NonPositiveParameter(String),

    #[error("duplicate atom value {0}")]
    DuplicateAtom(f64),

    #[error("weights are not normalized: total mass {total}")]
    NotNormalized { total: f64 },

    #[error("weight matrix is not symmetric at ({i},{j}): {left} vs {right}")]
    AsymmetricInput {
        i: usize,
        j: usize,
        left: f64,
        right: f64,
    },

    #[error("negative weight {value} at ({i},{j})")]
    NegativeWeight { i: usize, j: usize, value: f64 },

    #[error("truncation tail mass {tail} is too heavy")]
    TailTooHeavy { tail: f64 },

    #[error("epsilon {epsilon} outside (0, 1/2)")]
    EpsilonOutOfRange { epsilon: f64 },

    #[error("exponent r = {r} outside the supported regime ({expected})")]
    RegimeError { r: f64, expected: &'static str },

    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    SyntaxError {
        /// 1-based character position in the input.
        position: usize,
        expected: String,
        found: String,
    },

    #[error("schema error at {path}: {detail}")]
    SchemaError { path: String, detail: String },

    #[error("domain error in `{subexpr}`: {detail}")]
    DomainError { subexpr: String, detail: String },

    #[error("probe `{probe}` is unbounded on the domain grid")]
    UnboundedProbe { probe: String },

    #[error("quadrature tolerance not met: achieved {achieved:e}, requested {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },

    #[error(
        "representation channels disagree: integral {integral} vs expectation {expectation} \
         (combined tolerance {tolerance:e})"
    )]
    ChannelMismatch {
        integral: f64,
        expectation: f64,
        tolerance: f64,
    },

    #[error("rejection sampler acceptance rate {acceptance:.4} below 1%")]
    RejectionInefficiency { acceptance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
