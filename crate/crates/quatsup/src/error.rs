use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto distinct exit
/// codes, so keep the partition coarse and stable: parameter/validation
/// problems, order-certification failures, stabilization failures and
/// resource refusals.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported algebra: {0}")]
    UnsupportedAlgebra(String),

    #[error("algebra parameters do not match: {0}")]
    AlgebraMismatch(String),

    #[error("basis is not of full rank: {0}")]
    Rank(String),

    #[error("lattice not closed under multiplication: product e{i}*e{j} has non-integral coordinate {coordinate}")]
    Closure {
        i: usize,
        j: usize,
        coordinate: String,
    },

    #[error("order axiom violated: {0}")]
    OrderAxiom(String),

    #[error("enumeration would exceed the resource budget: estimated {estimated} points, budget {budget}")]
    Resource { estimated: u64, budget: u64 },

    #[error("coset count failed to stabilize after {rounds} rounds")]
    CosetStabilization {
        rounds: u32,
        /// (radius, coset count) per doubling round.
        history: Vec<(f64, usize)>,
        /// Partial decomposition at the largest radius tried.
        partial: Box<crate::slice::NormSlice>,
    },

    #[error("kernel sum failed to stabilize after {rounds} rounds (last change {last_change:e})")]
    KernelStabilization {
        rounds: u32,
        last_change: f64,
        /// Partial evaluation at the largest radius tried.
        partial: Box<crate::kernel::KernelEvaluation>,
    },

    #[error("input sequence is missing required index {0}")]
    MissingIndex(u64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
