use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),

    #[error("operators live in different algebras")]
    AlgebraMismatch,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operator is not self-adjoint (block {block}, deviation {deviation:e})")]
    NotSelfAdjoint { block: usize, deviation: f64 },

    #[error("operator is not positive (block {block}, min eigenvalue {min_eigenvalue:e})")]
    NotPositive { block: usize, min_eigenvalue: f64 },

    #[error("operator is not a projection: {0}")]
    NotProjection(String),

    #[error("eigensolver did not converge on block {block}")]
    NonConvergence { block: usize },

    #[error("translation moves site {site} to {target}, outside the window [{lo}, {hi}]")]
    WindowOverflow { site: i64, target: i64, lo: i64, hi: i64 },

    #[error("invalid automorphism: {0}")]
    InvalidAutomorphism(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("empty sequence")]
    EmptySequence,

    #[error("weight sequence is undefined at index {0}")]
    WeightOutOfRange(usize),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
