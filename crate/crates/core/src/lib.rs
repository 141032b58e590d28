//! Distribution functions, singular numbers and stochastic ergodic averages
//! on finite tracial algebras.

pub mod algebra;
pub mod banach;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod par;
pub mod random;
pub mod sequences;
pub mod suites;

pub use algebra::{
    abs_op, operator_norm, proj_join, proj_meet, spectral_decompose, spectral_projection_above,
    trace_norm, trace_of, Block, Operator, Projection, SingularSpectrum, SpectralDecomposition,
    TraceMode, TracialAlgebra, Window,
};
pub use error::{Error, Result};
pub use linalg::{Mat, C64};
pub use par::Execution;
