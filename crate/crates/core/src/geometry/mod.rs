//! Embedded manifolds, scalar fields and Morse-Bott critical data.

mod field;
mod manifold;
mod problem;
pub mod registry;

pub use field::{central_difference, poly_field, Field, FnField, PolyField, ScalarField};
pub use manifold::{Chart, HessianSpectrum, ManifoldModel};
pub use problem::{
    CritH, CriticalSubmanifold, MorseBottProblem, MorseBottReport, Parameterization, SubmanifoldReport,
};
pub use registry::{example, ProblemSpec, REGISTRY};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("point is off the manifold: constraint residual {residual:.3e} exceeds {tol:.1e}")]
    OffManifold { residual: f64, tol: f64 },
    #[error("constraint Jacobian is rank deficient (smallest pivot {sigma_min:.3e})")]
    DegenerateConstraint { sigma_min: f64 },
    #[error("Newton projection did not reach the manifold (residual {residual:.3e})")]
    ProjectionFailed { residual: f64 },
    #[error("sampling {submanifold} left the manifold (residual {residual:.3e})")]
    Sampling { submanifold: String, residual: f64 },
    #[error("unknown example '{0}'")]
    UnknownExample(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
}
