//! Default numerical tolerances shared across modules.

/// Constraint residual accepted for a point on the manifold.
pub const POINT_TOL: f64 = 1e-10;
/// Symmetry/idempotence residual of tangent projectors.
pub const PROJ_TOL: f64 = 1e-10;
/// Gradient norm below which a point counts as critical.
pub const CRIT_TOL: f64 = 1e-6;
/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Directional-derivative residual for gradients.
pub const FD_TOL: f64 = 1e-6;
/// Symmetry residual of finite-difference Hessians.
pub const HESS_TOL: f64 = 1e-6;
/// Hessian eigenvalues with |λ| below this are counted as kernel.
pub const ZERO_EIG_TOL: f64 = 1e-6;
/// Maximum Newton iterations when projecting onto the constraint set.
pub const PROJECT_MAX_ITER: usize = 5;
/// Monotonicity slack for f along a trajectory.
pub const INTEGRATOR_TOL: f64 = 1e-12;
/// Two critical values closer than this are treated as equal.
pub const LEVEL_TOL: f64 = 1e-9;
