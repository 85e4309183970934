use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::poly::Polynomial;
use crate::tol::{FD_STEP, FD_TOL};

/// A smooth function on ambient space ℝ^D.
///
/// Only `value` is required. The default gradient is a central difference with
/// step [`FD_STEP`]; when that disagrees with the coarser step 1e-4, a Richardson
/// extrapolation from steps 1e-4 and 1e-6 is returned instead.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let g = central_difference(self, x, FD_STEP);
        let coarse = central_difference(self, x, 1e-4);
        if (&g - &coarse).amax() <= FD_TOL * (1.0 + g.amax()) {
            return g;
        }
        let fine = central_difference(self, x, 1e-6);
        // D(h) = g + a h^2 + ...; eliminate the h^2 term between h=1e-4 and h=1e-6.
        (fine * 1e4 - coarse) / (1e4 - 1.0)
    }

    /// Polynomial form if the field has one.
    fn as_polynomial(&self) -> Option<&Polynomial> {
        None
    }
}

pub fn central_difference<F: ScalarField + ?Sized>(f: &F, x: &[f64], h: f64) -> DVector<f64> {
    let mut y = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        let xi = y[i];
        y[i] = xi + h;
        let fp = f.value(&y);
        y[i] = xi - h;
        let fm = f.value(&y);
        y[i] = xi;
        (fp - fm) / (2.0 * h)
    })
}

/// Polynomial field with exact gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField(pub Polynomial);

impl ScalarField for PolyField {
    fn dim(&self) -> usize {
        self.0.nvars
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        self.0.gradient(x)
    }
    fn as_polynomial(&self) -> Option<&Polynomial> {
        Some(&self.0)
    }
}

/// Field given by a closure; derivatives by finite differences.
pub struct FnField {
    dim: usize,
    name: String,
    f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FnField {
    pub fn new(dim: usize, name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnField { dim, name: name.into(), f: Box::new(f) }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({}, dim={})", self.name, self.dim)
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

pub type Field = Arc<dyn ScalarField>;

pub fn poly_field(p: Polynomial) -> Field {
    Arc::new(PolyField(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_matches_exact() {
        let p = Polynomial::var(2, 0).powi(3) - Polynomial::var(2, 1).scale(2.0);
        let exact = PolyField(p.clone());
        let fd = FnField::new(2, "cubic", move |x| p.eval(x));
        let x = [0.7, -1.3];
        assert!((exact.gradient(&x) - fd.gradient(&x)).amax() < 1e-8);
    }

    #[test]
    fn richardson_fallback_on_stiff_field() {
        let f = FnField::new(1, "exp", |x| (30.0 * x[0]).exp());
        let g = f.gradient(&[0.1]);
        let exact = 30.0 * 3f64.exp();
        assert!(((g[0] - exact) / exact).abs() < 1e-8);
    }
}
