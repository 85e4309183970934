use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use super::GeometryError;
use crate::poly::Polynomial;
use crate::tol::{CRIT_TOL, HESS_TOL, POINT_TOL, PROJECT_MAX_ITER};

/// Named parameterization used to seed searches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Chart {
    /// Unit sphere in ℝ³ in polar coordinates about coordinate `axis`.
    Spherical { axis: usize },
    /// Product of unit circles in the coordinate planes (0,1), (2,3), ...
    TorusAngles { factors: usize },
    /// Box `[lo, hi]^D` in ambient coordinates (for c = 0).
    Box { lo: f64, hi: f64 },
}

impl Chart {
    pub fn param_dim(&self, ambient_dim: usize) -> usize {
        match self {
            Chart::Spherical { .. } => 2,
            Chart::TorusAngles { factors } => *factors,
            Chart::Box { .. } => ambient_dim,
        }
    }

    /// Map `u ∈ [0,1]^d` to an ambient point.
    pub fn point(&self, ambient_dim: usize, u: &[f64]) -> DVector<f64> {
        match self {
            Chart::Spherical { axis } => {
                let (th, ph) = (PI * u[0], 2.0 * PI * u[1]);
                let mut x = DVector::zeros(3);
                x[*axis] = th.cos();
                x[(axis + 1) % 3] = th.sin() * ph.cos();
                x[(axis + 2) % 3] = th.sin() * ph.sin();
                x
            }
            Chart::TorusAngles { factors } => {
                let mut x = DVector::zeros(2 * factors);
                for k in 0..*factors {
                    let a = 2.0 * PI * u[k];
                    x[2 * k] = a.cos();
                    x[2 * k + 1] = a.sin();
                }
                x
            }
            Chart::Box { lo, hi } => DVector::from_fn(ambient_dim, |i, _| lo + (hi - lo) * u[i]),
        }
    }
}

/// Embedded submanifold `{constraint = 0} ⊂ ℝ^D` with a constant ambient metric.
#[derive(Clone, Debug)]
pub struct ManifoldModel {
    pub name: String,
    pub ambient_dim: usize,
    pub constraints: Vec<Polynomial>,
    pub charts: Vec<Chart>,
    pub compact: bool,
    metric: Option<Metric>,
}

#[derive(Clone, Debug)]
struct Metric {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

/// Tangential Hessian at a point, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HessianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Ambient eigenvectors as columns, orthonormal for the ambient metric.
    pub eigenvectors: DMatrix<f64>,
    pub symmetry_residual: f64,
    pub grad_norm: f64,
    /// Set when the point is not critical or the Hessian is far from symmetric.
    pub untrusted: bool,
}

impl HessianSpectrum {
    pub fn counts(&self, zero_tol: f64) -> (usize, usize, usize) {
        let neg = self.eigenvalues.iter().filter(|&&l| l < -zero_tol).count();
        let zero = self.eigenvalues.iter().filter(|&&l| l.abs() <= zero_tol).count();
        (neg, zero, self.eigenvalues.len() - neg - zero)
    }

    pub fn min_nonzero_abs(&self, zero_tol: f64) -> Option<f64> {
        self.eigenvalues.iter().map(|l| l.abs()).filter(|&l| l > zero_tol).reduce(f64::min)
    }

    /// Eigenvectors whose eigenvalue satisfies `pred`, as columns.
    pub fn select(&self, pred: impl Fn(f64) -> bool) -> Vec<DVector<f64>> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| pred(l))
            .map(|(i, _)| self.eigenvectors.column(i).into_owned())
            .collect()
    }
}

impl ManifoldModel {
    pub fn new(name: impl Into<String>, ambient_dim: usize, constraints: Vec<Polynomial>) -> Result<Self, GeometryError> {
        for (i, c) in constraints.iter().enumerate() {
            if c.nvars != ambient_dim {
                return Err(GeometryError::Invalid(format!(
                    "constraint {i} has {} variables, ambient dimension is {ambient_dim}",
                    c.nvars
                )));
            }
        }
        if constraints.len() > ambient_dim {
            return Err(GeometryError::Invalid("more constraints than ambient dimensions".into()));
        }
        Ok(ManifoldModel { name: name.into(), ambient_dim, constraints, charts: Vec::new(), compact: false, metric: None })
    }

    pub fn euclidean(name: impl Into<String>, ambient_dim: usize) -> Self {
        ManifoldModel::new(name, ambient_dim, Vec::new()).expect("no constraints")
    }

    pub fn with_charts(mut self, charts: Vec<Chart>) -> Self {
        self.charts = charts;
        self
    }

    pub fn with_compact(mut self, compact: bool) -> Self {
        self.compact = compact;
        self
    }

    /// Replace the ambient metric by a constant symmetric positive-definite matrix.
    pub fn with_metric(mut self, a: DMatrix<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != self.ambient_dim || a.ncols() != self.ambient_dim {
            return Err(GeometryError::Invalid("metric has wrong shape".into()));
        }
        if (&a - a.transpose()).amax() > 1e-12 {
            return Err(GeometryError::Invalid("metric is not symmetric".into()));
        }
        let chol = a.clone().cholesky().ok_or_else(|| GeometryError::Invalid("metric is not positive definite".into()))?;
        let a_inv = chol.inverse();
        self.metric = Some(Metric { a, a_inv });
        Ok(self)
    }

    pub fn metric_matrix(&self) -> DMatrix<f64> {
        match &self.metric {
            Some(m) => m.a.clone(),
            None => DMatrix::identity(self.ambient_dim, self.ambient_dim),
        }
    }

    pub fn has_custom_metric(&self) -> bool {
        self.metric.is_some()
    }

    pub fn codim(&self) -> usize {
        self.constraints.len()
    }

    pub fn dim(&self) -> usize {
        self.ambient_dim - self.codim()
    }

    /// Inner product for the ambient metric.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match &self.metric {
            Some(m) => u.dot(&(&m.a * v)),
            None => u.dot(v),
        }
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    pub fn constraint_values(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.codim(), self.constraints.iter().map(|c| c.eval(x)))
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.constraint_values(x).amax()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.codim(), self.ambient_dim);
        for (r, c) in self.constraints.iter().enumerate() {
            j.set_row(r, &c.gradient(x).transpose());
        }
        j
    }

    pub fn check_on(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.ambient_dim {
            return Err(GeometryError::Invalid(format!("point has dimension {}, expected {}", x.len(), self.ambient_dim)));
        }
        let r = self.residual(x);
        if r > POINT_TOL || !r.is_finite() {
            return Err(GeometryError::OffManifold { residual: r, tol: POINT_TOL });
        }
        Ok(())
    }

    /// Solve `(J M Jᵀ) y = b` where `M` is the inverse metric; rejects rank deficiency.
    fn normal_solve(&self, j: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let jm = match &self.metric {
            Some(m) => j * &m.a_inv,
            None => j.clone(),
        };
        let gram = &jm * j.transpose();
        let scale = gram.amax().max(1e-300);
        let chol = gram.clone().cholesky().ok_or(GeometryError::DegenerateConstraint { sigma_min: 0.0 })?;
        let d = chol.l().diagonal();
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if dmin * dmin < 1e-12 * scale {
            return Err(GeometryError::DegenerateConstraint { sigma_min: dmin });
        }
        Ok(chol.solve(b))
    }

    /// Newton projection onto the constraint set (at most `max_iter` steps).
    pub fn project_with(&self, x: &DVector<f64>, max_iter: usize, tol: f64) -> Result<DVector<f64>, GeometryError> {
        if self.codim() == 0 {
            return Ok(x.clone());
        }
        // Polish below tol when it is cheap; accept anything within tol at the end.
        let mut y = x.clone();
        for it in 0..=max_iter {
            let c = self.constraint_values(y.as_slice());
            let r = c.amax();
            if !r.is_finite() {
                break;
            }
            if r <= 1e-3 * tol || (it == max_iter && r <= tol) {
                return Ok(y);
            }
            let j = self.jacobian(y.as_slice());
            let lam = self.normal_solve(&j, &c)?;
            let step = match &self.metric {
                Some(m) => &m.a_inv * (j.transpose() * lam),
                None => j.transpose() * lam,
            };
            y -= step;
        }
        Err(GeometryError::ProjectionFailed { residual: self.residual(y.as_slice()) })
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        self.project_with(x, PROJECT_MAX_ITER, POINT_TOL)
    }

    /// Euclidean orthogonal projector onto `ker J`.
    pub fn tangent_projector(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let n = self.ambient_dim;
        let mut p = DMatrix::identity(n, n);
        if self.codim() == 0 {
            return Ok(p);
        }
        let j = self.jacobian(x);
        let gram = &j * j.transpose();
        let chol = gram.cholesky().ok_or(GeometryError::DegenerateConstraint { sigma_min: 0.0 })?;
        let sol = chol.solve(&j);
        p -= j.transpose() * sol;
        Ok(p)
    }

    /// Euclidean-orthonormal basis of the tangent space, as columns.
    pub fn tangent_basis(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let n = self.ambient_dim;
        if self.codim() == 0 {
            return Ok(DMatrix::identity(n, n));
        }
        let p = self.tangent_projector(x)?;
        let eig = SymmetricEigen::new(p);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let d = self.dim();
        let mut b = DMatrix::zeros(n, d);
        for (k, &i) in idx.iter().take(d).enumerate() {
            if eig.eigenvalues[i] < 0.5 {
                return Err(GeometryError::DegenerateConstraint { sigma_min: eig.eigenvalues[i] });
            }
            b.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok(b)
    }

    /// Riemannian gradient without checking that `x` lies on the manifold.
    ///
    /// Also used at Runge-Kutta stages slightly off the constraint set, where the
    /// extension by the ambient formula is what the integrator wants.
    pub fn gradient_unchecked(&self, f: &dyn ScalarField, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let df = f.gradient(x);
        let raw = match &self.metric {
            Some(m) => &m.a_inv * &df,
            None => df,
        };
        if self.codim() == 0 {
            return Ok(raw);
        }
        let j = self.jacobian(x);
        let lam = self.normal_solve(&j, &(&j * &raw))?;
        let corr = j.transpose() * lam;
        Ok(match &self.metric {
            Some(m) => raw - &m.a_inv * corr,
            None => raw - corr,
        })
    }

    /// Gradient of `f` for the induced metric at a point of the manifold.
    pub fn gradient(&self, f: &dyn ScalarField, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        self.check_on(x)?;
        self.gradient_unchecked(f, x)
    }

    /// Tangential Hessian by projected central differences of the gradient field.
    ///
    /// At a critical point the derivative of the tangential gradient field,
    /// projected back to the tangent space, is the covariant Hessian; the
    /// second-fundamental-form term comes for free.
    pub fn hessian_spectrum(&self, f: &dyn ScalarField, x: &[f64]) -> Result<HessianSpectrum, GeometryError> {
        self.check_on(x)?;
        let b = self.tangent_basis(x)?;
        let d = b.ncols();
        let a = self.metric_matrix();
        let grad = self.gradient_unchecked(f, x)?;
        let grad_norm = self.norm(&grad);
        let h = crate::tol::FD_STEP;
        let xv = DVector::from_column_slice(x);
        let mut dg = DMatrix::zeros(self.ambient_dim, d);
        for k in 0..d {
            let col = b.column(k).into_owned();
            let gp = self.gradient_unchecked(f, (&xv + &col * h).as_slice())?;
            let gm = self.gradient_unchecked(f, (&xv - &col * h).as_slice())?;
            dg.set_column(k, &((gp - gm) / (2.0 * h)));
        }
        // Bilinear form in the basis b: H_ij = <b_i, A dG b_j>.
        let hb = b.transpose() * &a * &dg;
        let sym_res = (&hb - hb.transpose()).amax();
        let hs = (&hb + hb.transpose()) * 0.5;
        let gb = b.transpose() * &a * &b;
        let chol = gb.cholesky().ok_or_else(|| GeometryError::Invalid("metric restricted to tangent space is singular".into()))?;
        let l = chol.l();
        let linv = l.clone().try_inverse().ok_or_else(|| GeometryError::Invalid("singular metric factor".into()))?;
        let c = &linv * hs * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let lt_inv = linv.transpose();
        let mut vecs = DMatrix::zeros(self.ambient_dim, d);
        let mut vals = Vec::with_capacity(d);
        for (k, &i) in idx.iter().enumerate() {
            vals.push(eig.eigenvalues[i]);
            let y = &lt_inv * eig.eigenvectors.column(i);
            vecs.set_column(k, &(&b * y));
        }
        let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(HessianSpectrum {
            eigenvalues: vals,
            eigenvectors: vecs,
            symmetry_residual: sym_res,
            grad_norm,
            untrusted: grad_norm > CRIT_TOL || sym_res > HESS_TOL * scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::field::PolyField;

    fn sphere() -> ManifoldModel {
        let x = |i| Polynomial::var(3, i);
        let c = &(&(&x(0).powi(2) + &x(1).powi(2)) + &x(2).powi(2)) - &Polynomial::constant(3, 1.0);
        ManifoldModel::new("S2", 3, vec![c]).unwrap()
    }

    #[test]
    fn projector_is_symmetric_idempotent() {
        let m = sphere();
        let x = [0.6, 0.0, 0.8];
        let p = m.tangent_projector(&x).unwrap();
        assert!((&p - p.transpose()).amax() < 1e-14);
        assert!((&p * &p - &p).amax() < 1e-14);
        assert!((p.trace() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn projection_returns_to_sphere() {
        let m = sphere();
        let y = m.project(&DVector::from_vec(vec![0.61, 0.01, 0.79])).unwrap();
        assert!(m.residual(y.as_slice()) < 1e-12);
    }

    #[test]
    fn off_manifold_point_rejected() {
        let m = sphere();
        let f = PolyField(Polynomial::var(3, 2));
        match m.gradient(&f, &[1.0, 0.0, 0.1]) {
            Err(GeometryError::OffManifold { residual, .. }) => assert!((residual - 0.01).abs() < 1e-12),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_constraint_rejected() {
        // x^2 = 0 has zero gradient on its zero set.
        let m = ManifoldModel::new("bad", 2, vec![Polynomial::var(2, 0).powi(2)]).unwrap();
        let f = PolyField(Polynomial::var(2, 1));
        assert!(matches!(m.gradient(&f, &[0.0, 0.3]), Err(GeometryError::DegenerateConstraint { .. })));
    }

    #[test]
    fn weingarten_term_included() {
        // f = z on S² at the north pole: covariant Hessian is -I.
        let m = sphere();
        let f = PolyField(Polynomial::var(3, 2));
        let s = m.hessian_spectrum(&f, &[0.0, 0.0, 1.0]).unwrap();
        for l in &s.eigenvalues {
            assert!((l + 1.0).abs() < 1e-8, "{l}");
        }
        assert!(!s.untrusted);
    }

    #[test]
    fn metric_gradient_solves_saddle_system() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
        let m = sphere().with_metric(a.clone()).unwrap();
        let f = PolyField(&Polynomial::var(3, 0) + &Polynomial::var(3, 2).scale(2.0));
        let x = [0.6, 0.0, 0.8];
        let g = m.gradient(&f, &x).unwrap();
        assert!((m.jacobian(&x) * &g)[0].abs() < 1e-13);
        // <g, v>_A = df[v] for tangent v
        let b = m.tangent_basis(&x).unwrap();
        let df = f.gradient(&x);
        for k in 0..2 {
            let v = b.column(k).into_owned();
            assert!((m.inner(&g, &v) - df.dot(&v)).abs() < 1e-13);
        }
    }
}
