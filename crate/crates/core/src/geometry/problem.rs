use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::field::Field;
use super::manifold::ManifoldModel;
use super::GeometryError;
use crate::tol::{CRIT_TOL, POINT_TOL, ZERO_EIG_TOL};

/// Parameterization of a connected critical submanifold.
#[derive(Clone, Debug, PartialEq)]
pub enum Parameterization {
    Point(DVector<f64>),
    /// `θ ∈ [0,1) ↦ center + r (cos 2πθ u + sin 2πθ v)`, with `u, v` Euclidean-orthonormal.
    Circle { center: DVector<f64>, u: DVector<f64>, v: DVector<f64>, radius: f64 },
    /// `t ∈ ℝ ↦ origin + t·direction`. Sampled on `[-1, 1]`.
    Line { origin: DVector<f64>, direction: DVector<f64> },
}

impl Parameterization {
    pub fn dim(&self) -> usize {
        match self {
            Parameterization::Point(_) => 0,
            _ => 1,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Parameterization::Circle { .. })
    }

    pub fn point(&self, param: &[f64]) -> DVector<f64> {
        match self {
            Parameterization::Point(p) => p.clone(),
            Parameterization::Circle { center, u, v, radius } => {
                let a = 2.0 * PI * param[0];
                center + (u * a.cos() + v * a.sin()) * *radius
            }
            Parameterization::Line { origin, direction } => origin + direction * param[0],
        }
    }

    /// Derivative of the parameterization; `None` for a point.
    pub fn tangent(&self, param: &[f64]) -> Option<DVector<f64>> {
        match self {
            Parameterization::Point(_) => None,
            Parameterization::Circle { u, v, radius, .. } => {
                let a = 2.0 * PI * param[0];
                Some((v * a.cos() - u * a.sin()) * (2.0 * PI * radius))
            }
            Parameterization::Line { direction, .. } => Some(direction.clone()),
        }
    }

    /// Closest parameter to `x` and the Euclidean distance to the submanifold.
    pub fn closest(&self, x: &DVector<f64>) -> (Vec<f64>, f64) {
        match self {
            Parameterization::Point(p) => (vec![], (x - p).norm()),
            Parameterization::Circle { center, u, v, .. } => {
                let d = x - center;
                let th = d.dot(v).atan2(d.dot(u)) / (2.0 * PI);
                let th = th.rem_euclid(1.0);
                let q = self.point(&[th]);
                (vec![th], (x - q).norm())
            }
            Parameterization::Line { origin, direction } => {
                let t = (x - origin).dot(direction) / direction.norm_squared();
                (vec![t], (x - self.point(&[t])).norm())
            }
        }
    }

    pub fn sample_params(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            Parameterization::Point(_) => vec![vec![]],
            Parameterization::Circle { .. } => (0..n).map(|i| vec![(i as f64 + 0.25) / n as f64]).collect(),
            Parameterization::Line { .. } => {
                (0..n).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / n as f64]).collect()
            }
        }
    }

    pub fn normalize_param(&self, param: &mut [f64]) {
        if self.is_periodic() {
            param[0] = param[0].rem_euclid(1.0);
        }
    }
}

/// A critical point of `h` on its submanifold.
#[derive(Clone, Debug, PartialEq)]
pub struct CritH {
    pub name: String,
    pub param: Vec<f64>,
    pub ind_h: usize,
}

/// Connected component of crit(f) with its Morse function `h` and metric `g₀`.
#[derive(Clone, Debug)]
pub struct CriticalSubmanifold {
    pub name: String,
    pub param: Parameterization,
    pub ind_f: usize,
    /// Ambient polynomial (or field) whose restriction is `h`.
    pub h: Field,
    /// `g₀ = g0_scale · (induced metric)`.
    pub g0_scale: f64,
    pub crit_h: Vec<CritH>,
}

impl CriticalSubmanifold {
    pub fn dim(&self) -> usize {
        self.param.dim()
    }

    pub fn point(&self, param: &[f64]) -> DVector<f64> {
        self.param.point(param)
    }

    /// `h∘φ`.
    pub fn h_param(&self, param: &[f64]) -> f64 {
        self.h.value(self.point(param).as_slice())
    }

    /// Metric coefficient `g₀(∂θ, ∂θ)` for a 1-dimensional submanifold.
    pub fn g0(&self, manifold: &ManifoldModel, param: &[f64]) -> f64 {
        match self.param.tangent(param) {
            Some(t) => self.g0_scale * manifold.inner(&t, &t),
            None => 0.0,
        }
    }

    /// Parameter velocity of the negative `h`-gradient flow, `dθ/ds = -(h∘φ)'/g₀`.
    pub fn h_flow_velocity(&self, manifold: &ManifoldModel, param: &[f64]) -> f64 {
        match self.param.tangent(param) {
            Some(t) => {
                let x = self.point(param);
                let dh = self.h.gradient(x.as_slice()).dot(&t);
                -dh / self.g0(manifold, param)
            }
            None => 0.0,
        }
    }

    /// `(h∘φ)''` by central differences of the exact first derivative.
    pub fn h_second_derivative(&self, param: &[f64]) -> f64 {
        let d1 = |p: f64| {
            let t = self.param.tangent(&[p]).expect("1-dimensional");
            self.h.gradient(self.point(&[p]).as_slice()).dot(&t)
        };
        let s = 1e-5;
        (d1(param[0] + s) - d1(param[0] - s)) / (2.0 * s)
    }
}

#[derive(Clone, Debug)]
pub struct MorseBottProblem {
    pub name: String,
    pub manifold: ManifoldModel,
    pub f: Field,
    pub submanifolds: Vec<CriticalSubmanifold>,
    /// Euler characteristic of the manifold, when known.
    pub euler: Option<i64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubmanifoldReport {
    pub name: String,
    pub dim: usize,
    pub samples: usize,
    pub max_grad: f64,
    pub kernel_dims: Vec<usize>,
    pub ind_f_observed: Vec<usize>,
    pub ind_f_declared: usize,
    pub kernel_mismatch: usize,
    pub crit_h_ok: bool,
    pub passed: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseBottReport {
    pub submanifolds: Vec<SubmanifoldReport>,
    pub worst_kernel_mismatch: usize,
    pub passed: bool,
}

impl MorseBottProblem {
    pub fn new(
        name: impl Into<String>,
        manifold: ManifoldModel,
        f: Field,
        submanifolds: Vec<CriticalSubmanifold>,
    ) -> Result<Self, GeometryError> {
        if f.dim() != manifold.ambient_dim {
            return Err(GeometryError::Invalid("f has the wrong number of variables".into()));
        }
        for s in &submanifolds {
            if s.h.dim() != manifold.ambient_dim {
                return Err(GeometryError::Invalid(format!("h on {} has the wrong number of variables", s.name)));
            }
            if s.crit_h.is_empty() {
                return Err(GeometryError::Invalid(format!("submanifold {} lists no critical points of h", s.name)));
            }
            for c in &s.crit_h {
                if c.param.len() != s.dim() {
                    return Err(GeometryError::Invalid(format!("critical point {} has a bad parameter", c.name)));
                }
                if c.ind_h > s.dim() {
                    return Err(GeometryError::Invalid(format!("critical point {} has ind_h > dim", c.name)));
                }
            }
            if s.g0_scale <= 0.0 {
                return Err(GeometryError::Invalid("g0_scale must be positive".into()));
            }
        }
        Ok(MorseBottProblem { name: name.into(), manifold, f, submanifolds, euler: None })
    }

    pub fn with_euler(mut self, chi: i64) -> Self {
        self.euler = Some(chi);
        self
    }

    /// Same problem with a different constant ambient metric.
    pub fn with_metric(&self, a: nalgebra::DMatrix<f64>) -> Result<Self, GeometryError> {
        let mut p = self.clone();
        p.manifold = p.manifold.with_metric(a)?;
        Ok(p)
    }

    pub fn level(&self, x: &DVector<f64>) -> f64 {
        self.f.value(x.as_slice())
    }

    pub fn sub_level(&self, sub: usize) -> f64 {
        let s = &self.submanifolds[sub];
        self.level(&s.point(&s.crit_h[0].param))
    }

    /// Index of the submanifold containing `x` (within `tol`), if any.
    pub fn locate(&self, x: &DVector<f64>, tol: f64) -> Option<(usize, Vec<f64>)> {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (i, s) in self.submanifolds.iter().enumerate() {
            let (p, d) = s.param.closest(x);
            if d <= tol && best.as_ref().is_none_or(|b| d < b.2) {
                best = Some((i, p, d));
            }
        }
        best.map(|(i, p, _)| (i, p))
    }

    pub fn check_morse_bott(&self, samples_per_sub: usize) -> Result<MorseBottReport, GeometryError> {
        let m = &self.manifold;
        let mut subs = Vec::new();
        for s in &self.submanifolds {
            let params = s.param.sample_params(samples_per_sub.max(1));
            let mut kernel_dims = Vec::new();
            let mut negs = Vec::new();
            let mut max_grad = 0.0f64;
            let mut notes = Vec::new();
            for p in &params {
                let x = s.point(p);
                if m.residual(x.as_slice()) > 10.0 * POINT_TOL {
                    return Err(GeometryError::Sampling {
                        submanifold: s.name.clone(),
                        residual: m.residual(x.as_slice()),
                    });
                }
                let hs = m.hessian_spectrum(self.f.as_ref(), x.as_slice())?;
                max_grad = max_grad.max(hs.grad_norm);
                let (neg, zero, _) = hs.counts(ZERO_EIG_TOL);
                kernel_dims.push(zero);
                negs.push(neg);
            }
            let kernel_mismatch = kernel_dims.iter().map(|&k| k.abs_diff(s.dim())).max().unwrap_or(0);
            if max_grad >= CRIT_TOL {
                notes.push(format!("gradient norm {max_grad:.3e} on the submanifold"));
            }
            if kernel_mismatch > 0 {
                notes.push(format!("Hessian kernel dimension differs from submanifold dimension by {kernel_mismatch}"));
            }
            let ind_ok = negs.iter().all(|&n| n == s.ind_f);
            if !ind_ok {
                notes.push(format!("declared ind_f {} but observed {:?}", s.ind_f, negs));
            }
            let mut crit_h_ok = true;
            for c in &s.crit_h {
                if s.dim() == 0 {
                    continue;
                }
                let v = s.h_flow_velocity(m, &c.param);
                let h2 = s.h_second_derivative(&c.param);
                let idx = usize::from(h2 < 0.0);
                if v.abs() > CRIT_TOL || h2.abs() < ZERO_EIG_TOL || idx != c.ind_h {
                    crit_h_ok = false;
                    notes.push(format!("{}: h' velocity {v:.3e}, h'' {h2:.3e}, declared ind_h {}", c.name, c.ind_h));
                }
            }
            let passed = max_grad < CRIT_TOL && kernel_mismatch == 0 && ind_ok && crit_h_ok;
            subs.push(SubmanifoldReport {
                name: s.name.clone(),
                dim: s.dim(),
                samples: params.len(),
                max_grad,
                kernel_dims,
                ind_f_observed: negs,
                ind_f_declared: s.ind_f,
                kernel_mismatch,
                crit_h_ok,
                passed,
                notes,
            });
        }
        let worst = subs.iter().map(|s| s.kernel_mismatch).max().unwrap_or(0);
        let passed = subs.iter().all(|s| s.passed);
        Ok(MorseBottReport { submanifolds: subs, worst_kernel_mismatch: worst, passed })
    }

    /// Critical points of `f` found by Newton iteration from random chart seeds
    /// that do not lie on any listed submanifold.
    pub fn unlisted_critical_points(&self, seeds: usize, seed: u64) -> Vec<DVector<f64>> {
        let m = &self.manifold;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut found: Vec<DVector<f64>> = Vec::new();
        if m.charts.is_empty() {
            return found;
        }
        for i in 0..seeds {
            let chart = &m.charts[i % m.charts.len()];
            let d = chart.param_dim(m.ambient_dim);
            let u: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let Ok(mut x) = m.project_with(&chart.point(m.ambient_dim, &u), 50, POINT_TOL) else { continue };
            let mut converged = false;
            for _ in 0..60 {
                let Ok(hs) = m.hessian_spectrum(self.f.as_ref(), x.as_slice()) else { break };
                if hs.grad_norm < 1e-11 {
                    converged = true;
                    break;
                }
                let Ok(g) = m.gradient_unchecked(self.f.as_ref(), x.as_slice()) else { break };
                let mut step = DVector::zeros(m.ambient_dim);
                for (k, &l) in hs.eigenvalues.iter().enumerate() {
                    if l.abs() > 1e-8 {
                        let v = hs.eigenvectors.column(k).into_owned();
                        step -= &v * (m.inner(&v, &g) / l);
                    }
                }
                let n = step.norm();
                if n > 0.3 {
                    step *= 0.3 / n;
                }
                match m.project_with(&(&x + step), 50, POINT_TOL) {
                    Ok(y) => x = y,
                    Err(_) => break,
                }
            }
            if !converged || x.amax() > 1e3 {
                continue;
            }
            if self.locate(&x, 1e-5).is_some() {
                continue;
            }
            if found.iter().all(|y| (y - &x).norm() > 1e-5) {
                found.push(x);
            }
        }
        found
    }
}
