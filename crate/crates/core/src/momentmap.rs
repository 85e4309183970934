//! Moment maps of linear unitary actions on ℂ^N and the regularity/freeness check.
//!
//! Conventions: ω(u, v) = Im(u* v) on ℂ^N, ι(X)ω = ω(X, ·), and the infinitesimal
//! action of a Lie algebra coordinate vector ξ is X_ξ(z) = Σ ξ_i ρ̇(e_i) z. The pairing
//! on Lie algebra coordinates is ⟨a, b⟩ = aᵀ Q b with Q the Gram matrix of the
//! generators under Re trace(A* B). With these choices every moment map below
//! satisfies d⟨μ, ξ⟩ = ι(X_ξ)ω.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type C64 = Complex<f64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Newton tolerance on |μ| and iteration cap when sampling μ⁻¹(0).
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Smallest singular value of dμ accepted as regular.
pub const REGULAR_TOL: f64 = 1e-4;
/// Orbit displacement below which a group element counts as a stabilizer.
pub const ORBIT_TOL: f64 = 1e-4;
/// Group elements probed per point.
pub const GROUP_GRID: usize = 1000;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MomentError {
    #[error("toric weight matrix must have rank {0}")]
    RankDeficient(usize),
    #[error("generator {0} is not skew-Hermitian")]
    NotSkewHermitian(usize),
    #[error("generators are not orthonormal for Re trace(A* B): deviation {0:.3e}")]
    NotOrthonormal(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown action {0}")]
    Unknown(String),
}

#[derive(Debug, Clone)]
pub enum ActionKind {
    /// T^k acting on ℂ^n through the integer weight matrix `a` (k × n).
    Toric { a: DMatrix<f64>, tau: DVector<f64> },
    /// U(k) acting on n × k frames by right multiplication.
    Grassmann { n: usize, k: usize },
    /// Skew-Hermitian generators, orthonormal for Re trace(A* B).
    General { generators: Vec<DMatrix<C64>>, tau: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct LinearGroupAction {
    pub name: String,
    pub kind: ActionKind,
    generators: Vec<DMatrix<C64>>,
    gram: DMatrix<f64>,
}

fn frob(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn gram_of(gens: &[DMatrix<C64>]) -> DMatrix<f64> {
    let d = gens.len();
    DMatrix::from_fn(d, d, |i, j| frob(&gens[i], &gens[j]))
}

/// Basis of u(k): i·E_jj, then E_jl − E_lj and i(E_jl + E_lj) for j < l.
pub fn u_basis(k: usize) -> Vec<DMatrix<C64>> {
    let mut out = Vec::new();
    for j in 0..k {
        let mut m = DMatrix::zeros(k, k);
        m[(j, j)] = I;
        out.push(m);
    }
    for j in 0..k {
        for l in j + 1..k {
            let mut m = DMatrix::zeros(k, k);
            m[(j, l)] = C64::new(1.0, 0.0);
            m[(l, j)] = C64::new(-1.0, 0.0);
            out.push(m);
            let mut m = DMatrix::zeros(k, k);
            m[(j, l)] = I;
            m[(l, j)] = I;
            out.push(m);
        }
    }
    out
}

// Right multiplication B ↦ Bξ on column-major vec(B) is ξᵀ ⊗ I_n.
fn right_mult(n: usize, xi: &DMatrix<C64>) -> DMatrix<C64> {
    xi.transpose().kronecker(&DMatrix::identity(n, n))
}

impl LinearGroupAction {
    pub fn toric(name: impl Into<String>, a: DMatrix<f64>, tau: DVector<f64>) -> Result<Self, MomentError> {
        let k = a.nrows();
        if tau.len() != k {
            return Err(MomentError::Dimension(format!("tau has length {}, expected {k}", tau.len())));
        }
        if a.rank(1e-9) != k {
            return Err(MomentError::RankDeficient(k));
        }
        let generators: Vec<DMatrix<C64>> = (0..k)
            .map(|j| DMatrix::from_fn(a.ncols(), a.ncols(), |r, c| if r == c { -0.5 * I * a[(j, r)] } else { C64::new(0.0, 0.0) }))
            .collect();
        let gram = gram_of(&generators);
        Ok(LinearGroupAction { name: name.into(), kind: ActionKind::Toric { a, tau }, generators, gram })
    }

    pub fn grassmann(name: impl Into<String>, n: usize, k: usize) -> Result<Self, MomentError> {
        if k == 0 || k > n {
            return Err(MomentError::Dimension(format!("need 1 <= k <= n, got n={n}, k={k}")));
        }
        let basis = u_basis(k);
        let gram = gram_of(&basis);
        let generators = basis.iter().map(|xi| right_mult(n, xi)).collect();
        Ok(LinearGroupAction { name: name.into(), kind: ActionKind::Grassmann { n, k }, generators, gram })
    }

    pub fn general(name: impl Into<String>, generators: Vec<DMatrix<C64>>, tau: DVector<f64>) -> Result<Self, MomentError> {
        if generators.is_empty() || tau.len() != generators.len() {
            return Err(MomentError::Dimension("need one tau entry per generator".into()));
        }
        let n = generators[0].nrows();
        for (i, g) in generators.iter().enumerate() {
            if g.nrows() != n || g.ncols() != n {
                return Err(MomentError::Dimension(format!("generator {i} is not {n} x {n}")));
            }
            if (g + g.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max) > 1e-12 {
                return Err(MomentError::NotSkewHermitian(i));
            }
        }
        let gram = gram_of(&generators);
        let dev = (&gram - DMatrix::identity(gram.nrows(), gram.ncols())).amax();
        if dev > 1e-9 {
            return Err(MomentError::NotOrthonormal(dev));
        }
        Ok(LinearGroupAction { name: name.into(), kind: ActionKind::General { generators: generators.clone(), tau }, generators, gram })
    }

    /// Complex dimension of the space acted on.
    pub fn space_dim(&self) -> usize {
        self.generators[0].nrows()
    }

    pub fn group_dim(&self) -> usize {
        self.generators.len()
    }

    /// ρ̇(e_i) for each Lie algebra coordinate.
    pub fn generators(&self) -> &[DMatrix<C64>] {
        &self.generators
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// dim_ℝ of the quotient μ⁻¹(0)/G.
    pub fn quotient_dim(&self) -> i64 {
        2 * self.space_dim() as i64 - 2 * self.group_dim() as i64
    }

    /// Moment map in Lie algebra coordinates.
    pub fn moment(&self, z: &DVector<C64>) -> Result<DVector<f64>, MomentError> {
        match &self.kind {
            ActionKind::Toric { .. } => moment_toric(self, z),
            ActionKind::Grassmann { n, k } => {
                let b = DMatrix::from_column_slice(*n, *k, z.as_slice());
                Ok(skew_coords(&moment_grassmann(&b)))
            }
            ActionKind::General { .. } => moment_general(self, z),
        }
    }

    /// X_ξ(z) = Σ ξ_i ρ̇(e_i) z.
    pub fn vector_field(&self, z: &DVector<C64>, xi: &[f64]) -> DVector<C64> {
        let mut out = DVector::zeros(z.len());
        for (g, &x) in self.generators.iter().zip(xi) {
            out += g * z * C64::new(x, 0.0);
        }
        out
    }

    /// ρ(exp(Σ t_i e_i)).
    pub fn group_element(&self, t: &[f64]) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.space_dim(), self.space_dim());
        for (g, &x) in self.generators.iter().zip(t) {
            m += g * C64::new(x, 0.0);
        }
        let diagonal = m.iter().enumerate().all(|(idx, v)| idx % (m.nrows() + 1) == 0 || v.norm() == 0.0);
        if diagonal {
            DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| if r == c { m[(r, r)].exp() } else { C64::new(0.0, 0.0) })
        } else {
            m.exp()
        }
    }

    fn is_torus(&self) -> bool {
        let n = self.space_dim();
        self.generators.iter().all(|g| (0..n).all(|r| (0..n).all(|c| r == c || g[(r, c)].norm() == 0.0)))
    }
}

// Coordinates of a skew-Hermitian matrix in `u_basis`.
fn skew_coords(m: &DMatrix<C64>) -> DVector<f64> {
    let k = m.nrows();
    let mut out = Vec::new();
    for j in 0..k {
        out.push(m[(j, j)].im);
    }
    for j in 0..k {
        for l in j + 1..k {
            out.push(m[(j, l)].re);
            out.push(m[(j, l)].im);
        }
    }
    DVector::from_vec(out)
}

/// (AAᵀ)⁻¹ A (|z₁|², …, |z_n|²)ᵀ − τ.
///
/// This is (1/2i)(AAᵀ)⁻¹A|z|² − τ read through iℝ^k ≅ ℝ^k, η ↦ 2iη, which is what
/// the generators ρ̇(e_j) = −(i/2)·diag(A_j) make of −½ρ̇*(izz*) − τ.
pub fn moment_toric(action: &LinearGroupAction, z: &DVector<C64>) -> Result<DVector<f64>, MomentError> {
    let ActionKind::Toric { a, tau } = &action.kind else {
        return Err(MomentError::Dimension("not a toric action".into()));
    };
    if z.len() != a.ncols() {
        return Err(MomentError::Dimension(format!("z has length {}, expected {}", z.len(), a.ncols())));
    }
    let r = DVector::from_iterator(z.len(), z.iter().map(|c| c.norm_sqr()));
    let aat = a * a.transpose();
    let sol = aat.lu().solve(&(a * r)).ok_or(MomentError::RankDeficient(a.nrows()))?;
    Ok(sol - tau)
}

/// (1/2i)(B*B − id).
pub fn moment_grassmann(b: &DMatrix<C64>) -> DMatrix<C64> {
    let k = b.ncols();
    (b.adjoint() * b - DMatrix::identity(k, k)) * (C64::new(0.5, 0.0) / I)
}

/// −½ ρ̇*(i z z*) − τ in the orthonormal generator basis.
pub fn moment_general(action: &LinearGroupAction, z: &DVector<C64>) -> Result<DVector<f64>, MomentError> {
    let tau = match &action.kind {
        ActionKind::General { tau, .. } => tau,
        _ => return Err(MomentError::Dimension("not a general action".into())),
    };
    if z.len() != action.space_dim() {
        return Err(MomentError::Dimension(format!("z has length {}, expected {}", z.len(), action.space_dim())));
    }
    let izz = z * z.adjoint() * I;
    Ok(DVector::from_iterator(action.group_dim(), action.generators.iter().map(|g| -0.5 * frob(g, &izz))) - tau)
}

fn to_real(z: &DVector<C64>) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

fn to_complex(x: &DVector<f64>) -> DVector<C64> {
    let n = x.len() / 2;
    DVector::from_fn(n, |i, _| C64::new(x[i], x[i + n]))
}

/// ω(u, v) = Im(u* v).
pub fn omega(u: &DVector<C64>, v: &DVector<C64>) -> f64 {
    u.dotc(v).im
}

/// sup over the real coordinate directions v of |∂_v⟨μ, ξ⟩ − ω(X_ξ(z), v)|, with
/// the derivative taken by central differences of step `h`.
pub fn verify_moment_identity_with_step(action: &LinearGroupAction, z: &DVector<C64>, xi: &[f64], h: f64) -> Result<f64, MomentError> {
    if xi.len() != action.group_dim() || z.len() != action.space_dim() {
        return Err(MomentError::Dimension("xi or z has the wrong length".into()));
    }
    let q = DVector::from_column_slice(xi);
    let pair = |w: &DVector<C64>| -> Result<f64, MomentError> { Ok(action.moment(w)?.dot(&(&action.gram * &q))) };
    let x = action.vector_field(z, xi);
    let mut worst = 0.0f64;
    for d in 0..2 * z.len() {
        let mut v = DVector::zeros(z.len());
        v[d % z.len()] = if d < z.len() { C64::new(1.0, 0.0) } else { I };
        let fd = (pair(&(z + &v * C64::new(h, 0.0)))? - pair(&(z - &v * C64::new(h, 0.0)))?) / (2.0 * h);
        worst = worst.max((fd - omega(&x, &v)).abs());
    }
    Ok(worst)
}

/// Moment identity residual at the default finite-difference step 1e-5.
pub fn verify_moment_identity(action: &LinearGroupAction, z: &DVector<C64>, xi: &[f64]) -> Result<f64, MomentError> {
    verify_moment_identity_with_step(action, z, xi, 1e-5)
}

/// Real d × 2N Jacobian of μ, from d⟨μ, e_i⟩ = ω(X_i, ·).
pub fn moment_jacobian(action: &LinearGroupAction, z: &DVector<C64>) -> DMatrix<f64> {
    let d = action.group_dim();
    let n = z.len();
    let mut rows = DMatrix::zeros(d, 2 * n);
    for (i, g) in action.generators.iter().enumerate() {
        let x = g * z;
        for j in 0..n {
            // Im(conj(x) v) = x.re v.im − x.im v.re
            rows[(i, j)] = -x[j].im;
            rows[(i, j + n)] = x[j].re;
        }
    }
    action.gram.clone().lu().solve(&rows).unwrap_or(rows)
}

/// Newton iteration z ← z − dμ⁺ μ(z) to the zero level.
pub fn newton_to_zero(action: &LinearGroupAction, z0: &DVector<C64>) -> Result<Option<DVector<C64>>, MomentError> {
    let mut x = to_real(z0);
    for _ in 0..NEWTON_MAX_ITER {
        let z = to_complex(&x);
        let m = action.moment(&z)?;
        if m.norm() < NEWTON_TOL {
            return Ok(Some(z));
        }
        let j = moment_jacobian(action, &z);
        let step = match j.clone().pseudo_inverse(1e-14) {
            Ok(p) => p * m,
            Err(_) => return Ok(None),
        };
        if !step.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        x -= step;
    }
    let z = to_complex(&x);
    Ok((action.moment(&z)?.norm() < NEWTON_TOL).then_some(z))
}

fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

// Group elements probed for stabilizers: a lattice over the period box for tori,
// seeded random exponentials otherwise. The identity is excluded.
pub fn group_probes(action: &LinearGroupAction, seed: u64) -> Vec<DMatrix<C64>> {
    let d = action.group_dim();
    let mut out = Vec::new();
    if action.is_torus() {
        // Periods: exp(t g) = id when t·|diag| ∈ 2πℤ for every entry.
        let periods: Vec<f64> = action
            .generators
            .iter()
            .map(|g| {
                let w: Vec<f64> = (0..g.nrows()).map(|r| g[(r, r)].im.abs()).filter(|&v| v > 1e-12).collect();
                let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
                // Integer multiples of the smallest weight share its period.
                if w.iter().all(|v| (v / lo - (v / lo).round()).abs() < 1e-9) {
                    2.0 * std::f64::consts::PI / lo
                } else {
                    2.0 * std::f64::consts::PI / lo * 64.0
                }
            })
            .collect();
        let side = (GROUP_GRID as f64).powf(1.0 / d as f64).floor().max(2.0) as usize;
        let total = side.pow(d as u32);
        for idx in 1..total {
            let mut rem = idx;
            let t: Vec<f64> = (0..d)
                .map(|i| {
                    let c = rem % side;
                    rem /= side;
                    periods[i] * c as f64 / side as f64
                })
                .collect();
            out.push(action.group_element(&t));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let id = DMatrix::<C64>::identity(action.space_dim(), action.space_dim());
        while out.len() < GROUP_GRID - 1 {
            let t: Vec<f64> = (0..d).map(|_| { let s: f64 = StandardNormal.sample(&mut rng); std::f64::consts::PI * s }).collect();
            let g = action.group_element(&t);
            if (&g - &id).iter().map(|v| v.norm()).fold(0.0, f64::max) > 1e-2 {
                out.push(g);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Point {
    pub z_re: Vec<f64>,
    pub z_im: Vec<f64>,
    pub moment_residual: f64,
    pub min_singular_dmu: f64,
    pub min_singular_orbit: f64,
    pub min_orbit_displacement: f64,
    pub regular: bool,
    pub free: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Report {
    pub action: String,
    pub samples: usize,
    pub converged: usize,
    pub regular: bool,
    pub free: bool,
    pub quotient_dim: i64,
    pub inconclusive: bool,
    pub passed: bool,
    pub points: Vec<H2Point>,
}

/// Regularity of dμ and stabilizer probes at one point of the zero level.
pub fn probe_point(action: &LinearGroupAction, z: &DVector<C64>, probes: &[DMatrix<C64>]) -> Result<H2Point, MomentError> {
    let sd = min_singular(&moment_jacobian(action, z));
    let orbit = DMatrix::from_columns(&action.generators.iter().map(|g| to_real(&(g * z))).collect::<Vec<_>>());
    let so = min_singular(&orbit);
    let disp = probes.iter().map(|g| (g * z - z).norm()).fold(f64::INFINITY, f64::min);
    Ok(H2Point {
        z_re: z.iter().map(|c| c.re).collect(),
        z_im: z.iter().map(|c| c.im).collect(),
        moment_residual: action.moment(z)?.norm(),
        min_singular_dmu: sd,
        min_singular_orbit: so,
        min_orbit_displacement: disp,
        regular: sd > REGULAR_TOL,
        free: so > REGULAR_TOL && disp > ORBIT_TOL,
    })
}

/// Sample μ⁻¹(0) by Newton from seeded Gaussian starts and test regularity of dμ and
/// freeness of the action at each point found.
pub fn check_h2(action: &LinearGroupAction, sample_budget: usize, seed: u64) -> Result<H2Report, MomentError> {
    let n = action.space_dim();
    let probes = group_probes(action, seed ^ 0x5eed);
    let results: Vec<Result<Option<H2Point>, MomentError>> = (0..sample_budget)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let z0 = DVector::from_fn(n, |_, _| {
                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let Some(z) = newton_to_zero(action, &z0)? else { return Ok(None) };
            probe_point(action, &z, &probes).map(Some)
        })
        .collect();
    let mut points = Vec::new();
    for r in results {
        if let Some(p) = r? {
            points.push(p);
        }
    }
    let inconclusive = points.is_empty();
    let regular = !inconclusive && points.iter().all(|p| p.regular);
    let free = !inconclusive && points.iter().all(|p| p.free);
    Ok(H2Report {
        action: action.name.clone(),
        samples: sample_budget,
        converged: points.len(),
        regular,
        free,
        quotient_dim: action.quotient_dim(),
        inconclusive,
        passed: regular && free,
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub action: String,
    pub points: usize,
    pub step: f64,
    pub max_residual: f64,
    pub residuals: Vec<f64>,
}

/// Finite-difference moment identity at `points` seeded Gaussian (z, ξ) pairs.
pub fn identity_suite(action: &LinearGroupAction, points: usize, seed: u64) -> Result<IdentityReport, MomentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residuals = Vec::with_capacity(points);
    for _ in 0..points {
        let z = DVector::from_fn(action.space_dim(), |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let xi: Vec<f64> = (0..action.group_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        residuals.push(verify_moment_identity(action, &z, &xi)?);
    }
    Ok(IdentityReport {
        action: action.name.clone(),
        points,
        step: 1e-5,
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
    })
}

/// Declarative action description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionSpec {
    Toric { name: String, a: Vec<Vec<i64>>, tau: Vec<f64> },
    Grassmann { name: String, n: usize, k: usize },
    GeneralUnitary { name: String, generators: Vec<ComplexMatrixSpec>, tau: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexMatrixSpec {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, MomentError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(MomentError::Dimension("ragged or empty matrix".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ActionSpec {
    pub fn build(&self) -> Result<LinearGroupAction, MomentError> {
        match self {
            ActionSpec::Toric { name, a, tau } => {
                let rows: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
                LinearGroupAction::toric(name.clone(), rows_to_matrix(&rows)?, DVector::from_column_slice(tau))
            }
            ActionSpec::Grassmann { name, n, k } => LinearGroupAction::grassmann(name.clone(), *n, *k),
            ActionSpec::GeneralUnitary { name, generators, tau } => {
                let mut gens = Vec::new();
                for g in generators {
                    let (re, im) = (rows_to_matrix(&g.re)?, rows_to_matrix(&g.im)?);
                    if re.shape() != im.shape() {
                        return Err(MomentError::Dimension("re and im parts differ in shape".into()));
                    }
                    gens.push(DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)])));
                }
                LinearGroupAction::general(name.clone(), gens, DVector::from_column_slice(tau))
            }
        }
    }
}

pub const ACTIONS: &[&str] = &["s1-c2", "toric-rank2", "grassmann-2-1"];

/// Built-in actions; `tau` overrides the default central parameter where one exists.
pub fn action(name: &str, tau: Option<f64>) -> Result<LinearGroupAction, MomentError> {
    match name {
        "s1-c2" => LinearGroupAction::toric(name, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, tau.unwrap_or(0.5))),
        "toric-rank2" => {
            let t = match tau {
                Some(t) => DVector::from_element(2, t),
                None => DVector::from_column_slice(&[4.0 / 3.0, 1.0 / 3.0]),
            };
            LinearGroupAction::toric(name, DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]), t)
        }
        "grassmann-2-1" => LinearGroupAction::grassmann(name, 2, 1),
        _ => Err(MomentError::Unknown(name.into())),
    }
}
