//! Path-space involutions and the dyadic shift operators 𝓛_k on a midpoint grid.
//!
//! Sections of the flat model (M, L, R, J) = (ℂ^n, ℝ^n, conjugation, i) over
//! [0, 1] are sampled at t_j = (j + ½)/N. A real coordinate vector has index
//! `(sample * n + component) * 2 + part`, with part 0 the real and 1 the
//! imaginary part. Reflection t ↦ 1 − t and every dyadic shift permute the grid
//! exactly, so all operators are signed permutations or spectral functions of
//! them.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum InvolutionError {
    #[error("grid size {0} is not a power of two >= 2")]
    BadGrid(usize),
    #[error("complex dimension must be positive")]
    BadDimension,
    #[error("grid of {samples} samples does not admit k = {k} (needs 2^(k+1) | N)")]
    NotAdmissible { samples: usize, k: usize },
    #[error("operator index k = {0} is out of range")]
    BadIndex(usize),
    #[error("nonpositive eigenvalue {value:.3e} of L_{k}^2 on E_-1")]
    NonPositiveEigenvalue { k: usize, value: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PathGrid {
    /// Complex dimension of the fibre.
    pub n: usize,
    /// Number of samples N.
    pub samples: usize,
}

impl PathGrid {
    pub fn new(n: usize, samples: usize) -> Result<Self, InvolutionError> {
        if samples < 2 || !samples.is_power_of_two() {
            return Err(InvolutionError::BadGrid(samples));
        }
        if n == 0 {
            return Err(InvolutionError::BadDimension);
        }
        Ok(PathGrid { n, samples })
    }

    pub fn dim(&self) -> usize {
        2 * self.n * self.samples
    }

    pub fn t(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.samples as f64
    }

    #[inline]
    pub fn idx(&self, sample: usize, comp: usize, part: usize) -> usize {
        (sample * self.n + comp) * 2 + part
    }

    /// Whether 2^(k+1) divides N.
    pub fn admits(&self, k: usize) -> bool {
        k < 62 && self.samples % (1usize << (k + 1)) == 0
    }

    /// Largest k with 2^(k+1) | N.
    pub fn k_max(&self) -> usize {
        self.samples.trailing_zeros() as usize - 1
    }

    fn halved(&self) -> Result<PathGrid, InvolutionError> {
        if self.samples < 2 {
            return Err(InvolutionError::GridMismatch("cannot halve a one-sample grid".into()));
        }
        Ok(PathGrid { n: self.n, samples: self.samples / 2 })
    }

    fn doubled(&self) -> PathGrid {
        PathGrid { n: self.n, samples: self.samples * 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorLabel {
    I1,
    PiPlus,
    PiMinus,
    L(usize),
    /// Closed formula for I₂ (half shift, sign twist, J) on the whole space.
    I2Formula,
    /// Branch of I_k on E₋₁.
    IMinus(usize),
    /// Branch of I_k on E₊₁.
    IPlus(usize),
    /// I_k on the whole space (sum of both branches).
    I(usize),
    H,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Domain {
    Full,
    Minus,
    Plus,
    /// Map from a grid of `from` samples to one of `to` samples.
    Resample { from: usize, to: usize },
}

#[derive(Clone, Debug)]
pub struct PathOperator {
    pub label: OperatorLabel,
    pub domain: Domain,
    pub matrix: DMatrix<f64>,
}

impl PathOperator {
    fn new(label: OperatorLabel, domain: Domain, matrix: DMatrix<f64>) -> Self {
        PathOperator { label, domain, matrix }
    }
}

/// 𝓘₁ξ(t) = conj ξ(1 − t).
pub fn build_i1(grid: &PathGrid) -> PathOperator {
    let d = grid.dim();
    let mut m = DMatrix::zeros(d, d);
    let nn = grid.samples;
    for a in 0..nn {
        let b = nn - 1 - a;
        for c in 0..grid.n {
            m[(grid.idx(a, c, 0), grid.idx(b, c, 0))] = 1.0;
            m[(grid.idx(a, c, 1), grid.idx(b, c, 1))] = -1.0;
        }
    }
    PathOperator::new(OperatorLabel::I1, Domain::Full, m)
}

/// π± = ½(id ± 𝓘₁).
pub fn eigenprojections(i1: &PathOperator) -> (PathOperator, PathOperator) {
    let d = i1.matrix.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let plus = (&id + &i1.matrix) * 0.5;
    let minus = (&id - &i1.matrix) * 0.5;
    (
        PathOperator::new(OperatorLabel::PiPlus, Domain::Full, plus),
        PathOperator::new(OperatorLabel::PiMinus, Domain::Full, minus),
    )
}

/// Orthonormal basis of E₋₁ (columns).
pub fn minus_basis(grid: &PathGrid) -> DMatrix<f64> {
    eigen_basis(grid, -1.0)
}

/// Orthonormal basis of E₊₁ (columns).
pub fn plus_basis(grid: &PathGrid) -> DMatrix<f64> {
    eigen_basis(grid, 1.0)
}

fn eigen_basis(grid: &PathGrid, sign: f64) -> DMatrix<f64> {
    // I₁ pairs sample a with N-1-a; on each pair the ±1 eigenvectors are explicit.
    let nn = grid.samples;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut q = DMatrix::zeros(grid.dim(), grid.dim() / 2);
    let mut col = 0;
    for a in 0..nn / 2 {
        let b = nn - 1 - a;
        for c in 0..grid.n {
            for part in 0..2 {
                // I₁ acts on (x_a, x_b) by swap times (+1 real, -1 imaginary).
                let s = if part == 0 { 1.0 } else { -1.0 };
                q[(grid.idx(a, c, part), col)] = r;
                q[(grid.idx(b, c, part), col)] = sign * s * r;
                col += 1;
            }
        }
    }
    q
}

/// 𝓛_k ξ(t) = Σ_{j<2^k} (−1)^{⌊j/2^{k−1}⌋ + ⌊t + 1/2^{k+1} + j/2^k⌋} ξ(t + 1/2^{k+1} + j/2^k mod 1); 𝓛₀ = id.
pub fn build_lk(grid: &PathGrid, k: usize) -> Result<PathOperator, InvolutionError> {
    let d = grid.dim();
    if k == 0 {
        return Ok(PathOperator::new(OperatorLabel::L(0), Domain::Minus, DMatrix::identity(d, d)));
    }
    if !grid.admits(k) {
        return Err(InvolutionError::NotAdmissible { samples: grid.samples, k });
    }
    let nn = grid.samples;
    let base = nn >> (k + 1);
    let step = nn >> k;
    let mut m = DMatrix::zeros(d, d);
    for a in 0..nn {
        for j in 0..(1usize << k) {
            let b = a + base + j * step;
            let e = (j >> (k - 1)) + b / nn;
            let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
            let bm = b % nn;
            for c in 0..grid.n {
                for p in 0..2 {
                    m[(grid.idx(a, c, p), grid.idx(bm, c, p))] += sign;
                }
            }
        }
    }
    Ok(PathOperator::new(OperatorLabel::L(k), Domain::Minus, m))
}

/// 𝓘₂ξ(t) = (−1)^{⌊t + ½⌋} J ξ(t + ½ mod 1).
pub fn build_i2_formula(grid: &PathGrid) -> PathOperator {
    let d = grid.dim();
    let nn = grid.samples;
    let mut m = DMatrix::zeros(d, d);
    for a in 0..nn {
        let b = a + nn / 2;
        let s = if (b / nn) % 2 == 0 { 1.0 } else { -1.0 };
        let bm = b % nn;
        for c in 0..grid.n {
            // J(x + iy) = -y + ix
            m[(grid.idx(a, c, 0), grid.idx(bm, c, 1))] = -s;
            m[(grid.idx(a, c, 1), grid.idx(bm, c, 0))] = s;
        }
    }
    PathOperator::new(OperatorLabel::I2Formula, Domain::Full, m)
}

/// Restriction `Qᵀ A Q` of an operator to E₋₁ in the basis [`minus_basis`].
pub fn restrict_minus(grid: &PathGrid, a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = minus_basis(grid);
    q.transpose() * a * &q
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Distinct values of a sorted list, merged at relative tolerance `rel`.
pub fn dedup_values(mut v: Vec<f64>, rel: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        match out.last() {
            Some(&l) if (x - l).abs() <= rel * l.abs().max(x.abs()).max(1e-300) => {}
            _ => out.push(x),
        }
    }
    out
}

/// All eigenvalues of 𝓛_k² restricted to E₋₁, ascending, with multiplicity.
pub fn lk_squared_eigenvalues(grid: &PathGrid, k: usize) -> Result<Vec<f64>, InvolutionError> {
    let l = build_lk(grid, k)?;
    let r = restrict_minus(grid, &l.matrix);
    let r2 = symmetrize(&r * &r);
    let mut ev: Vec<f64> = SymmetricEigen::new(r2).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Distinct eigenvalues of 𝓛_k² on E₋₁ (dedup tolerance 1e-7 relative).
pub fn lk_squared_spectrum(grid: &PathGrid, k: usize) -> Result<Vec<f64>, InvolutionError> {
    Ok(dedup_values(lk_squared_eigenvalues(grid, k)?, 1e-7))
}

/// Closed-form eigenvalues of 𝓛_k² for k = 1, 2, 3, ascending.
pub fn claimed_spectrum(k: usize) -> Option<Vec<f64>> {
    let r2 = std::f64::consts::SQRT_2;
    let mut v = match k {
        1 => vec![2.0],
        2 => vec![4.0 + 2.0 * r2, 4.0 - 2.0 * r2],
        3 => {
            let mut v = Vec::new();
            for s1 in [1.0, -1.0] {
                let inner = 4.0 + s1 * 2.0 * r2;
                for s2 in [1.0, -1.0] {
                    v.push(2.0 * (inner + s2 * inner.sqrt() * (1.0 + s1 * r2)));
                }
            }
            v
        }
        _ => return None,
    };
    v.sort_by(f64::total_cmp);
    Some(v)
}

/// Branch of 𝓘_k on E₋₁: the closed formula for k = 2, the spectral normalization
/// Σ_λ λ^{−1/2} 𝓛_{k−2} Π_λ for k ≥ 3.
pub fn build_ik_minus(grid: &PathGrid, k: usize) -> Result<PathOperator, InvolutionError> {
    let (_, pim) = eigenprojections(&build_i1(grid));
    match k {
        0 | 1 => Err(InvolutionError::BadIndex(k)),
        2 => {
            if grid.samples % 2 != 0 {
                return Err(InvolutionError::NotAdmissible { samples: grid.samples, k: 0 });
            }
            let m = build_i2_formula(grid).matrix * &pim.matrix;
            Ok(PathOperator::new(OperatorLabel::IMinus(2), Domain::Minus, m))
        }
        _ => {
            let l = build_lk(grid, k - 2)?;
            let q = minus_basis(grid);
            let r = symmetrize(q.transpose() * &l.matrix * &q);
            let eig = SymmetricEigen::new(symmetrize(&r * &r));
            let mut inv_sqrt = DMatrix::zeros(r.nrows(), r.ncols());
            for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam <= 1e-12 {
                    return Err(InvolutionError::NonPositiveEigenvalue { k: k - 2, value: lam });
                }
                let u = eig.eigenvectors.column(i);
                inv_sqrt += (u * u.transpose()) * (1.0 / lam.sqrt());
            }
            let s = symmetrize(&r * inv_sqrt);
            Ok(PathOperator::new(OperatorLabel::IMinus(k), Domain::Minus, &q * s * q.transpose()))
        }
    }
}

/// 𝓗: sections on the 2N grid → sections on the N grid, ξ(t) ↦ ξ(t/2).
/// `fine` is the 2N grid.
pub fn build_h(fine: &PathGrid) -> Result<PathOperator, InvolutionError> {
    let coarse = fine.halved()?;
    let mut m = DMatrix::zeros(coarse.dim(), fine.dim());
    for a in 0..coarse.samples {
        for c in 0..fine.n {
            for p in 0..2 {
                m[(coarse.idx(a, c, p), fine.idx(a, c, p))] = 1.0;
            }
        }
    }
    Ok(PathOperator::new(OperatorLabel::H, Domain::Resample { from: fine.samples, to: coarse.samples }, m))
}

/// 𝓓: sections on the N grid → the 2N grid; first half ξ(2t), second half conj ξ(2 − 2t).
pub fn build_d(coarse: &PathGrid) -> PathOperator {
    let fine = coarse.doubled();
    let nn = coarse.samples;
    let mut m = DMatrix::zeros(fine.dim(), coarse.dim());
    for b in 0..fine.samples {
        for c in 0..coarse.n {
            if b < nn {
                m[(fine.idx(b, c, 0), coarse.idx(b, c, 0))] = 1.0;
                m[(fine.idx(b, c, 1), coarse.idx(b, c, 1))] = 1.0;
            } else {
                let a = 2 * nn - 1 - b;
                m[(fine.idx(b, c, 0), coarse.idx(a, c, 0))] = 1.0;
                m[(fine.idx(b, c, 1), coarse.idx(a, c, 1))] = -1.0;
            }
        }
    }
    PathOperator::new(OperatorLabel::D, Domain::Resample { from: nn, to: fine.samples }, m)
}

/// (𝓗_k, 𝓓_k) for the pair (2N grid, N grid) where `fine` has 2N samples.
pub fn build_hd(fine: &PathGrid) -> Result<(PathOperator, PathOperator), InvolutionError> {
    let coarse = fine.halved()?;
    Ok((build_h(fine)?, build_d(&coarse)))
}

/// Whether 𝓘_k can be built on this grid (both branches, recursively).
pub fn ik_admissible(grid: &PathGrid, k: usize) -> bool {
    match k {
        0 => false,
        1 => true,
        2 => grid.samples >= 2 && grid.samples % 2 == 0,
        _ => grid.admits(k - 2) && grid.halved().is_ok_and(|h| ik_admissible(&h, k - 1)),
    }
}

/// Branch of 𝓘_k on E₊₁: 𝓓 ∘ 𝓘_{k−1} ∘ 𝓗 on the halved grid.
pub fn build_ik_plus(grid: &PathGrid, k: usize) -> Result<PathOperator, InvolutionError> {
    if k < 2 {
        return Err(InvolutionError::BadIndex(k));
    }
    let coarse = grid.halved()?;
    let (pip, _) = eigenprojections(&build_i1(grid));
    let inner = build_ik(&coarse, k - 1)?;
    let h = build_h(grid)?;
    let d = build_d(&coarse);
    let m = d.matrix * inner.matrix * h.matrix * pip.matrix;
    Ok(PathOperator::new(OperatorLabel::IPlus(k), Domain::Plus, m))
}

/// 𝓘_k on the whole space; 𝓘₁ for k = 1.
pub fn build_ik(grid: &PathGrid, k: usize) -> Result<PathOperator, InvolutionError> {
    match k {
        0 => Err(InvolutionError::BadIndex(0)),
        1 => Ok(build_i1(grid)),
        _ => {
            if !ik_admissible(grid, k) {
                return Err(InvolutionError::NotAdmissible { samples: grid.samples, k: k.saturating_sub(2) });
            }
            let minus = build_ik_minus(grid, k)?;
            let plus = build_ik_plus(grid, k)?;
            Ok(PathOperator::new(OperatorLabel::I(k), Domain::Full, minus.matrix + plus.matrix))
        }
    }
}

/// `|det A(t)|` of the 2^k × 2^k sign matrix
/// A_{i,l}(t) = (−1)^{⌊(l−i)/2^{k−1}⌋ + ⌊(l−i)/2^k⌋ + ⌊t + 1/2^{k+1} + l/2^k⌋}.
pub fn sign_matrix(k: usize, t: f64) -> DMatrix<f64> {
    let n = 1usize << k;
    let half = (n / 2) as i64;
    DMatrix::from_fn(n, n, |i, l| {
        let dl = l as i64 - i as i64;
        let e = dl.div_euclid(half) + dl.div_euclid(n as i64) + (t + 1.0 / (2 * n) as f64 + l as f64 / n as f64).floor() as i64;
        if e.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    })
}

pub fn sign_matrix_abs_det(k: usize, t: f64) -> f64 {
    sign_matrix(k, t).determinant().abs()
}

fn fro(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

#[derive(Clone, Debug, Serialize)]
pub struct LkReport {
    pub k: usize,
    /// ‖π₊ 𝓛_k π₋‖.
    pub leaves_minus: f64,
    /// ‖(𝓘₁𝓛_k + 𝓛_k) π₋‖.
    pub anticommutes_i1: f64,
    /// ‖R − Rᵀ‖ for R = 𝓛_k restricted to E₋₁ (discrete L² symmetry).
    pub symmetry: f64,
    pub sigma_min: f64,
    pub spectrum: Vec<f64>,
    pub min_eigenvalue: f64,
    pub claimed: Option<Vec<f64>>,
    pub spectrum_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub what: String,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetRow {
    pub k: usize,
    pub t: f64,
    pub abs_det: f64,
    pub claimed: f64,
    pub rel_error: f64,
    pub matches_claim: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub grid: PathGrid,
    pub kmax: usize,
    pub lk: Vec<LkReport>,
    pub commutators: Vec<Residual>,
    pub recursion: Vec<Residual>,
    pub determinants: Vec<DetRow>,
}

/// All assertions of the 𝓛_k lemma for k = 1..=kmax.
pub fn verify_lemma(grid: &PathGrid, kmax: usize) -> Result<LemmaReport, InvolutionError> {
    if kmax == 0 {
        return Err(InvolutionError::BadIndex(0));
    }
    if !grid.admits(kmax) {
        return Err(InvolutionError::NotAdmissible { samples: grid.samples, k: kmax });
    }
    let i1 = build_i1(grid);
    let (pip, pim) = eigenprojections(&i1);
    let q = minus_basis(grid);
    let ls: Vec<DMatrix<f64>> = (0..=kmax).map(|k| build_lk(grid, k).map(|o| o.matrix)).collect::<Result<_, _>>()?;
    let mut lk = Vec::new();
    for k in 1..=kmax {
        let l = &ls[k];
        let lm = l * &pim.matrix;
        let r = q.transpose() * l * &q;
        let symmetry = fro(&(&r - r.transpose()));
        let ev = {
            let r2 = symmetrize(&r * &r);
            let mut e: Vec<f64> = SymmetricEigen::new(r2).eigenvalues.iter().cloned().collect();
            e.sort_by(f64::total_cmp);
            e
        };
        let min_eigenvalue = ev[0];
        let spectrum = dedup_values(ev, 1e-7);
        let claimed = claimed_spectrum(k);
        let spectrum_error = claimed.as_ref().map(|c| {
            if c.len() != spectrum.len() {
                f64::INFINITY
            } else {
                c.iter().zip(&spectrum).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            }
        });
        lk.push(LkReport {
            k,
            leaves_minus: fro(&(&pip.matrix * &lm)),
            anticommutes_i1: fro(&(&i1.matrix * &lm + &lm)),
            symmetry,
            sigma_min: min_eigenvalue.max(0.0).sqrt(),
            spectrum,
            min_eigenvalue,
            claimed,
            spectrum_error,
        });
    }
    let mut commutators = Vec::new();
    for a in 1..=kmax {
        for b in (a + 1)..=kmax {
            let c = (&ls[a] * &ls[b] - &ls[b] * &ls[a]) * &pim.matrix;
            commutators.push(Residual { what: format!("[L{a}, L{b}] on E-1"), residual: fro(&c) });
        }
    }
    let i2 = build_i2_formula(grid).matrix;
    for (a, l) in ls.iter().enumerate().skip(1) {
        let c = (&i2 * l - l * &i2) * &pim.matrix;
        commutators.push(Residual { what: format!("[I2, L{a}] on E-1"), residual: fro(&c) });
    }
    let mut recursion = Vec::new();
    for k in 0..kmax {
        let d = grid.dim();
        let mut sum = DMatrix::<f64>::zeros(d, d);
        for l in ls.iter().take(k) {
            sum += l;
        }
        let rhs = (&ls[k] * &ls[k] + &ls[k] * sum) * 2.0;
        let lhs = &ls[k + 1] * &ls[k + 1];
        let res = &pim.matrix * (lhs - rhs) * &pim.matrix;
        recursion.push(Residual { what: format!("L{}^2 - 2(L{k}^2 + L{k} sum_(i<{k}) L_i)", k + 1), residual: fro(&res) });
    }
    let mut determinants = Vec::new();
    for k in 1..=kmax {
        let claimed = 2f64.powi(1 << k);
        let per = grid.samples >> k;
        for j in 0..per.min(5) {
            let t = grid.t(j);
            let abs_det = sign_matrix_abs_det(k, t);
            let rel_error = (abs_det - claimed).abs() / claimed;
            determinants.push(DetRow { k, t, abs_det, claimed, rel_error, matches_claim: rel_error < 1e-9 });
        }
    }
    Ok(LemmaReport { grid: *grid, kmax, lk, commutators, recursion, determinants })
}

#[derive(Clone, Debug, Serialize)]
pub struct InvolutionReport {
    pub grid: PathGrid,
    pub kmax: usize,
    /// ‖Op² − id‖ on the operator's domain.
    pub involutive: Vec<Residual>,
    /// ‖Op − Opᵀ‖ (discrete L² self-adjointness).
    pub self_adjoint: Vec<Residual>,
    pub commutators: Vec<Residual>,
    /// ‖𝓗 ∘ 𝓓 − id‖.
    pub hd_identity: Vec<Residual>,
    pub eigenvalues_pm_one: Vec<Residual>,
}

/// Involution, self-adjointness and commutation residuals for 𝓘_1..=𝓘_kmax.
pub fn verify_involutions(grid: &PathGrid, kmax: usize) -> Result<InvolutionReport, InvolutionError> {
    let d = grid.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let (pip, pim) = eigenprojections(&build_i1(grid));
    let mut involutive = Vec::new();
    let mut self_adjoint = Vec::new();
    let mut full = Vec::new();
    let mut eigenvalues_pm_one = Vec::new();
    for k in 1..=kmax {
        let ik = build_ik(grid, k)?;
        if k >= 2 {
            let m = build_ik_minus(grid, k)?.matrix;
            let p = build_ik_plus(grid, k)?.matrix;
            involutive.push(Residual { what: format!("I{k} on E-1"), residual: fro(&(&m * &m - &pim.matrix)) });
            involutive.push(Residual { what: format!("I{k} on E+1"), residual: fro(&(&p * &p - &pip.matrix)) });
            self_adjoint.push(Residual { what: format!("I{k} on E-1"), residual: fro(&(&m - m.transpose())) });
            self_adjoint.push(Residual { what: format!("I{k} on E+1"), residual: fro(&(&p - p.transpose())) });
        }
        involutive.push(Residual { what: format!("I{k}"), residual: fro(&(&ik.matrix * &ik.matrix - &id)) });
        self_adjoint.push(Residual { what: format!("I{k}"), residual: fro(&(&ik.matrix - ik.matrix.transpose())) });
        let ev = SymmetricEigen::new(symmetrize(ik.matrix.clone())).eigenvalues;
        let worst = ev.iter().map(|l| (l.abs() - 1.0).abs()).fold(0.0, f64::max);
        eigenvalues_pm_one.push(Residual { what: format!("I{k} eigenvalues in {{-1, 1}}"), residual: worst });
        full.push(ik.matrix);
    }
    let mut commutators = Vec::new();
    for a in 0..full.len() {
        for b in (a + 1)..full.len() {
            let c = &full[a] * &full[b] - &full[b] * &full[a];
            commutators.push(Residual { what: format!("[I{}, I{}]", a + 1, b + 1), residual: fro(&c) });
        }
    }
    let mut hd_identity = Vec::new();
    let mut g = *grid;
    while g.samples >= 2 {
        let (h, dd) = build_hd(&g)?;
        let c = g.halved()?;
        let e = h.matrix * dd.matrix - DMatrix::<f64>::identity(c.dim(), c.dim());
        hd_identity.push(Residual { what: format!("H D on {} samples", c.samples), residual: fro(&e) });
        g = c;
    }
    Ok(InvolutionReport { grid: *grid, kmax, involutive, self_adjoint, commutators, hd_identity, eigenvalues_pm_one })
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderReport {
    pub grid: PathGrid,
    /// dim ∩_{i≤m} Fix(𝓘_i) for m = 1, 2, ...
    pub fixed_dims: Vec<usize>,
    /// Number of involutions after which only constant real sections remain fixed.
    pub free_after: Option<usize>,
}

/// Dimensions of the successive fixed spaces of 𝓘₁, 𝓘₂, ... for as many 𝓘_m
/// as the grid admits.
pub fn fixed_ladder(grid: &PathGrid) -> Result<LadderReport, InvolutionError> {
    let d = grid.dim();
    let id = DMatrix::<f64>::identity(d, d);
    // Basis of the current fixed space, as orthonormal columns.
    let mut basis = id.clone();
    let mut dims = Vec::new();
    let mut free_after = None;
    let consts = {
        // constant real sections
        let mut c = DMatrix::zeros(d, grid.n);
        let s = 1.0 / (grid.samples as f64).sqrt();
        for a in 0..grid.samples {
            for comp in 0..grid.n {
                c[(grid.idx(a, comp, 0), comp)] = s;
            }
        }
        c
    };
    let mut m = 1;
    while ik_admissible(grid, m) && basis.ncols() > 0 {
        let op = build_ik(grid, m)?.matrix;
        // Restrict (I - id) to the current fixed space and take its kernel.
        let a = (&op - &id) * &basis;
        let e = SymmetricEigen::new(a.transpose() * &a);
        let mut cols = Vec::new();
        for (i, &l) in e.eigenvalues.iter().enumerate() {
            if l < 1e-12 {
                cols.push(&basis * e.eigenvectors.column(i));
            }
        }
        if cols.is_empty() {
            basis = DMatrix::zeros(d, 0);
        } else {
            let stacked = DMatrix::from_columns(&cols);
            basis = stacked.qr().q();
        }
        dims.push(basis.ncols());
        if free_after.is_none() && basis.ncols() > 0 {
            let proj = &consts * consts.transpose() * &basis;
            if (proj - &basis).amax() < 1e-8 {
                free_after = Some(m);
            }
        }
        m += 1;
    }
    Ok(LadderReport { grid: *grid, fixed_dims: dims, free_after })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(PathGrid::new(1, 48).is_err());
        assert!(PathGrid::new(0, 32).is_err());
        let g = PathGrid::new(1, 32).unwrap();
        assert_eq!(g.k_max(), 4);
        assert!(g.admits(4) && !g.admits(5));
        assert!(matches!(build_lk(&g, 5), Err(InvolutionError::NotAdmissible { .. })));
    }

    #[test]
    fn i1_constant_sections() {
        let g = PathGrid::new(2, 8).unwrap();
        let i1 = build_i1(&g).matrix;
        let mut re = nalgebra::DVector::zeros(g.dim());
        let mut im = nalgebra::DVector::zeros(g.dim());
        for a in 0..g.samples {
            re[g.idx(a, 1, 0)] = 1.0;
            im[g.idx(a, 0, 1)] = 1.0;
        }
        assert_eq!(&i1 * &re, re);
        assert_eq!(&i1 * &im, -im);
        assert_eq!(&i1 * &i1, DMatrix::identity(g.dim(), g.dim()));
    }

    #[test]
    fn bases_are_orthonormal_eigenvectors() {
        let g = PathGrid::new(1, 8).unwrap();
        let i1 = build_i1(&g).matrix;
        let qm = minus_basis(&g);
        let qp = plus_basis(&g);
        assert!((&i1 * &qm + &qm).amax() < 1e-15);
        assert!((&i1 * &qp - &qp).amax() < 1e-15);
        assert!((qm.transpose() * &qm - DMatrix::identity(8, 8)).amax() < 1e-15);
        assert!((qm.transpose() * &qp).amax() < 1e-15);
    }

    #[test]
    fn projections() {
        let g = PathGrid::new(1, 16).unwrap();
        let (p, m) = eigenprojections(&build_i1(&g));
        assert!((&p.matrix * &m.matrix).amax() == 0.0);
        assert!((&p.matrix * &p.matrix - &p.matrix).amax() == 0.0);
        assert!((p.matrix.trace() + m.matrix.trace() - g.dim() as f64).abs() < 1e-12);
    }

    #[test]
    fn claimed_third_spectrum_values() {
        let c = claimed_spectrum(3).unwrap();
        let expect = [1.0395661298965795, 1.4464626921716892, 3.2398288088435496, 26.27414236908818];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_matrix_first_case() {
        // k = 1: A = [[1, -1], [1, 1]] up to signs of rows; |det| = 2.
        assert!((sign_matrix_abs_det(1, 0.1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn h_after_d_is_identity() {
        let fine = PathGrid::new(2, 16).unwrap();
        let (h, d) = build_hd(&fine).unwrap();
        let p = h.matrix * d.matrix;
        assert_eq!(p, DMatrix::identity(p.nrows(), p.ncols()));
    }
}
