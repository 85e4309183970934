//! Graded mod-2 chain complexes and their homology.

mod gf2;

pub use gf2::Gf2Matrix;

use serde::Serialize;

use crate::cascades::{count_mod2, critical_points, PairCount, SearchParams};
use crate::geometry::MorseBottProblem;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum HomologyError {
    #[error("boundary does not square to zero between degrees {0} and {1}")]
    DSquaredNonZero(i64, i64),
    #[error("boundary matrix for degree {degree} has shape {got:?}, expected {expected:?}")]
    Shape { degree: i64, got: (usize, usize), expected: (usize, usize) },
    #[error("problem is not Morse-Bott: {0}")]
    NotMorseBott(String),
    #[error("problem must be compact")]
    NotCompact,
    #[error("untrusted count for pair ({c1}, {c2}): {reason}")]
    UntrustedCount { c1: String, c2: String, reason: String },
    #[error("problems model different manifolds: {0} vs {1}")]
    ManifoldMismatch(String, String),
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Generator {
    pub name: String,
    pub submanifold: usize,
    pub point: Vec<f64>,
    pub ind_f: i64,
    pub ind_h: i64,
    pub degree: i64,
    pub level: f64,
}

/// Generators grouped by degree and boundary matrices ∂_k : C_k → C_{k−1}.
///
/// `boundary[k]` has one row per generator of degree k−1 and one column per
/// generator of degree k, so `∂_{k−1} ∂_k` is the product `boundary[k-1] * boundary[k]`.
#[derive(Debug, Clone)]
pub struct ChainComplexGF2 {
    /// Lowest degree present; `by_degree[i]` holds degree `min_degree + i`.
    pub min_degree: i64,
    pub by_degree: Vec<Vec<Generator>>,
    pub boundary: Vec<Gf2Matrix>,
}

impl ChainComplexGF2 {
    pub fn empty() -> Self {
        ChainComplexGF2 { min_degree: 0, by_degree: Vec::new(), boundary: Vec::new() }
    }

    /// Group generators by degree (preserving input order within a degree) with
    /// zero boundaries. Degrees start at 0 unless a negative degree occurs.
    pub fn from_generators(gens: Vec<Generator>) -> Self {
        if gens.is_empty() {
            return Self::empty();
        }
        let lo = gens.iter().map(|g| g.degree).min().unwrap().min(0);
        let hi = gens.iter().map(|g| g.degree).max().unwrap();
        let mut by_degree = vec![Vec::new(); (hi - lo + 1) as usize];
        for g in gens {
            by_degree[(g.degree - lo) as usize].push(g);
        }
        let boundary = (0..by_degree.len())
            .map(|i| {
                let rows = if i == 0 { 0 } else { by_degree[i - 1].len() };
                Gf2Matrix::zeros(rows, by_degree[i].len())
            })
            .collect();
        ChainComplexGF2 { min_degree: lo, by_degree, boundary }
    }

    pub fn degrees(&self) -> Vec<i64> {
        (0..self.by_degree.len() as i64).map(|i| self.min_degree + i).collect()
    }

    pub fn rank_in(&self, degree: i64) -> usize {
        self.slot(degree).map_or(0, |i| self.by_degree[i].len())
    }

    fn slot(&self, degree: i64) -> Option<usize> {
        let i = degree - self.min_degree;
        (i >= 0 && (i as usize) < self.by_degree.len()).then_some(i as usize)
    }

    pub fn generators(&self) -> impl Iterator<Item = &Generator> {
        self.by_degree.iter().flatten()
    }

    /// Boundary matrix out of `degree` (rows: degree−1, columns: degree).
    pub fn boundary_from(&self, degree: i64) -> Option<&Gf2Matrix> {
        self.slot(degree).map(|i| &self.boundary[i])
    }

    /// Set ∂ entry from generator `col` of degree `degree` to generator `row` of degree `degree − 1`.
    pub fn set_entry(&mut self, degree: i64, row: usize, col: usize, v: bool) {
        let i = self.slot(degree).expect("degree in range");
        self.boundary[i].set(row, col, v);
    }

    pub fn check_shapes(&self) -> Result<(), HomologyError> {
        for (i, m) in self.boundary.iter().enumerate() {
            let expected = (if i == 0 { 0 } else { self.by_degree[i - 1].len() }, self.by_degree[i].len());
            if (m.rows(), m.cols()) != expected {
                return Err(HomologyError::Shape { degree: self.min_degree + i as i64, got: (m.rows(), m.cols()), expected });
            }
        }
        Ok(())
    }

    /// Σ (−1)^k · #generators in degree k.
    pub fn euler(&self) -> i64 {
        self.degrees().iter().zip(&self.by_degree).map(|(k, g)| if k.rem_euclid(2) == 0 { g.len() as i64 } else { -(g.len() as i64) }).sum()
    }

    pub fn to_report(&self) -> ComplexReport {
        let mut generators = Vec::new();
        let mut boundary = Vec::new();
        for (i, gens) in self.by_degree.iter().enumerate() {
            let k = self.min_degree + i as i64;
            for g in gens {
                generators.push(g.clone());
            }
            if i > 0 {
                for (r, c) in self.boundary[i].nonzeros() {
                    boundary.push(BoundaryEntry {
                        degree: k,
                        from: gens[c].name.clone(),
                        to: self.by_degree[i - 1][r].name.clone(),
                        value: 1,
                    });
                }
            }
        }
        let d_squared_ok = verify_d_squared(self);
        ComplexReport {
            degrees: self.degrees(),
            generators,
            boundary,
            betti: if d_squared_ok { betti(self).ok() } else { None },
            euler: self.euler(),
            d_squared_ok,
        }
    }
}

/// Samples per submanifold used to certify the Morse-Bott condition before counting.
pub const MORSE_BOTT_SAMPLES: usize = 16;

/// Chain complex of a compact Morse-Bott problem, with the pair counts behind each entry.
pub fn build_complex_with_counts(
    problem: &MorseBottProblem,
    search: &SearchParams,
) -> Result<(ChainComplexGF2, Vec<PairCount>), HomologyError> {
    let report = problem
        .check_morse_bott(MORSE_BOTT_SAMPLES)
        .map_err(|e| HomologyError::NotMorseBott(e.to_string()))?;
    if !report.passed {
        let notes: Vec<String> = report.submanifolds.iter().flat_map(|s| s.notes.iter().map(move |n| format!("{}: {n}", s.name))).collect();
        return Err(HomologyError::NotMorseBott(notes.join("; ")));
    }
    if !problem.manifold.compact {
        return Err(HomologyError::NotCompact);
    }
    let crit = critical_points(problem);
    let gens: Vec<Generator> = crit
        .iter()
        .map(|c| Generator {
            name: c.name.clone(),
            submanifold: c.submanifold,
            point: c.point.clone(),
            ind_f: c.ind_f,
            ind_h: c.ind_h,
            degree: c.ind(),
            level: c.level,
        })
        .collect();
    let mut cx = ChainComplexGF2::from_generators(gens);
    // Map each critical point to its (degree, position) in the complex.
    let pos = |c: &crate::cascades::CritPoint| -> usize {
        cx.by_degree[(c.ind() - cx.min_degree) as usize]
            .iter()
            .position(|g| g.submanifold == c.submanifold && g.name == c.name)
            .expect("generator present")
    };
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    for c1 in &crit {
        for c2 in &crit {
            if c1.ind() - c2.ind() != 1 {
                continue;
            }
            let n = count_mod2(problem, c1, c2, search).map_err(|e| HomologyError::UntrustedCount {
                c1: c1.name.clone(),
                c2: c2.name.clone(),
                reason: e.to_string(),
            })?;
            if n.value == 1 {
                entries.push((c1.ind(), pos(c2), pos(c1)));
            }
            counts.push(n);
        }
    }
    for (k, r, c) in entries {
        cx.set_entry(k, r, c, true);
    }
    Ok((cx, counts))
}

/// ∂_k c = Σ n(c, c') c' over generators c' of degree k − 1.
pub fn build_complex(problem: &MorseBottProblem, search: &SearchParams) -> Result<ChainComplexGF2, HomologyError> {
    build_complex_with_counts(problem, search).map(|(cx, _)| cx)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadrupleComparison {
    pub problem_a: String,
    pub problem_b: String,
    pub betti_a: Vec<usize>,
    pub betti_b: Vec<usize>,
    pub equal: bool,
}

/// Compare the homology of two Morse-Bott problems on the same manifold.
pub fn compare_quadruples(
    a: &MorseBottProblem,
    b: &MorseBottProblem,
    search: &SearchParams,
) -> Result<QuadrupleComparison, HomologyError> {
    let (ma, mb) = (&a.manifold, &b.manifold);
    if ma.name != mb.name || ma.ambient_dim != mb.ambient_dim || ma.constraints != mb.constraints {
        return Err(HomologyError::ManifoldMismatch(ma.name.clone(), mb.name.clone()));
    }
    let ba = betti(&build_complex(a, search)?)?;
    let bb = betti(&build_complex(b, search)?)?;
    Ok(QuadrupleComparison { problem_a: a.name.clone(), problem_b: b.name.clone(), equal: ba == bb, betti_a: ba, betti_b: bb })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryEntry {
    pub degree: i64,
    pub from: String,
    pub to: String,
    pub value: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexReport {
    pub degrees: Vec<i64>,
    pub generators: Vec<Generator>,
    pub boundary: Vec<BoundaryEntry>,
    pub betti: Option<Vec<usize>>,
    pub euler: i64,
    pub d_squared_ok: bool,
}

/// Exact check that ∂_{k−1} ∂_k = 0 for every adjacent pair of degrees.
pub fn verify_d_squared(cx: &ChainComplexGF2) -> bool {
    if cx.check_shapes().is_err() {
        return false;
    }
    (1..cx.boundary.len()).all(|i| cx.boundary[i - 1].mul(&cx.boundary[i]).is_zero())
}

/// b_k = dim ker ∂_k − rank ∂_{k+1}, listed from the lowest degree present.
pub fn betti(cx: &ChainComplexGF2) -> Result<Vec<usize>, HomologyError> {
    cx.check_shapes()?;
    for i in 1..cx.boundary.len() {
        if !cx.boundary[i - 1].mul(&cx.boundary[i]).is_zero() {
            let k = cx.min_degree + i as i64;
            return Err(HomologyError::DSquaredNonZero(k, k - 1));
        }
    }
    let ranks: Vec<usize> = cx.boundary.iter().map(|m| m.rank()).collect();
    Ok((0..cx.by_degree.len())
        .map(|i| {
            let up = ranks.get(i + 1).copied().unwrap_or(0);
            cx.by_degree[i].len() - ranks[i] - up
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(name: &str, degree: i64) -> Generator {
        Generator { name: name.into(), submanifold: 0, point: vec![], ind_f: degree, ind_h: 0, degree, level: 0.0 }
    }

    fn sphere_cx() -> ChainComplexGF2 {
        let mut cx = ChainComplexGF2::from_generators(vec![gen("m", 0), gen("s", 1), gen("N", 2), gen("S", 2)]);
        cx.set_entry(2, 0, 0, true);
        cx.set_entry(2, 0, 1, true);
        cx
    }

    #[test]
    fn sphere_from_cascade_counts() {
        let cx = sphere_cx();
        assert!(verify_d_squared(&cx));
        assert_eq!(betti(&cx).unwrap(), vec![1, 0, 1]);
        assert_eq!(cx.euler(), 2);
    }

    #[test]
    fn corrupted_entry_detected() {
        let mut cx = ChainComplexGF2::from_generators(vec![gen("a", 0), gen("b", 1), gen("c", 2)]);
        cx.set_entry(1, 0, 0, true);
        cx.set_entry(2, 0, 0, true);
        assert!(!verify_d_squared(&cx));
        assert!(matches!(betti(&cx), Err(HomologyError::DSquaredNonZero(2, 1))));
    }

    #[test]
    fn empty_complex() {
        let cx = ChainComplexGF2::empty();
        assert!(verify_d_squared(&cx));
        assert!(betti(&cx).unwrap().is_empty());
        assert_eq!(cx.euler(), 0);
    }

    #[test]
    fn circle_two_arcs_cancel() {
        let cx = ChainComplexGF2::from_generators(vec![gen("min", 0), gen("max", 1)]);
        assert_eq!(betti(&cx).unwrap(), vec![1, 1]);
    }

    #[test]
    fn report_lists_sparse_triples() {
        let r = sphere_cx().to_report();
        assert_eq!(r.boundary.len(), 2);
        assert_eq!(r.betti, Some(vec![1, 0, 1]));
        assert_eq!(r.degrees, vec![0, 1, 2]);
    }
}
