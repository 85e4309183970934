//! The Novikov field over Γ = ℤ^d with GF(2) coefficients.
//!
//! An element is a set of exponents (coefficient 1 each) together with a cutoff
//! κ: everything of energy below κ is unknown and has been dropped. Elements are
//! finitely supported above every energy level, so the series extend toward
//! negative energy.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const EXPONENT_BOUND: i64 = 1_000_000;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NovikovError {
    #[error("elements belong to different groups")]
    GroupMismatch,
    #[error("exponent {0:?} has the wrong rank")]
    Rank(Vec<i64>),
    #[error("exponent component exceeds {EXPONENT_BOUND}")]
    ExponentOverflow,
    #[error("cannot invert zero")]
    Zero,
    #[error("maximal energy {energy} is attained by more than one term")]
    EnergyTie { energy: f64 },
    #[error("invalid group: {0}")]
    InvalidGroup(String),
}

/// Γ ≅ ℤ^d with the degree and energy homomorphisms given on generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGroup {
    pub degree_hom: Vec<i64>,
    pub energy_hom: Vec<f64>,
}

impl GammaGroup {
    pub fn new(degree_hom: Vec<i64>, energy_hom: Vec<f64>) -> Result<Self, NovikovError> {
        if degree_hom.len() != energy_hom.len() {
            return Err(NovikovError::InvalidGroup("degree and energy vectors differ in length".into()));
        }
        if energy_hom.iter().any(|e| !e.is_finite()) {
            return Err(NovikovError::InvalidGroup("energies must be finite".into()));
        }
        Ok(GammaGroup { degree_hom, energy_hom })
    }

    pub fn rank(&self) -> usize {
        self.degree_hom.len()
    }

    pub fn degree(&self, g: &[i64]) -> i64 {
        g.iter().zip(&self.degree_hom).map(|(a, b)| a * b).sum()
    }

    pub fn energy(&self, g: &[i64]) -> f64 {
        g.iter().zip(&self.energy_hom).map(|(&a, b)| a as f64 * b).sum()
    }

    pub fn max_abs_energy(&self) -> f64 {
        self.energy_hom.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    fn energy_scale(&self, g: &[i64]) -> f64 {
        g.iter().zip(&self.energy_hom).map(|(&a, b)| (a as f64 * b).abs()).sum::<f64>().max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NovikovElement {
    pub group: GammaGroup,
    pub terms: BTreeSet<Vec<i64>>,
    /// Terms of energy below this are unknown. `-∞` means the element is exact.
    #[serde(with = "cutoff_serde")]
    pub cutoff: f64,
    pub truncated: bool,
}

mod cutoff_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl NovikovElement {
    pub fn zero(group: &GammaGroup) -> Self {
        NovikovElement { group: group.clone(), terms: BTreeSet::new(), cutoff: f64::NEG_INFINITY, truncated: false }
    }

    pub fn one(group: &GammaGroup) -> Self {
        Self::monomial(group, vec![0; group.rank()]).expect("zero exponent")
    }

    pub fn monomial(group: &GammaGroup, g: Vec<i64>) -> Result<Self, NovikovError> {
        Self::from_terms(group, [g], f64::NEG_INFINITY)
    }

    /// Build from exponents; repeated exponents cancel in pairs.
    pub fn from_terms<I: IntoIterator<Item = Vec<i64>>>(group: &GammaGroup, terms: I, cutoff: f64) -> Result<Self, NovikovError> {
        let mut set = BTreeSet::new();
        for g in terms {
            check_exponent(group, &g)?;
            if !set.remove(&g) {
                set.insert(g);
            }
        }
        let mut e = NovikovElement { group: group.clone(), terms: set, cutoff, truncated: false };
        e.apply_cutoff();
        Ok(e)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn apply_cutoff(&mut self) {
        if self.cutoff.is_finite() {
            let (group, cutoff) = (&self.group, self.cutoff);
            let before = self.terms.len();
            self.terms.retain(|g| !below(group.energy(g), cutoff));
            if self.terms.len() != before {
                self.truncated = true;
            }
        }
    }

    pub fn max_energy(&self) -> f64 {
        self.terms.iter().map(|g| self.group.energy(g)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Degrees occurring among the stored terms.
    pub fn degrees(&self) -> BTreeSet<i64> {
        self.terms.iter().map(|g| self.group.degree(g)).collect()
    }

    /// `Some(k)` if all terms lie in Λ_k.
    pub fn homogeneous_degree(&self) -> Option<i64> {
        let d = self.degrees();
        if d.len() == 1 {
            d.into_iter().next()
        } else {
            None
        }
    }

    /// Equality above a cutoff: the symmetric difference has only terms below `kappa`.
    pub fn eq_above(&self, other: &NovikovElement, kappa: f64) -> bool {
        self.terms.symmetric_difference(&other.terms).all(|g| self.group.energy(g) < kappa)
    }

    /// Serialized form `[[exponent, 1], ...]`.
    pub fn to_pairs(&self) -> Vec<(Vec<i64>, u8)> {
        self.terms.iter().map(|g| (g.clone(), 1)).collect()
    }
}

/// Energy comparison against a cutoff with slack for rounding, so that terms lying
/// exactly on the cutoff are kept by every code path.
fn below(e: f64, cutoff: f64) -> bool {
    e < cutoff - 1e-9 * (1.0 + cutoff.abs())
}

fn check_exponent(group: &GammaGroup, g: &[i64]) -> Result<(), NovikovError> {
    if g.len() != group.rank() {
        return Err(NovikovError::Rank(g.to_vec()));
    }
    if g.iter().any(|c| c.abs() > EXPONENT_BOUND) {
        return Err(NovikovError::ExponentOverflow);
    }
    Ok(())
}

fn same_group(a: &NovikovElement, b: &NovikovElement) -> Result<(), NovikovError> {
    if a.group != b.group {
        return Err(NovikovError::GroupMismatch);
    }
    Ok(())
}

pub fn nv_add(a: &NovikovElement, b: &NovikovElement) -> Result<NovikovElement, NovikovError> {
    same_group(a, b)?;
    let terms = a.terms.symmetric_difference(&b.terms).cloned().collect();
    let mut out = NovikovElement {
        group: a.group.clone(),
        terms,
        cutoff: a.cutoff.max(b.cutoff),
        truncated: a.truncated || b.truncated,
    };
    out.apply_cutoff();
    Ok(out)
}

/// Cutoff of a product: the smallest energy above which every product term is known.
fn product_cutoff(a: &NovikovElement, b: &NovikovElement) -> f64 {
    let (ea, eb) = (a.max_energy(), b.max_energy());
    let mut k = f64::NEG_INFINITY;
    for v in [a.cutoff + eb, b.cutoff + ea, a.cutoff + b.cutoff] {
        if !v.is_nan() {
            k = k.max(v);
        }
    }
    k
}

fn mul_with_cutoff(a: &NovikovElement, b: &NovikovElement, cutoff: f64) -> Result<NovikovElement, NovikovError> {
    let group = &a.group;
    let mut terms: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut truncated = a.truncated || b.truncated;
    for x in &a.terms {
        let ex = group.energy(x);
        for y in &b.terms {
            if cutoff.is_finite() && below(ex + group.energy(y), cutoff) {
                truncated = true;
                continue;
            }
            let g: Vec<i64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
            if g.iter().any(|c| c.abs() > EXPONENT_BOUND) {
                return Err(NovikovError::ExponentOverflow);
            }
            if !terms.remove(&g) {
                terms.insert(g);
            }
        }
    }
    let mut out = NovikovElement { group: group.clone(), terms, cutoff, truncated };
    out.apply_cutoff();
    Ok(out)
}

pub fn nv_mul(a: &NovikovElement, b: &NovikovElement) -> Result<NovikovElement, NovikovError> {
    same_group(a, b)?;
    mul_with_cutoff(a, b, product_cutoff(a, b))
}

/// Default cutoff of an inverse: its leading energy minus 20 times the largest generator energy.
pub fn default_inverse_cutoff(a: &NovikovElement) -> f64 {
    -a.max_energy() - 20.0 * a.group.max_abs_energy().max(f64::MIN_POSITIVE)
}

pub fn nv_invert(a: &NovikovElement) -> Result<NovikovElement, NovikovError> {
    nv_invert_with_cutoff(a, default_inverse_cutoff(a))
}

/// Inverse computed as `γ₀⁻¹ Σ_k (-x)^k` for `a = γ₀(1 + x)`, with terms of the
/// result below `kappa` dropped.
pub fn nv_invert_with_cutoff(a: &NovikovElement, kappa: f64) -> Result<NovikovElement, NovikovError> {
    if a.is_zero() {
        return Err(NovikovError::Zero);
    }
    let group = &a.group;
    let mut lead: Option<(&Vec<i64>, f64)> = None;
    let mut second = f64::NEG_INFINITY;
    for g in &a.terms {
        let e = group.energy(g);
        match lead {
            Some((_, le)) if e <= le => second = second.max(e),
            Some((_, le)) => {
                second = second.max(le);
                lead = Some((g, e));
            }
            None => lead = Some((g, e)),
        }
    }
    let (g0, e0) = lead.expect("nonzero");
    let tie_tol = 1e-12 * group.energy_scale(g0);
    if e0 - second <= tie_tol {
        return Err(NovikovError::EnergyTie { energy: e0 });
    }
    let g0_inv: Vec<i64> = g0.iter().map(|c| -c).collect();
    // An inexact input is only known above its cutoff; the inverse inherits that.
    let kappa = if a.cutoff.is_finite() { kappa.max(a.cutoff - 2.0 * e0) } else { kappa };
    // Relative cutoff, measured before multiplying by γ₀⁻¹.
    let rel = kappa + e0;
    let inv_lead = NovikovElement::monomial(group, g0_inv.clone())?;
    let normalized = mul_with_cutoff(a, &inv_lead, f64::NEG_INFINITY)?;
    let mut x = normalized.clone();
    x.terms.remove(&vec![0; group.rank()]);
    x.cutoff = f64::NEG_INFINITY;
    // Over GF(2), -x = x.
    let mut sum = NovikovElement::one(group);
    sum.cutoff = rel;
    let mut power = NovikovElement::one(group);
    let mut truncated = a.truncated;
    loop {
        power = mul_with_cutoff(&power, &x, rel)?;
        truncated |= power.truncated;
        if power.is_zero() {
            break;
        }
        sum.terms = sum.terms.symmetric_difference(&power.terms).cloned().collect();
    }
    let mut out = mul_with_cutoff(&sum, &inv_lead, kappa)?;
    out.truncated |= truncated;
    Ok(out)
}

/// Random element with distinct exponents drawn from `[-range, range]^d`.
pub fn random_element<R: Rng>(group: &GammaGroup, rng: &mut R, nterms: usize, range: i64) -> NovikovElement {
    let mut terms = BTreeSet::new();
    let mut guard = 0;
    while terms.len() < nterms && guard < 100 * nterms + 100 {
        guard += 1;
        let g: Vec<i64> = (0..group.rank()).map(|_| rng.gen_range(-range..=range)).collect();
        terms.insert(g);
    }
    NovikovElement { group: group.clone(), terms, cutoff: f64::NEG_INFINITY, truncated: false }
}

/// Random homogeneous element of degree `deg`, or `None` if none was found.
pub fn random_homogeneous<R: Rng>(group: &GammaGroup, rng: &mut R, nterms: usize, range: i64, deg: i64) -> Option<NovikovElement> {
    let mut terms = BTreeSet::new();
    for _ in 0..(2000 * nterms) {
        let g: Vec<i64> = (0..group.rank()).map(|_| rng.gen_range(-range..=range)).collect();
        if group.degree(&g) == deg {
            terms.insert(g);
            if terms.len() == nterms {
                break;
            }
        }
    }
    (!terms.is_empty()).then(|| NovikovElement { group: group.clone(), terms, cutoff: f64::NEG_INFINITY, truncated: false })
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub group: GammaGroup,
    pub inversions: usize,
    pub inversion_failures: usize,
    pub max_inverse_terms: usize,
    pub grading_products: usize,
    pub grading_failures: usize,
    pub additivity_pairs: usize,
    pub additivity_failures: usize,
    pub passed: bool,
}

/// Round-trip inversions and grading checks over Γ = ℤ² with energies (1, √2)
/// and degrees (2, -1).
pub fn selftest(seed: u64, count: usize) -> SelftestReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let group = GammaGroup::new(vec![2, -1], vec![1.0, std::f64::consts::SQRT_2]).expect("valid");
    let mut inversion_failures = 0;
    let mut max_inverse_terms = 0;
    for _ in 0..count {
        let n = rng.gen_range(1..=4);
        let a = random_element(&group, &mut rng, n, 3);
        let ok = match nv_invert(&a) {
            Ok(inv) => {
                max_inverse_terms = max_inverse_terms.max(inv.len());
                match nv_mul(&a, &inv) {
                    Ok(p) => p.eq_above(&NovikovElement::one(&group), p.cutoff) && p.cutoff < 0.0,
                    Err(_) => false,
                }
            }
            Err(_) => false,
        };
        if !ok {
            inversion_failures += 1;
        }
    }
    let mut grading_failures = 0;
    let mut grading_products = 0;
    while grading_products < count {
        let (j, k) = (rng.gen_range(-3..=3), rng.gen_range(-3..=3));
        let (Some(a), Some(b)) = (
            random_homogeneous(&group, &mut rng, 3, 4, j),
            random_homogeneous(&group, &mut rng, 3, 4, k),
        ) else {
            continue;
        };
        grading_products += 1;
        match nv_mul(&a, &b) {
            Ok(p) if p.is_zero() || p.homogeneous_degree() == Some(j + k) => {}
            _ => grading_failures += 1,
        }
    }
    let mut additivity_failures = 0;
    for _ in 0..count {
        let g: Vec<i64> = (0..2).map(|_| rng.gen_range(-50..=50)).collect();
        let h: Vec<i64> = (0..2).map(|_| rng.gen_range(-50..=50)).collect();
        let s: Vec<i64> = g.iter().zip(&h).map(|(a, b)| a + b).collect();
        let de = group.degree(&s) - group.degree(&g) - group.degree(&h);
        let ee = group.energy(&s) - group.energy(&g) - group.energy(&h);
        if de != 0 || ee.abs() > 1e-9 {
            additivity_failures += 1;
        }
    }
    SelftestReport {
        seed,
        group,
        inversions: count,
        inversion_failures,
        max_inverse_terms,
        grading_products,
        grading_failures,
        additivity_pairs: count,
        additivity_failures,
        passed: inversion_failures == 0 && grading_failures == 0 && additivity_failures == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> GammaGroup {
        GammaGroup::new(vec![1], vec![-1.0]).unwrap()
    }

    #[test]
    fn characteristic_two() {
        let g = g1();
        let a = NovikovElement::from_terms(&g, [vec![0], vec![3]], f64::NEG_INFINITY).unwrap();
        assert!(nv_add(&a, &a).unwrap().is_zero());
        assert_eq!(nv_add(&a, &NovikovElement::zero(&g)).unwrap(), a);
    }

    #[test]
    fn square_of_one_plus_gamma() {
        let g = g1();
        let a = NovikovElement::from_terms(&g, [vec![0], vec![1]], f64::NEG_INFINITY).unwrap();
        let sq = nv_mul(&a, &a).unwrap();
        assert_eq!(sq.terms.into_iter().collect::<Vec<_>>(), vec![vec![0], vec![2]]);
    }

    #[test]
    fn geometric_series_inverse() {
        let g = g1();
        let a = NovikovElement::from_terms(&g, [vec![0], vec![1]], f64::NEG_INFINITY).unwrap();
        let inv = nv_invert_with_cutoff(&a, -10.0).unwrap();
        let expected: Vec<Vec<i64>> = (0..=10).map(|k| vec![k]).collect();
        assert_eq!(inv.terms.iter().cloned().collect::<Vec<_>>(), expected);
        // Full product is 1 + γ^11; with the cutoff only 1 survives.
        let exact = mul_with_cutoff(&a, &inv, f64::NEG_INFINITY).unwrap();
        assert_eq!(exact.terms.iter().cloned().collect::<Vec<_>>(), vec![vec![0], vec![11]]);
        let p = nv_mul(&a, &inv).unwrap();
        assert_eq!(p.cutoff, -10.0);
        assert!(p.eq_above(&NovikovElement::one(&g), -10.0));
        assert_eq!(p.terms.len(), 1);
    }

    #[test]
    fn monomial_and_unit_inverses() {
        let g = g1();
        let m = NovikovElement::monomial(&g, vec![4]).unwrap();
        assert_eq!(nv_invert(&m).unwrap().terms.into_iter().collect::<Vec<_>>(), vec![vec![-4]]);
        let one = NovikovElement::one(&g);
        assert_eq!(nv_invert(&one).unwrap().terms, one.terms);
    }

    #[test]
    fn ties_and_zero_rejected() {
        let g = GammaGroup::new(vec![0, 0], vec![1.0, 1.0]).unwrap();
        let a = NovikovElement::from_terms(&g, [vec![1, 0], vec![0, 1]], f64::NEG_INFINITY).unwrap();
        assert!(matches!(nv_invert(&a), Err(NovikovError::EnergyTie { .. })));
        assert_eq!(nv_invert(&NovikovElement::zero(&g)), Err(NovikovError::Zero));
    }

    #[test]
    fn group_mismatch_and_overflow() {
        let a = NovikovElement::one(&g1());
        let b = NovikovElement::one(&GammaGroup::new(vec![2], vec![-1.0]).unwrap());
        assert_eq!(nv_add(&a, &b), Err(NovikovError::GroupMismatch));
        let big = NovikovElement::monomial(&g1(), vec![EXPONENT_BOUND]).unwrap();
        assert_eq!(nv_mul(&big, &big), Err(NovikovError::ExponentOverflow));
        assert!(NovikovElement::monomial(&g1(), vec![EXPONENT_BOUND + 1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = GammaGroup::new(vec![1, 0], vec![1.0, 0.5]).unwrap();
        let a = NovikovElement::from_terms(&g, [vec![1, 2], vec![0, -1]], -3.0).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        let b: NovikovElement = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        let exact = NovikovElement::one(&g);
        let t: NovikovElement = serde_json::from_str(&serde_json::to_string(&exact).unwrap()).unwrap();
        assert_eq!(t.cutoff, f64::NEG_INFINITY);
    }

    #[test]
    fn selftest_passes() {
        let r = selftest(1, 100);
        assert!(r.passed, "{r:?}");
    }
}
