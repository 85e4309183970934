//! Flow lines with cascades between critical points of `h`.
//!
//! A single cascade from `c₁` to `c₂` is found by shooting: a forward family
//! launched from `W^u_h(c₁)` along unstable normal directions flows down to the
//! level halfway between the two critical values, a backward family launched
//! from `W^s_h(c₂)` along stable normal directions flows up to the same level,
//! and the two are matched on that level set. Families of dimension one are
//! scanned on a grid and matched by bisection on the sign of the residual along
//! the level set.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::{flow_to_level, h_flow_param, same_level, FlowError, FlowParams, FlowSense, Limit, Trajectory};
use crate::geometry::{GeometryError, MorseBottProblem, Parameterization};
use crate::tol::ZERO_EIG_TOL;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CascadeError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-transversal solutions for {pair}: {detail}")]
    NonTransversal { pair: String, detail: String },
    #[error("unsupported search: {0}")]
    Unsupported(String),
    #[error("shooting budget of {0} integrations exhausted")]
    BudgetExhausted(usize),
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("count for {pair} untrusted after {attempts} attempts: {detail}")]
    Untrusted { pair: String, attempts: usize, detail: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Grid size for each one-parameter shooting family.
    pub samples: usize,
    /// Maximum number of flow integrations per pair.
    pub budget: usize,
    /// Bisection stops when the parameter bracket is shorter than this.
    pub refine_tol: f64,
    /// Ambient distance under which two shots are considered to meet.
    pub match_tol: f64,
    /// Distinct solutions closer than this in parameter space are an error.
    pub dedup_radius: f64,
    /// Distance from the critical submanifold at which shots are launched.
    pub launch_eps: f64,
    /// Launch distance along a normal space that is entirely unstable (or
    /// stable), where every nearby point lies on the invariant manifold.
    pub open_launch: f64,
    pub dwell_speed: f64,
    pub dwell_threshold: f64,
    pub max_retries: usize,
    /// Size of the random symmetric metric perturbation used on retries.
    pub perturbation: f64,
    pub seed: u64,
    /// Duration of the `h`-flow used to identify zero-cascade lines.
    pub h_time: f64,
    /// Number of representatives reported for positive-dimensional families.
    pub exist_samples: usize,
    pub flow: FlowParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            samples: 64,
            budget: 100_000,
            refine_tol: 1e-10,
            match_tol: 1e-6,
            dedup_radius: 1e-3,
            launch_eps: 1e-7,
            open_launch: 1e-3,
            dwell_speed: 1e-3,
            dwell_threshold: 5.0,
            max_retries: 3,
            perturbation: 1e-2,
            seed: 7,
            h_time: 1e3,
            exist_samples: 8,
            flow: FlowParams { record: false, ..FlowParams::default() },
        }
    }
}

/// Critical point of `h` on a critical submanifold of `f`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CritPoint {
    pub name: String,
    pub submanifold: usize,
    /// Position in the submanifold's list of critical points of `h`.
    pub crit: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub ind_f: i64,
    pub ind_h: i64,
    pub level: f64,
}

impl CritPoint {
    /// Ind = ind_f + ind_h.
    pub fn ind(&self) -> i64 {
        self.ind_f + self.ind_h
    }

    fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.point)
    }

    fn same_as(&self, other: &CritPoint) -> bool {
        self.submanifold == other.submanifold && self.crit == other.crit
    }
}

pub fn critical_points(problem: &MorseBottProblem) -> Vec<CritPoint> {
    let mut out = Vec::new();
    for (i, s) in problem.submanifolds.iter().enumerate() {
        for (j, c) in s.crit_h.iter().enumerate() {
            let x = s.point(&c.param);
            out.push(CritPoint {
                name: c.name.clone(),
                submanifold: i,
                crit: j,
                param: c.param.clone(),
                point: x.as_slice().to_vec(),
                ind_f: s.ind_f as i64,
                ind_h: c.ind_h as i64,
                level: problem.level(&x),
            });
        }
    }
    out
}

pub fn index(c: &CritPoint) -> i64 {
    c.ind()
}

/// Ind(c₁) − Ind(c₂) − 1.
pub fn expected_moduli_dim(c1: &CritPoint, c2: &CritPoint) -> i64 {
    c1.ind() - c2.ind() - 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PairClass {
    Empty,
    ZeroCascadesOnly,
    PositiveCascadesOnly,
}

pub fn classify_pair(c1: &CritPoint, c2: &CritPoint) -> PairClass {
    if same_level(c1.level, c2.level) {
        PairClass::ZeroCascadesOnly
    } else if c1.level < c2.level {
        PairClass::Empty
    } else {
        PairClass::PositiveCascadesOnly
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeFlowLine {
    pub m: usize,
    pub cascades: Vec<Trajectory>,
    /// Durations t_k of the `h`-flow segments between consecutive cascades.
    pub times: Vec<f64>,
    pub source_witness: Vec<f64>,
    pub target_witness: Vec<f64>,
    /// Starting points y_k(0) of the intermediate `h`-flow segments.
    pub intermediates: Vec<Vec<f64>>,
    /// The `h`-flow line when there are no cascades.
    pub h_line: Option<Trajectory>,
    pub shooting: Vec<f64>,
    pub chaining_residual: f64,
    /// Time spent near critical points in the interior of the line.
    pub dwell: f64,
    pub broken: bool,
    /// Representative of a positive-dimensional family, not an isolated solution.
    pub sampled: bool,
}

impl CascadeFlowLine {
    /// CSV rows `segment,s,x0,..,speed`; segment is the cascade index, or `h` for a zero-cascade line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.source_witness.len();
        write!(w, "segment,s")?;
        for i in 0..dim {
            write!(w, ",x{i}")?;
        }
        writeln!(w, ",speed")?;
        let mut rows = |tag: String, t: &Trajectory| -> std::io::Result<()> {
            for ((s, x), v) in t.times.iter().zip(&t.points).zip(&t.speed) {
                write!(w, "{tag},{s}")?;
                for c in x {
                    write!(w, ",{c}")?;
                }
                writeln!(w, ",{v}")?;
            }
            Ok(())
        };
        if let Some(h) = &self.h_line {
            rows("h".into(), h)?;
        }
        for (k, c) in self.cascades.iter().enumerate() {
            rows(k.to_string(), c)?;
        }
        Ok(())
    }
}

/// Total time with speed below `threshold` between the first and the last
/// sample where the speed exceeds it.
pub fn interior_dwell(traj: &Trajectory, threshold: f64) -> f64 {
    let fast: Vec<usize> = (0..traj.len()).filter(|&i| traj.speed[i] >= threshold).collect();
    let (Some(&a), Some(&b)) = (fast.first(), fast.last()) else { return 0.0 };
    let mut dwell = 0.0;
    for i in a..b {
        if traj.speed[i] < threshold && traj.speed[i + 1] < threshold {
            dwell += traj.times[i + 1] - traj.times[i];
        }
    }
    dwell
}

struct Ctx<'a> {
    problem: &'a MorseBottProblem,
    search: &'a SearchParams,
    used: AtomicUsize,
}

impl Ctx<'_> {
    fn charge(&self) -> Result<(), CascadeError> {
        let n = self.used.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.search.budget {
            return Err(CascadeError::BudgetExhausted(self.search.budget));
        }
        Ok(())
    }
}

/// A one- or zero-parameter set of launch points.
#[derive(Clone, Debug)]
enum Branch {
    /// Launch offset `dir` from `base`.
    Fixed { base: DVector<f64>, dir: DVector<f64>, open: bool },
    /// Base sweeps the open parameter interval (lo, hi) of a one-dimensional
    /// submanifold with its single normal direction scaled by `eps`, oriented by `sign`.
    Arc { sub: usize, lo: f64, hi: f64, sign: f64, eps: f64, open: bool },
    /// Point base, offset `cos 2πφ e₁ + sin 2πφ e₂`.
    Circle { base: DVector<f64>, e1: DVector<f64>, e2: DVector<f64>, open: bool },
}

impl Branch {
    fn dim(&self) -> usize {
        match self {
            Branch::Fixed { .. } => 0,
            _ => 1,
        }
    }

    fn periodic(&self) -> bool {
        matches!(self, Branch::Circle { .. })
    }

    fn open(&self) -> bool {
        match self {
            Branch::Fixed { open, .. } | Branch::Arc { open, .. } | Branch::Circle { open, .. } => *open,
        }
    }

    fn grid(&self, n: usize) -> Vec<f64> {
        match self {
            Branch::Fixed { .. } => vec![0.0],
            Branch::Arc { lo, hi, .. } => (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect(),
            Branch::Circle { .. } => (0..n).map(|i| (i as f64 + 0.25) / n as f64).collect(),
        }
    }

    fn param_dist(&self, a: f64, b: f64) -> f64 {
        if self.periodic() {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d)
        } else {
            (a - b).abs()
        }
    }
}

struct Family {
    sense: FlowSense,
    branches: Vec<Branch>,
}

#[derive(Clone, Debug)]
struct Shot {
    u: Option<f64>,
    /// Launched inside an open invariant set, so the launch point lies exactly on it.
    open: bool,
    base: DVector<f64>,
    launch: DVector<f64>,
    hit: DVector<f64>,
}

#[derive(Clone, Debug)]
struct Sample {
    u: f64,
    dir: DVector<f64>,
    shot: Option<Shot>,
}

/// Unstable (descending) or stable (ascending) normal eigenvectors with |eigenvalue|.
fn normal_dirs(problem: &MorseBottProblem, x: &DVector<f64>, sense: FlowSense) -> Result<Vec<(DVector<f64>, f64)>, CascadeError> {
    let hs = problem.manifold.hessian_spectrum(problem.f.as_ref(), x.as_slice())?;
    let keep = |l: f64| match sense {
        FlowSense::Descending => l < -ZERO_EIG_TOL,
        FlowSense::Ascending => l > ZERO_EIG_TOL,
    };
    Ok(hs
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| keep(l))
        .map(|(i, &l)| (hs.eigenvectors.column(i).into_owned(), l.abs()))
        .collect())
}

/// Open parameter interval between the neighbours of `c` among the critical points of `h`.
fn neighbour_arc(problem: &MorseBottProblem, c: &CritPoint) -> Result<(f64, f64), CascadeError> {
    let s = &problem.submanifolds[c.submanifold];
    let th = c.param[0];
    let others: Vec<f64> = s.crit_h.iter().enumerate().filter(|(j, _)| *j != c.crit).map(|(_, k)| k.param[0]).collect();
    match &s.param {
        Parameterization::Circle { .. } => {
            if others.is_empty() {
                return Err(CascadeError::Unsupported(format!("h on {} has a single critical point", s.name)));
            }
            let d: Vec<f64> = others.iter().map(|o| (o - th).rem_euclid(1.0)).collect();
            let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((th + dmax - 1.0, th + dmin))
        }
        Parameterization::Line { .. } => {
            let lo = others.iter().cloned().filter(|&o| o < th).fold(f64::NEG_INFINITY, f64::max);
            let hi = others.iter().cloned().filter(|&o| o > th).fold(f64::INFINITY, f64::min);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(CascadeError::Unsupported(format!("unbounded stable or unstable set of {} on a line", c.name)));
            }
            Ok((lo, hi))
        }
        Parameterization::Point(_) => Err(CascadeError::Unsupported("arc on a point".into())),
    }
}

/// Forward (descending) family from `W^u_h(c)` or backward (ascending) family from `W^s_h(c)`.
fn build_family(ctx: &Ctx, c: &CritPoint, sense: FlowSense) -> Result<Family, CascadeError> {
    let problem = ctx.problem;
    let sub = &problem.submanifolds[c.submanifold];
    let x = c.x();
    let dirs = normal_dirs(problem, &x, sense)?;
    let k = dirs.len();
    let mut branches = Vec::new();
    if k == 0 {
        return Ok(Family { sense, branches });
    }
    let (ku, ks) = normal_ranks(problem, c.submanifold);
    let open = k == ku + ks;
    let eps = if open { ctx.search.open_launch } else { ctx.search.launch_eps };
    let base_dim = match (sub.dim(), sense) {
        (0, _) => 0,
        (_, FlowSense::Descending) => c.ind_h as usize,
        (d, FlowSense::Ascending) => d - c.ind_h as usize,
    };
    match (base_dim, k) {
        (0, 1) => {
            for s in [1.0, -1.0] {
                branches.push(Branch::Fixed { base: x.clone(), dir: &dirs[0].0 * (s * eps), open });
            }
        }
        (0, 2) => {
            // Ellipse adapted to the rates, close to a level set of the quadratic part,
            // so that the hitting map is well conditioned.
            let slow = dirs[0].1.min(dirs[1].1);
            let e1 = &dirs[0].0 * (eps * (slow / dirs[0].1).sqrt());
            let e2 = &dirs[1].0 * (eps * (slow / dirs[1].1).sqrt());
            branches.push(Branch::Circle { base: x.clone(), e1, e2, open });
        }
        (1, 1) if sub.dim() == 1 => {
            let (lo, hi) = neighbour_arc(problem, c)?;
            for s in [1.0, -1.0] {
                branches.push(Branch::Arc { sub: c.submanifold, lo, hi, sign: s, eps, open });
            }
        }
        _ => {
            return Err(CascadeError::Unsupported(format!(
                "shooting family of dimension {} at {}",
                base_dim + k - 1,
                c.name
            )))
        }
    }
    Ok(Family { sense, branches })
}

fn direction_at(ctx: &Ctx, branch: &Branch, u: f64, reference: Option<&DVector<f64>>) -> Result<(DVector<f64>, DVector<f64>), CascadeError> {
    match branch {
        Branch::Fixed { base, dir, .. } => Ok((base.clone(), dir.clone())),
        Branch::Circle { base, e1, e2, .. } => {
            let a = 2.0 * std::f64::consts::PI * u;
            Ok((base.clone(), e1 * a.cos() + e2 * a.sin()))
        }
        Branch::Arc { sub, sign, eps, .. } => {
            let s = &ctx.problem.submanifolds[*sub];
            let base = s.point(&[u]);
            // Either sense gives the same normal line here; pick the one with a nonzero eigenvalue.
            let mut dirs = normal_dirs(ctx.problem, &base, FlowSense::Descending)?;
            if dirs.is_empty() {
                dirs = normal_dirs(ctx.problem, &base, FlowSense::Ascending)?;
            }
            if dirs.len() != 1 {
                return Err(CascadeError::Unsupported(format!("normal rank {} along {}", dirs.len(), s.name)));
            }
            let mut v = dirs.swap_remove(0).0 * *eps;
            match reference {
                Some(r) => {
                    if ctx.problem.manifold.inner(&v, r) < 0.0 {
                        v = -v;
                    }
                }
                None => v *= *sign,
            }
            Ok((base, v))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn shoot_from(
    ctx: &Ctx,
    base: DVector<f64>,
    offset: &DVector<f64>,
    u: Option<f64>,
    open: bool,
    sense: FlowSense,
    level: f64,
) -> Result<Option<Shot>, CascadeError> {
    ctx.charge()?;
    let m = &ctx.problem.manifold;
    let launch = m.project(&(&base + offset))?;
    let hit = flow_to_level(ctx.problem, &launch, sense, level, &ctx.search.flow)?;
    Ok(hit.map(|h| Shot { u, open, base, launch, hit: h.point }))
}

fn shoot(ctx: &Ctx, branch: &Branch, u: f64, reference: Option<&DVector<f64>>, sense: FlowSense, level: f64) -> Result<(Option<Shot>, DVector<f64>), CascadeError> {
    let (base, dir) = direction_at(ctx, branch, u, reference)?;
    let uu = (branch.dim() > 0).then_some(u);
    Ok((shoot_from(ctx, base, &dir, uu, branch.open(), sense, level)?, dir))
}

fn eval_grid(ctx: &Ctx, branch: &Branch, sense: FlowSense, level: f64) -> Result<Vec<Sample>, CascadeError> {
    let us = branch.grid(ctx.search.samples.max(4));
    // Directions are fixed sequentially so that arc orientations are continuous.
    let mut dirs: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(us.len());
    for (i, &u) in us.iter().enumerate() {
        let prev = if i == 0 { None } else { Some(&dirs[i - 1].1) };
        let d = direction_at(ctx, branch, u, prev)?;
        dirs.push(d);
    }
    let shots: Vec<Result<Option<Shot>, CascadeError>> = us
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(&u, (base, dir))| shoot_from(ctx, base.clone(), dir, (branch.dim() > 0).then_some(u), branch.open(), sense, level))
        .collect();
    let mut out = Vec::with_capacity(us.len());
    for ((u, (_, dir)), s) in us.into_iter().zip(dirs).zip(shots) {
        out.push(Sample { u, dir, shot: s? });
    }
    Ok(out)
}

/// Unit tangent of the level set of `f` through `b` on a surface.
fn section_tangent(problem: &MorseBottProblem, b: &DVector<f64>) -> Result<DVector<f64>, CascadeError> {
    let m = &problem.manifold;
    if m.dim() != 2 {
        return Err(CascadeError::Unsupported(format!("level-set matching on a {}-manifold", m.dim())));
    }
    let t = m.tangent_basis(b.as_slice())?;
    let g = problem.f.gradient(b.as_slice());
    let (a1, a2) = (t.column(0).dot(&g), t.column(1).dot(&g));
    let n = (a1 * a1 + a2 * a2).sqrt();
    if n < 1e-12 {
        return Err(CascadeError::Unsupported("matching level passes through a critical point".into()));
    }
    Ok((t.column(0) * (-a2) + t.column(1) * a1) / n)
}

struct Root {
    shot: Shot,
    gap: f64,
}

/// Solutions of `⟨F(u) − target, τ⟩ = 0` with `|F(u) − target| < match_tol` along a one-parameter branch.
#[allow(clippy::too_many_arguments)]
fn curve_roots(
    ctx: &Ctx,
    branch: &Branch,
    sense: FlowSense,
    level: f64,
    grid: &[Sample],
    target: &DVector<f64>,
    tau: &DVector<f64>,
    pair: &str,
    check_tangency: bool,
) -> Result<Vec<Root>, CascadeError> {
    let sp = ctx.search;
    let res = |s: &Shot| (&s.hit - target).dot(tau);
    let n = grid.len();
    let r: Vec<Option<f64>> = grid.iter().map(|g| g.shot.as_ref().map(res)).collect();
    let npairs = if branch.periodic() { n } else { n - 1 };
    let mut roots: Vec<Root> = Vec::new();
    for i in 0..npairs {
        let j = (i + 1) % n;
        let (Some(ra), Some(rb)) = (r[i], r[j]) else { continue };
        if ra * rb > 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (grid[i].u, grid[j].u);
        if j == 0 {
            hi += 1.0;
        }
        let reference = grid[i].dir.clone();
        let mut rlo = ra;
        let mut best = grid[i].shot.clone().expect("present");
        let mut ok = true;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= sp.refine_tol && (&best.hit - target).norm() < 1e-2 * sp.match_tol {
                break;
            }
            if mid <= lo || mid >= hi {
                break;
            }
            let (shot, _) = shoot(ctx, branch, mid, Some(&reference), sense, level)?;
            let Some(shot) = shot else {
                ok = false;
                break;
            };
            let rm = res(&shot);
            best = shot;
            if rm == 0.0 {
                break;
            }
            if rm * rlo > 0.0 {
                lo = mid;
                rlo = rm;
            } else {
                hi = mid;
            }
        }
        if !ok {
            continue;
        }
        let gap = (&best.hit - target).norm();
        if gap < sp.match_tol {
            if let Some(u) = best.u.as_mut() {
                if branch.periodic() {
                    *u = u.rem_euclid(1.0);
                }
            }
            roots.push(Root { shot: best, gap });
        }
    }
    if check_tangency {
        for i in 0..n {
            if !branch.periodic() && (i == 0 || i + 1 == n) {
                continue;
            }
            let (a, b) = ((i + n - 1) % n, (i + 1) % n);
            let (Some(ra), Some(ri), Some(rb)) = (r[a], r[i], r[b]) else { continue };
            if ra * ri <= 0.0 || ri * rb <= 0.0 || ri.abs() >= ra.abs() || ri.abs() >= rb.abs() {
                continue;
            }
            let (mut lo, mut hi) = (grid[a].u, grid[b].u);
            if hi < lo {
                hi += 1.0;
            }
            let reference = grid[a].dir.clone();
            let gap_at = |u: f64| -> Result<f64, CascadeError> {
                let (s, _) = shoot(ctx, branch, u, Some(&reference), sense, level)?;
                Ok(s.map_or(f64::INFINITY, |s| (&s.hit - target).norm()))
            };
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = hi - phi * (hi - lo);
            let mut x2 = lo + phi * (hi - lo);
            let (mut f1, mut f2) = (gap_at(x1)?, gap_at(x2)?);
            for _ in 0..40 {
                if f1 < f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - phi * (hi - lo);
                    f1 = gap_at(x1)?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + phi * (hi - lo);
                    f2 = gap_at(x2)?;
                }
            }
            if f1.min(f2) < sp.match_tol {
                return Err(CascadeError::NonTransversal {
                    pair: pair.into(),
                    detail: format!("tangential intersection near parameter {:.6}", 0.5 * (lo + hi)),
                });
            }
        }
    }
    roots.sort_by(|a, b| a.shot.u.unwrap_or(0.0).total_cmp(&b.shot.u.unwrap_or(0.0)));
    let mut merged: Vec<Root> = Vec::new();
    for rt in roots {
        let u = rt.shot.u.unwrap_or(0.0);
        if let Some(prev) = merged.iter_mut().find(|p| branch.param_dist(p.shot.u.unwrap_or(0.0), u) < 1e3 * sp.refine_tol) {
            if rt.gap < prev.gap {
                *prev = rt;
            }
            continue;
        }
        if let Some(p) = merged.iter().find(|p| branch.param_dist(p.shot.u.unwrap_or(0.0), u) < sp.dedup_radius) {
            return Err(CascadeError::NonTransversal {
                pair: pair.into(),
                detail: format!("solutions at {:.6} and {:.6} closer than the dedup radius", p.shot.u.unwrap_or(0.0), u),
            });
        }
        merged.push(rt);
    }
    Ok(merged)
}

fn stitch(ctx: &Ctx, level: f64, fwd: &Shot, bwd: &Shot, target_sub: usize) -> Result<(Trajectory, f64), CascadeError> {
    let params = FlowParams { record: true, ..ctx.search.flow.clone() };
    let f = flow_to_level(ctx.problem, &fwd.launch, FlowSense::Descending, level, &params)?;
    let b = flow_to_level(ctx.problem, &bwd.launch, FlowSense::Ascending, level, &params)?;
    let (Some(f), Some(b)) = (f, b) else {
        return Err(CascadeError::Unsupported("recorded shot did not reach the matching level".into()));
    };
    let (ft, bt) = (f.trajectory.expect("recorded"), b.trajectory.expect("recorded"));
    let gap = (&f.point - &b.point).norm();
    let mut t = ft;
    let t1 = *t.times.last().unwrap_or(&0.0);
    let t2 = *bt.times.last().unwrap_or(&0.0);
    for i in (0..bt.len()).rev() {
        t.times.push(t1 + (t2 - bt.times[i]));
        t.points.push(bt.points[i].clone());
        t.speed.push(bt.speed[i]);
    }
    t.limit = Some(Limit { submanifold: Some(target_sub), point: bwd.base.as_slice().to_vec(), fit: None });
    Ok((t, gap))
}

fn make_line(ctx: &Ctx, level: f64, fwd: &Shot, bwd: &Shot, c2: &CritPoint, sampled: bool) -> Result<CascadeFlowLine, CascadeError> {
    let (traj, gap) = stitch(ctx, level, fwd, bwd, c2.submanifold)?;
    let off = |s: &Shot| if s.open { 0.0 } else { (&s.launch - &s.base).norm() };
    let launch_dist = off(fwd).max(off(bwd));
    let dwell = interior_dwell(&traj, ctx.search.dwell_speed);
    let shooting = fwd.u.into_iter().chain(bwd.u).collect();
    Ok(CascadeFlowLine {
        m: 1,
        cascades: vec![traj],
        times: vec![],
        source_witness: fwd.base.as_slice().to_vec(),
        target_witness: bwd.base.as_slice().to_vec(),
        intermediates: vec![],
        h_line: None,
        shooting,
        chaining_residual: gap.max(launch_dist),
        dwell,
        broken: dwell > ctx.search.dwell_threshold,
        sampled,
    })
}

/// Lines with exactly one cascade from `c₁` to `c₂`.
fn single_cascade(ctx: &Ctx, c1: &CritPoint, c2: &CritPoint) -> Result<Vec<CascadeFlowLine>, CascadeError> {
    let pair = format!("{} -> {}", c1.name, c2.name);
    let level = 0.5 * (c1.level + c2.level);
    let fwd = build_family(ctx, c1, FlowSense::Descending)?;
    let bwd = build_family(ctx, c2, FlowSense::Ascending)?;
    if fwd.branches.is_empty() || bwd.branches.is_empty() {
        return Ok(vec![]);
    }
    let grids = |fam: &Family| -> Result<Vec<Vec<Sample>>, CascadeError> {
        fam.branches.iter().map(|b| eval_grid(ctx, b, fam.sense, level)).collect()
    };
    let (fg, bg) = (grids(&fwd)?, grids(&bwd)?);
    let mut lines = Vec::new();
    for (fb, fgrid) in fwd.branches.iter().zip(&fg) {
        for (bb, bgrid) in bwd.branches.iter().zip(&bg) {
            match (fb.dim(), bb.dim()) {
                (0, 0) => {
                    let (Some(a), Some(b)) = (&fgrid[0].shot, &bgrid[0].shot) else { continue };
                    if (&a.hit - &b.hit).norm() < ctx.search.match_tol {
                        lines.push(make_line(ctx, level, a, b, c2, false)?);
                    }
                }
                (1, 0) => {
                    let Some(b) = &bgrid[0].shot else { continue };
                    let tau = section_tangent(ctx.problem, &b.hit)?;
                    for r in curve_roots(ctx, fb, fwd.sense, level, fgrid, &b.hit, &tau, &pair, true)? {
                        lines.push(make_line(ctx, level, &r.shot, b, c2, false)?);
                    }
                }
                (0, 1) => {
                    let Some(a) = &fgrid[0].shot else { continue };
                    let tau = section_tangent(ctx.problem, &a.hit)?;
                    for r in curve_roots(ctx, bb, bwd.sense, level, bgrid, &a.hit, &tau, &pair, true)? {
                        lines.push(make_line(ctx, level, a, &r.shot, c2, false)?);
                    }
                }
                _ => {
                    // Positive-dimensional moduli: report a few representatives.
                    let stride = (fgrid.len() / ctx.search.exist_samples.max(1)).max(1);
                    for s in fgrid.iter().step_by(stride) {
                        let Some(a) = &s.shot else { continue };
                        let tau = section_tangent(ctx.problem, &a.hit)?;
                        if let Ok(rs) = curve_roots(ctx, bb, bwd.sense, level, bgrid, &a.hit, &tau, &pair, false) {
                            if let Some(r) = rs.first() {
                                lines.push(make_line(ctx, level, a, &r.shot, c2, true)?);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(lines)
}

fn param_distance(problem: &MorseBottProblem, sub: usize, a: f64, b: f64) -> f64 {
    if problem.submanifolds[sub].param.is_periodic() {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    } else {
        (a - b).abs()
    }
}

/// Morse flow lines of `h` from `c₁` to `c₂` on a common one-dimensional submanifold.
fn zero_cascades(ctx: &Ctx, c1: &CritPoint, c2: &CritPoint) -> Result<Vec<CascadeFlowLine>, CascadeError> {
    let problem = ctx.problem;
    if c1.submanifold != c2.submanifold || problem.submanifolds[c1.submanifold].dim() != 1 {
        return Ok(vec![]);
    }
    let si = c1.submanifold;
    let sub = &problem.submanifolds[si];
    let mut lines = Vec::new();
    for sign in [1.0, -1.0] {
        let th0 = c1.param[0] + sign * ctx.search.launch_eps;
        let th_end = h_flow_param(problem, si, th0, ctx.search.h_time)?;
        if param_distance(problem, si, th_end, c2.param[0]) > 1e-6 {
            continue;
        }
        let mut h = Trajectory::default();
        let (mut th, mut t) = (th0, 0.0);
        let mut dt = 1e-2f64;
        loop {
            let v = sub.h_flow_velocity(&problem.manifold, &[th]);
            h.times.push(t);
            h.points.push(sub.point(&[th]).as_slice().to_vec());
            h.speed.push(v.abs() * sub.g0(&problem.manifold, &[th]).sqrt());
            if t >= ctx.search.h_time {
                break;
            }
            let step = dt.min(ctx.search.h_time - t);
            th = h_flow_param(problem, si, th, step)?;
            t += step;
            dt *= 1.25;
        }
        let end = sub.point(&[th]);
        h.limit = Some(Limit { submanifold: Some(si), point: end.as_slice().to_vec(), fit: None });
        let residual = (end - c2.x()).norm().max((sub.point(&[th0]) - c1.x()).norm());
        lines.push(CascadeFlowLine {
            m: 0,
            cascades: vec![],
            times: vec![],
            source_witness: c1.point.clone(),
            target_witness: c2.point.clone(),
            intermediates: vec![],
            h_line: Some(h),
            shooting: vec![sign],
            chaining_residual: residual,
            dwell: 0.0,
            broken: false,
            sampled: false,
        });
    }
    Ok(lines)
}

/// Normal ranks (unstable, stable) of a critical submanifold.
fn normal_ranks(problem: &MorseBottProblem, sub: usize) -> (usize, usize) {
    let s = &problem.submanifolds[sub];
    let codim = problem.manifold.dim().saturating_sub(s.dim());
    (s.ind_f, codim.saturating_sub(s.ind_f))
}

fn point_crit(problem: &MorseBottProblem, sub: usize) -> CritPoint {
    critical_points(problem).into_iter().find(|c| c.submanifold == sub).expect("every submanifold lists a critical point")
}

/// Submanifold levels strictly between the levels of `c₁` and `c₂`, one
/// representative submanifold list per distinct level, in decreasing order.
fn levels_between(problem: &MorseBottProblem, c1: &CritPoint, c2: &CritPoint) -> Vec<(f64, Vec<usize>)> {
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    let (hi, lo) = (c1.level.max(c2.level), c1.level.min(c2.level));
    for i in 0..problem.submanifolds.len() {
        let l = problem.sub_level(i);
        if l < hi && l > lo && !same_level(l, hi) && !same_level(l, lo) {
            match out.iter_mut().find(|(v, _)| same_level(*v, l)) {
                Some((_, v)) => v.push(i),
                None => out.push((l, vec![i])),
            }
        }
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

fn chains(levels: &[(f64, Vec<usize>)], len: usize, start: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if acc.len() == len {
        out.push(acc.clone());
        return;
    }
    for li in start..levels.len() {
        for &s in &levels[li].1 {
            acc.push(s);
            chains(levels, len, li + 1, acc, out);
            acc.pop();
        }
    }
}

fn join(a: &CascadeFlowLine, b: &CascadeFlowLine, via: &CritPoint) -> CascadeFlowLine {
    let mut out = a.clone();
    out.m += b.m;
    out.cascades.extend(b.cascades.iter().cloned());
    out.times.push(0.0);
    out.times.extend(b.times.iter().cloned());
    out.intermediates.push(via.point.clone());
    out.intermediates.extend(b.intermediates.iter().cloned());
    out.target_witness = b.target_witness.clone();
    out.shooting.extend(b.shooting.iter().cloned());
    out.chaining_residual = a.chaining_residual.max(b.chaining_residual);
    out.dwell = a.dwell.max(b.dwell);
    out.broken = a.broken || b.broken;
    out.sampled = a.sampled || b.sampled;
    out
}

fn find_in(ctx: &Ctx, c1: &CritPoint, c2: &CritPoint, m: usize) -> Result<Vec<CascadeFlowLine>, CascadeError> {
    if c1.same_as(c2) {
        return Ok(vec![]);
    }
    match (classify_pair(c1, c2), m) {
        (PairClass::Empty, _) | (PairClass::ZeroCascadesOnly, 1..) | (PairClass::PositiveCascadesOnly, 0) => {
            return Ok(vec![])
        }
        _ => {}
    }
    match m {
        0 => zero_cascades(ctx, c1, c2),
        1 => single_cascade(ctx, c1, c2),
        _ => {
            let problem = ctx.problem;
            let levels = levels_between(problem, c1, c2);
            let mut all = Vec::new();
            chains(&levels, m - 1, 0, &mut Vec::new(), &mut all);
            let mut lines = Vec::new();
            'chain: for ch in all {
                let mut stops = Vec::new();
                for &s in &ch {
                    if problem.submanifolds[s].dim() == 0 {
                        stops.push(point_crit(problem, s));
                        continue;
                    }
                    let (ku, ks) = normal_ranks(problem, s);
                    if ku == 0 || ks == 0 {
                        // Nothing can both arrive at and leave this submanifold.
                        continue 'chain;
                    }
                    return Err(CascadeError::Unsupported(format!(
                        "cascade chain through the positive-dimensional submanifold {}",
                        problem.submanifolds[s].name
                    )));
                }
                let mut partial = single_cascade(ctx, c1, &stops[0])?;
                for w in 0..stops.len() {
                    if partial.is_empty() {
                        continue 'chain;
                    }
                    let next = if w + 1 < stops.len() { &stops[w + 1] } else { c2 };
                    let link = single_cascade(ctx, &stops[w], next)?;
                    let mut joined = Vec::new();
                    for a in &partial {
                        for b in &link {
                            joined.push(join(a, b, &stops[w]));
                        }
                    }
                    partial = joined;
                }
                lines.extend(partial);
            }
            Ok(lines)
        }
    }
}

/// Flow lines with `m` cascades from `c₁` to `c₂`.
pub fn find_cascades(
    problem: &MorseBottProblem,
    c1: &CritPoint,
    c2: &CritPoint,
    m: usize,
    search: &SearchParams,
) -> Result<Vec<CascadeFlowLine>, CascadeError> {
    let ctx = Ctx { problem, search, used: AtomicUsize::new(0) };
    find_in(&ctx, c1, c2, m)
}

/// Largest number of cascades a line from `c₁` to `c₂` can have.
pub fn max_cascades(problem: &MorseBottProblem, c1: &CritPoint, c2: &CritPoint) -> usize {
    1 + levels_between(problem, c1, c2).len()
}

/// Symmetric positive definite `I + scale·S / ‖S‖_F` with `S` random symmetric.
pub fn perturbed_metric(dim: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = rng.gen_range(-1.0..1.0);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let n = s.norm();
    let s = if n > 0.0 { s / n } else { s };
    DMatrix::identity(dim, dim) + s * scale
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCount {
    pub from: String,
    pub to: String,
    pub value: u8,
    /// Unbroken isolated lines found for m = 0, 1, ...
    pub lines_by_m: Vec<usize>,
    pub broken: usize,
    /// 0 for the original metric, k for the k-th perturbed metric.
    pub attempt: usize,
    pub integrations: usize,
}

fn count_once(ctx: &Ctx, c1: &CritPoint, c2: &CritPoint) -> Result<(Vec<usize>, usize), CascadeError> {
    let mut by_m = Vec::new();
    let mut broken = 0;
    for m in 0..=max_cascades(ctx.problem, c1, c2) {
        let lines = find_in(ctx, c1, c2, m)?;
        if lines.iter().any(|l| l.sampled) {
            return Err(CascadeError::Unsupported("positive-dimensional family between generators of adjacent degree".into()));
        }
        broken += lines.iter().filter(|l| l.broken).count();
        by_m.push(lines.iter().filter(|l| !l.broken).count());
    }
    Ok((by_m, broken))
}

/// n(c₁, c₂): the number of cascade flow lines from `c₁` to `c₂`, summed over m, mod 2.
///
/// Non-transversal configurations trigger a retry with a perturbed ambient metric.
pub fn count_mod2(problem: &MorseBottProblem, c1: &CritPoint, c2: &CritPoint, search: &SearchParams) -> Result<PairCount, CascadeError> {
    if c1.ind() - c2.ind() != 1 {
        return Err(CascadeError::InvalidPair(format!(
            "Ind({}) - Ind({}) = {}, expected 1",
            c1.name,
            c2.name,
            c1.ind() - c2.ind()
        )));
    }
    let pair = format!("{} -> {}", c1.name, c2.name);
    let mut last = String::new();
    for attempt in 0..=search.max_retries {
        let perturbed;
        let p = if attempt == 0 {
            problem
        } else {
            let a = perturbed_metric(problem.manifold.ambient_dim, search.seed.wrapping_add(attempt as u64), search.perturbation);
            perturbed = problem.with_metric(a)?;
            &perturbed
        };
        let ctx = Ctx { problem: p, search, used: AtomicUsize::new(0) };
        match count_once(&ctx, c1, c2) {
            Ok((by_m, broken)) => {
                let total: usize = by_m.iter().sum();
                return Ok(PairCount {
                    from: c1.name.clone(),
                    to: c2.name.clone(),
                    value: (total % 2) as u8,
                    lines_by_m: by_m,
                    broken,
                    attempt,
                    integrations: ctx.used.load(Ordering::Relaxed),
                });
            }
            Err(CascadeError::NonTransversal { detail, .. }) => last = detail,
            Err(e) => return Err(e),
        }
    }
    Err(CascadeError::Untrusted { pair, attempts: search.max_retries + 1, detail: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::example;

    fn crit(p: &MorseBottProblem, name: &str) -> CritPoint {
        critical_points(p).into_iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn indices_on_s2_z2() {
        let p = example("s2-z2").unwrap();
        assert_eq!(crit(&p, "N").ind(), 2);
        assert_eq!(crit(&p, "s").ind(), 1);
        assert_eq!(crit(&p, "m").ind(), 0);
        assert_eq!(expected_moduli_dim(&crit(&p, "N"), &crit(&p, "s")), 0);
        assert_eq!(expected_moduli_dim(&crit(&p, "N"), &crit(&p, "m")), 1);
    }

    #[test]
    fn trichotomy_classes() {
        let p = example("s2-z2").unwrap();
        assert_eq!(classify_pair(&crit(&p, "s"), &crit(&p, "N")), PairClass::Empty);
        assert_eq!(classify_pair(&crit(&p, "s"), &crit(&p, "m")), PairClass::ZeroCascadesOnly);
        assert_eq!(classify_pair(&crit(&p, "N"), &crit(&p, "m")), PairClass::PositiveCascadesOnly);
    }

    #[test]
    fn neighbour_arc_wraps() {
        let p = example("s2-z2").unwrap();
        let (lo, hi) = neighbour_arc(&p, &crit(&p, "s")).unwrap();
        assert!((lo + 0.5).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
        let (lo, hi) = neighbour_arc(&p, &crit(&p, "m")).unwrap();
        assert!((lo - 0.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dwell_counts_interior_only() {
        let t = Trajectory {
            times: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            points: vec![vec![0.0]; 7],
            speed: vec![1e-5, 1.0, 1e-4, 1e-4, 1.0, 1e-6, 1e-7],
            limit: None,
        };
        assert_eq!(interior_dwell(&t, 1e-3), 1.0);
    }

    #[test]
    fn perturbed_metric_is_spd() {
        let a = perturbed_metric(4, 3, 1e-2);
        assert!((&a - a.transpose()).amax() == 0.0);
        let e = nalgebra::SymmetricEigen::new(a).eigenvalues;
        assert!(e.iter().all(|&l| l > 0.98 && l < 1.02));
    }
}
