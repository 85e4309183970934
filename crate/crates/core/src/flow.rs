//! Gradient flow on embedded manifolds and the `h`-flow on critical submanifolds.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, ManifoldModel, MorseBottProblem, ScalarField};
use crate::tol::LEVEL_TOL;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("step size underflow at s = {s:.6e}")]
    StepUnderflow { s: f64 },
    #[error("point is not on submanifold {submanifold} (distance {distance:.3e})")]
    OffSubmanifold { submanifold: String, distance: f64 },
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
}

/// Direction of the flow: `ẏ = -grad f` or `ẏ = +grad f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowSense {
    Descending,
    Ascending,
}

impl FlowSense {
    fn sign(self) -> f64 {
        match self {
            FlowSense::Descending => -1.0,
            FlowSense::Ascending => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub horizon: f64,
    pub stop_speed: f64,
    /// Local error bound relative to the step's displacement.
    pub rtol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Distance within which a limit point is attributed to a critical submanifold.
    pub ident_tol: f64,
    pub record: bool,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            horizon: 1e3,
            stop_speed: 1e-9,
            rtol: 1e-8,
            h_init: 1e-3,
            h_min: 1e-14,
            max_steps: 2_000_000,
            ident_tol: 1e-5,
            record: true,
        }
    }
}

/// Least-squares fit of `log speed ≈ log c - δ s` on the tail of a trajectory.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DecayFit {
    pub delta: f64,
    /// Smallest constant with `speed ≤ c e^{-δ s}` on the fit window.
    pub c: f64,
    pub r_squared: f64,
    pub window: usize,
    pub window_start: f64,
    pub passed: bool,
}

pub const FIT_SPEED_CEILING: f64 = 1e-2;
pub const FIT_MIN_SAMPLES: usize = 20;
pub const FIT_THRESHOLD: f64 = 0.98;

#[derive(Clone, Debug, Serialize)]
pub struct Limit {
    pub submanifold: Option<usize>,
    pub point: Vec<f64>,
    pub fit: Option<DecayFit>,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub speed: Vec<f64>,
    pub limit: Option<Limit>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_point(&self) -> Option<DVector<f64>> {
        self.points.last().map(|p| DVector::from_column_slice(p))
    }

    /// CSV with columns `s, x0, ..., x{D-1}, speed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["s".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.push("speed".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, p), v) in self.times.iter().zip(&self.points).zip(&self.speed) {
            let mut row = vec![format!("{t:e}")];
            row.extend(p.iter().map(|x| format!("{x:e}")));
            row.push(format!("{v:e}"));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Adaptive RK4 with step doubling and projection back to the manifold.
///
/// The local error estimate is compared with the displacement of the step, so
/// near an exponentially attracting point steps stay roughly constant while for
/// algebraic decay they grow in proportion to `s`.
pub struct Stepper<'a> {
    m: &'a ManifoldModel,
    f: &'a dyn ScalarField,
    sign: f64,
    pub rtol: f64,
    pub h: f64,
    pub h_min: f64,
    pub s: f64,
    pub x: DVector<f64>,
    pub speed: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        m: &'a ManifoldModel,
        f: &'a dyn ScalarField,
        sense: FlowSense,
        x0: DVector<f64>,
        params: &FlowParams,
    ) -> Result<Self, FlowError> {
        m.check_on(x0.as_slice())?;
        let g = m.gradient_unchecked(f, x0.as_slice())?;
        let speed = m.norm(&g);
        Ok(Stepper { m, f, sign: sense.sign(), rtol: params.rtol, h: params.h_init, h_min: params.h_min, s: 0.0, x: x0, speed })
    }

    fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>, FlowError> {
        Ok(self.m.gradient_unchecked(self.f, x.as_slice())? * self.sign)
    }

    pub fn rk4(&self, x: &DVector<f64>, h: f64) -> Result<DVector<f64>, FlowError> {
        let k1 = self.field(x)?;
        let k2 = self.field(&(x + &k1 * (h / 2.0)))?;
        let k3 = self.field(&(x + &k2 * (h / 2.0)))?;
        let k4 = self.field(&(x + &k3 * h))?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    /// Single projected RK4 step of size `h` from `x`, without error control.
    pub fn plain_step(&self, x: &DVector<f64>, h: f64) -> Result<DVector<f64>, FlowError> {
        Ok(self.m.project(&self.rk4(x, h)?)?)
    }

    /// Advance by one accepted step, never past `s_max`. Returns the step taken.
    pub fn step(&mut self, s_max: f64) -> Result<f64, FlowError> {
        loop {
            let h = self.h.min(s_max - self.s);
            if h < self.h_min {
                if s_max - self.s <= self.h_min {
                    // Reached s_max up to rounding.
                    self.s = s_max;
                    return Ok(0.0);
                }
                return Err(FlowError::StepUnderflow { s: self.s });
            }
            let full = self.rk4(&self.x, h)?;
            let mid = self.rk4(&self.x, h / 2.0)?;
            let half = self.rk4(&mid, h / 2.0)?;
            let diff = &half - &full;
            let err = diff.norm() / 15.0;
            let disp = (&half - &self.x).norm();
            let bound = self.rtol * disp + 1e-300;
            if err <= bound {
                let y = self.m.project(&(half + diff / 15.0))?;
                let g = self.m.gradient_unchecked(self.f, y.as_slice())?;
                self.speed = self.m.norm(&g);
                self.x = y;
                self.s += h;
                let grow = if err == 0.0 { 4.0 } else { (0.9 * (bound / err).powf(0.2)).clamp(0.2, 4.0) };
                if h == self.h {
                    self.h *= grow;
                }
                return Ok(h);
            }
            self.h = h * (0.9 * (bound / err).powf(0.25)).clamp(0.1, 0.9);
        }
    }
}

fn push(traj: &mut Trajectory, s: f64, x: &DVector<f64>, v: f64) {
    traj.times.push(s);
    traj.points.push(x.as_slice().to_vec());
    traj.speed.push(v);
}

/// Integrate the flow of `∓grad f` from `x0` until the speed drops below
/// `stop_speed` or `s` exceeds the horizon.
pub fn integrate_sensed(
    problem: &MorseBottProblem,
    x0: &DVector<f64>,
    sense: FlowSense,
    params: &FlowParams,
) -> Result<Trajectory, FlowError> {
    let m = &problem.manifold;
    let mut st = Stepper::new(m, problem.f.as_ref(), sense, x0.clone(), params)?;
    let mut traj = Trajectory::default();
    push(&mut traj, 0.0, &st.x, st.speed);
    let mut steps = 0;
    while st.speed >= params.stop_speed && st.s < params.horizon && steps < params.max_steps {
        st.step(params.horizon)?;
        steps += 1;
        if params.record || st.speed < params.stop_speed {
            push(&mut traj, st.s, &st.x, st.speed);
        }
    }
    if st.speed < params.stop_speed {
        if !params.record && traj.times.last() != Some(&st.s) {
            push(&mut traj, st.s, &st.x, st.speed);
        }
        let sub = problem.locate(&st.x, params.ident_tol).map(|(i, _)| i);
        let fit = if traj.len() > 1 { fit_decay(&traj) } else { None };
        traj.limit = Some(Limit { submanifold: sub, point: st.x.as_slice().to_vec(), fit });
    }
    Ok(traj)
}

/// Negative gradient flow `ẏ = -grad f(y)`.
pub fn integrate_flow(problem: &MorseBottProblem, x0: &DVector<f64>, params: &FlowParams) -> Result<Trajectory, FlowError> {
    integrate_sensed(problem, x0, FlowSense::Descending, params)
}

/// Exponential-rate fit on the last half of the samples with speed below 1e-2.
pub fn fit_decay(traj: &Trajectory) -> Option<DecayFit> {
    let idx: Vec<usize> =
        (0..traj.len()).filter(|&i| traj.speed[i] < FIT_SPEED_CEILING && traj.speed[i] > 0.0).collect();
    let window = &idx[idx.len() / 2..];
    if window.len() < FIT_MIN_SAMPLES {
        return None;
    }
    let n = window.len() as f64;
    let s: Vec<f64> = window.iter().map(|&i| traj.times[i]).collect();
    let l: Vec<f64> = window.iter().map(|&i| traj.speed[i].ln()).collect();
    let sm = s.iter().sum::<f64>() / n;
    let lm = l.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|v| (v - sm).powi(2)).sum();
    let sxy: f64 = s.iter().zip(&l).map(|(a, b)| (a - sm) * (b - lm)).sum();
    let syy: f64 = l.iter().map(|v| (v - lm).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    let delta = -slope;
    let log_c = s.iter().zip(&l).map(|(si, li)| li + delta * si).fold(f64::NEG_INFINITY, f64::max);
    Some(DecayFit {
        delta,
        c: log_c.exp(),
        r_squared,
        window: window.len(),
        window_start: s[0],
        passed: r_squared >= FIT_THRESHOLD && delta > 0.0,
    })
}

/// Result of flowing until a level set of `f` is crossed.
#[derive(Clone, Debug)]
pub struct LevelHit {
    pub point: DVector<f64>,
    pub time: f64,
    pub trajectory: Option<Trajectory>,
}

/// Flow from `x0` until `f` reaches `level` (from above when descending, from
/// below when ascending). `None` if the flow converges or times out first.
pub fn flow_to_level(
    problem: &MorseBottProblem,
    x0: &DVector<f64>,
    sense: FlowSense,
    level: f64,
    params: &FlowParams,
) -> Result<Option<LevelHit>, FlowError> {
    let m = &problem.manifold;
    let f = problem.f.as_ref();
    let side = |x: &DVector<f64>| -> f64 {
        let v = f.value(x.as_slice()) - level;
        match sense {
            FlowSense::Descending => v,
            FlowSense::Ascending => -v,
        }
    };
    let mut st = Stepper::new(m, f, sense, x0.clone(), params)?;
    if side(&st.x) <= 0.0 {
        return Ok(None);
    }
    let mut traj = params.record.then(Trajectory::default);
    if let Some(t) = traj.as_mut() {
        push(t, 0.0, &st.x, st.speed);
    }
    let mut steps = 0;
    while st.speed >= params.stop_speed && st.s < params.horizon && steps < params.max_steps {
        let x_prev = st.x.clone();
        let s_prev = st.s;
        let h = st.step(params.horizon)?;
        steps += 1;
        if side(&st.x) > 0.0 {
            if let Some(t) = traj.as_mut() {
                push(t, st.s, &st.x, st.speed);
            }
            continue;
        }
        // Crossing inside (s_prev, s_prev + h]: bisect on the length of a fresh step.
        let (mut lo, mut hi) = (0.0, h);
        let mut best = st.x.clone();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let y = st.plain_step(&x_prev, mid)?;
            let v = side(&y);
            best = y;
            if v.abs() <= 1e-15 * (1.0 + level.abs()) || hi - lo < 1e-15 * (1.0 + hi) {
                lo = mid;
                hi = mid;
                break;
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let time = s_prev + 0.5 * (lo + hi);
        let g = m.gradient_unchecked(f, best.as_slice())?;
        if let Some(t) = traj.as_mut() {
            push(t, time, &best, m.norm(&g));
        }
        return Ok(Some(LevelHit { point: best, time, trajectory: traj }));
    }
    Ok(None)
}

fn sub_h_velocity(problem: &MorseBottProblem, sub: usize, th: f64) -> f64 {
    problem.submanifolds[sub].h_flow_velocity(&problem.manifold, &[th])
}

/// Time-`t` image of parameter `theta` under the negative `h`-gradient flow on
/// a one-dimensional critical submanifold.
pub fn h_flow_param(problem: &MorseBottProblem, sub: usize, theta: f64, t: f64) -> Result<f64, FlowError> {
    if t < 0.0 || t.is_nan() {
        return Err(FlowError::NegativeDuration(t));
    }
    let s = &problem.submanifolds[sub];
    if s.dim() == 0 || t == 0.0 {
        return Ok(theta);
    }
    let rk4 = |x: f64, h: f64| {
        let k1 = sub_h_velocity(problem, sub, x);
        let k2 = sub_h_velocity(problem, sub, x + h / 2.0 * k1);
        let k3 = sub_h_velocity(problem, sub, x + h / 2.0 * k2);
        let k4 = sub_h_velocity(problem, sub, x + h * k3);
        x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let (mut x, mut s_now, mut h) = (theta, 0.0f64, 1e-3f64);
    let mut steps = 0usize;
    while s_now < t && steps < 10_000_000 {
        steps += 1;
        let hh = h.min(t - s_now);
        let full = rk4(x, hh);
        let half = rk4(rk4(x, hh / 2.0), hh / 2.0);
        let err = (half - full).abs() / 15.0;
        let bound = 1e-10 * (half - x).abs() + 1e-300;
        if err <= bound {
            x = half + (half - full) / 15.0;
            s_now += hh;
            if hh == h {
                h *= if err == 0.0 { 4.0 } else { (0.9 * (bound / err).powf(0.2)).clamp(0.2, 4.0) };
            }
            if sub_h_velocity(problem, sub, x) == 0.0 {
                break;
            }
        } else {
            h = hh * (0.9 * (bound / err).powf(0.25)).clamp(0.1, 0.9);
            if h < 1e-15 {
                return Err(FlowError::StepUnderflow { s: s_now });
            }
        }
    }
    if s.param.is_periodic() {
        x = x.rem_euclid(1.0);
    }
    Ok(x)
}

/// Time-`t` image of `p` under the negative gradient flow of `h` with respect to
/// `g₀` on submanifold `sub`.
pub fn flow_on_critical_manifold(
    problem: &MorseBottProblem,
    sub: usize,
    p: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, FlowError> {
    let s = &problem.submanifolds[sub];
    let (param, dist) = s.param.closest(p);
    if dist > 1e-8 {
        return Err(FlowError::OffSubmanifold { submanifold: s.name.clone(), distance: dist });
    }
    if s.dim() == 0 {
        return Ok(s.point(&param));
    }
    let th = h_flow_param(problem, sub, param[0], t)?;
    Ok(s.point(&[th]))
}

/// True when `a` and `b` are equal critical values up to [`LEVEL_TOL`].
pub fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_TOL * (1.0 + a.abs().max(b.abs()))
}
