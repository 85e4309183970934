use std::fmt::Write as _;
use std::path::PathBuf;

use mbcascade::cascades::{critical_points, find_cascades, max_cascades, CascadeError, CascadeFlowLine, CritPoint, SearchParams};
use mbcascade::flow::{integrate_flow, FlowParams};
use mbcascade::geometry::{example, MorseBottProblem};
use mbcascade::homology::{build_complex_with_counts, HomologyError};
use mbcascade::involutions::{claimed_spectrum, verify_involutions, verify_lemma, InvolutionError, PathGrid};
use mbcascade::momentmap::{action, check_h2, identity_suite, LinearGroupAction, MomentError};
use mbcascade::novikov::selftest;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig, DEFAULT_SEED};
use crate::{CliError, Common};

pub const SCHEMA: &str = "1";

/// Result of one subcommand: the machine report, its CSV rendering and a short summary.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub report: Value,
    pub csv: String,
}

pub struct Context {
    pub seed: u64,
    pub format: Format,
    out: Option<PathBuf>,
    budget: Option<usize>,
    tol_match: Option<f64>,
    tol_refine: Option<f64>,
    tol_dedup: Option<f64>,
    tol_residual: f64,
    tol_spectrum: f64,
    tol_identity: f64,
    cfg: RunConfig,
}

impl Context {
    pub fn new(c: &Common, cfg: RunConfig) -> Self {
        Context {
            seed: c.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            format: c.format.or(cfg.format).unwrap_or(Format::Json),
            out: c.out.clone().or_else(|| cfg.out.clone()),
            budget: c.budget.or(cfg.budget),
            tol_match: c.tol_match.or(cfg.tol.match_tol),
            tol_refine: c.tol_refine.or(cfg.tol.refine),
            tol_dedup: c.tol_dedup.or(cfg.tol.dedup),
            tol_residual: c.tol_residual.or(cfg.tol.residual).unwrap_or(1e-9),
            tol_spectrum: c.tol_spectrum.or(cfg.tol.spectrum).unwrap_or(1e-8),
            tol_identity: c.tol_identity.or(cfg.tol.identity).unwrap_or(1e-6),
            cfg,
        }
    }

    fn search(&self) -> SearchParams {
        let mut s = self.cfg.search.clone().unwrap_or_default();
        s.seed = self.seed;
        if let Some(b) = self.budget {
            s.budget = b;
        }
        if let Some(t) = self.tol_match {
            s.match_tol = t;
        }
        if let Some(t) = self.tol_refine {
            s.refine_tol = t;
        }
        if let Some(t) = self.tol_dedup {
            s.dedup_radius = t;
        }
        s
    }

    fn problem(&self, name: Option<String>) -> Result<MorseBottProblem, CliError> {
        if let Some(n) = name.or_else(|| self.cfg.example.clone()) {
            return example(&n).map_err(|e| CliError::Invalid(e.to_string()));
        }
        match &self.cfg.problem {
            Some(spec) => spec.build().map_err(|e| CliError::Invalid(format!("invalid problem: {e}"))),
            None => Err(CliError::Invalid("no example given (pass a name or a config with `example` or `problem`)".into())),
        }
    }

    /// Writes the report file and prints the summary.
    pub fn emit(&self, command: &str, o: &Outcome) -> Result<(), CliError> {
        let ext = match self.format {
            Format::Json => "json",
            Format::Csv => "csv",
        };
        let path = self.out.clone().unwrap_or_else(|| PathBuf::from(format!("{command}.{ext}")));
        let body = match self.format {
            Format::Json => {
                let mut v = o.report.clone();
                if let Value::Object(m) = &mut v {
                    m.insert("schema".into(), Value::String(SCHEMA.into()));
                    m.insert("command".into(), Value::String(command.into()));
                    m.insert("passed".into(), Value::Bool(o.passed));
                }
                let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Untrusted(e.to_string()))?;
                s.push('\n');
                s
            }
            Format::Csv => o.csv.clone(),
        };
        std::fs::write(&path, body).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
        print!("{}", o.summary);
        println!("{}: report written to {}", if o.passed { "PASS" } else { "FAIL" }, path.display());
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn homology(ctx: &Context, name: Option<String>) -> Result<Outcome, CliError> {
    let problem = ctx.problem(name)?;
    let search = ctx.search();
    let (cx, counts) = build_complex_with_counts(&problem, &search).map_err(|e| match e {
        HomologyError::NotMorseBott(_) | HomologyError::NotCompact => CliError::Invalid(e.to_string()),
        _ => CliError::Untrusted(e.to_string()),
    })?;
    let rep = cx.to_report();
    let passed = rep.d_squared_ok && rep.betti.is_some();
    let mut summary = format!("homology of {} (seed {})\n", problem.name, ctx.seed);
    let mut csv = String::from("degree,generators,betti\n");
    for (i, d) in rep.degrees.iter().enumerate() {
        let g: Vec<&str> = rep.generators.iter().filter(|g| g.degree == *d).map(|g| g.name.as_str()).collect();
        let b = rep.betti.as_ref().and_then(|b| b.get(i).copied());
        let bs = b.map_or("?".to_string(), |b| b.to_string());
        let _ = writeln!(summary, "  degree {d}: generators [{}], betti {bs}", g.join(", "));
        let _ = writeln!(csv, "{d},{},{bs}", g.join(" "));
    }
    let _ = writeln!(summary, "  euler {}, d^2 = 0: {}", rep.euler, rep.d_squared_ok);
    let mut report = to_value(&rep);
    report["example"] = json!(problem.name);
    report["seed"] = json!(ctx.seed);
    report["counts"] = to_value(&counts);
    Ok(Outcome { passed, summary, report, csv })
}

fn involution_error(e: InvolutionError) -> CliError {
    match e {
        InvolutionError::NonPositiveEigenvalue { .. } | InvolutionError::GridMismatch(_) => CliError::Untrusted(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

pub fn involutions(ctx: &Context, kmax: Option<usize>, grid: Option<usize>, dim: Option<usize>) -> Result<Outcome, CliError> {
    let kmax = kmax.or(ctx.cfg.kmax).unwrap_or(3);
    let samples = grid.or(ctx.cfg.grid).unwrap_or(64);
    let n = dim.or(ctx.cfg.dim).unwrap_or(1);
    let g = PathGrid::new(n, samples).map_err(involution_error)?;
    if kmax == 0 {
        return Err(CliError::Invalid("kmax must be at least 1".into()));
    }
    if !g.admits(kmax) {
        return Err(involution_error(InvolutionError::NotAdmissible { samples, k: kmax }));
    }
    let lemma = verify_lemma(&g, kmax).map_err(involution_error)?;
    let inv = verify_involutions(&g, kmax).map_err(involution_error)?;

    let mut rows: Vec<(String, String, f64, f64)> = Vec::new();
    let mut push = |group: &str, what: String, value: f64, threshold: f64| rows.push((group.to_string(), what, value, threshold));
    for l in &lemma.lk {
        push("lk", format!("L{} leaves E-1", l.k), l.leaves_minus, ctx.tol_residual);
        push("lk", format!("L{} anticommutes with I1", l.k), l.anticommutes_i1, ctx.tol_residual);
        if let Some(e) = l.spectrum_error {
            push("spectrum", format!("L{}^2 spectrum", l.k), e, ctx.tol_spectrum);
        }
    }
    for r in lemma.commutators.iter().chain(&lemma.recursion) {
        push("lemma", r.what.clone(), r.residual, ctx.tol_residual);
    }
    for (group, list) in [
        ("involutive", &inv.involutive),
        ("self_adjoint", &inv.self_adjoint),
        ("commutator", &inv.commutators),
        ("hd_identity", &inv.hd_identity),
        ("eigenvalues", &inv.eigenvalues_pm_one),
    ] {
        for r in list {
            push(group, r.what.clone(), r.residual, ctx.tol_residual);
        }
    }
    let residuals_ok = rows.iter().all(|(_, _, v, t)| v < t);
    let injective = lemma.lk.iter().all(|l| l.sigma_min > 0.0 && l.min_eigenvalue > 0.0);
    let det_nonzero = lemma.determinants.iter().all(|d| d.abs_det > 0.0);
    let passed = residuals_ok && injective && det_nonzero;

    let mut summary = format!("involutions on {samples} samples, n = {n}, k <= {kmax}\n");
    for l in &lemma.lk {
        let spec: Vec<String> = l.spectrum.iter().map(|v| format!("{v:.10}")).collect();
        let _ = writeln!(summary, "  L{}^2 spectrum on E-1: [{}]", l.k, spec.join(", "));
        if let Some(c) = claimed_spectrum(l.k) {
            let _ = writeln!(summary, "    closed form error {:.2e} ({} values)", l.spectrum_error.unwrap_or(f64::NAN), c.len());
        }
    }
    let worst = rows.iter().filter(|r| r.0 != "spectrum").map(|r| r.2).fold(0.0, f64::max);
    let _ = writeln!(summary, "  {} residuals, max {worst:.2e}", rows.len());
    for k in 1..=kmax {
        let ds: Vec<&_> = lemma.determinants.iter().filter(|d| d.k == k).collect();
        if let Some(d) = ds.first() {
            let all = ds.iter().all(|d| d.matches_claim);
            let _ = writeln!(summary, "  |det A(t)| for k = {k}: {} (claimed {}, {})", d.abs_det, d.claimed, if all { "matches" } else { "differs" });
        }
    }

    let mut csv = String::from("group,check,residual,threshold,passed\n");
    for (g, w, v, t) in &rows {
        let _ = writeln!(csv, "{g},\"{w}\",{v:e},{t:e},{}", v < t);
    }
    let report = json!({
        "grid": to_value(&g),
        "kmax": kmax,
        "thresholds": { "residual": ctx.tol_residual, "spectrum": ctx.tol_spectrum },
        "lemma": to_value(&lemma),
        "involutions": to_value(&inv),
        "checks": {
            "residuals_below_threshold": residuals_ok,
            "lk_injective": injective,
            "determinants_nonzero": det_nonzero,
            "determinants_match_claim": lemma.determinants.iter().all(|d| d.matches_claim),
        },
    });
    Ok(Outcome { passed, summary, report, csv })
}

pub fn novikov_selftest(ctx: &Context, count: Option<usize>) -> Result<Outcome, CliError> {
    let count = count.or(ctx.cfg.count).unwrap_or(100);
    let r = selftest(ctx.seed, count);
    let summary = format!(
        "novikov selftest (seed {}): {}/{} inversions, {}/{} graded products, {}/{} additivity pairs\n",
        ctx.seed,
        r.inversions - r.inversion_failures,
        r.inversions,
        r.grading_products - r.grading_failures,
        r.grading_products,
        r.additivity_pairs - r.additivity_failures,
        r.additivity_pairs,
    );
    let csv = format!(
        "check,total,failures\ninversion,{},{}\ngrading,{},{}\nadditivity,{},{}\n",
        r.inversions, r.inversion_failures, r.grading_products, r.grading_failures, r.additivity_pairs, r.additivity_failures
    );
    Ok(Outcome { passed: r.passed, summary, report: to_value(&r), csv })
}

fn moment_error(e: MomentError) -> CliError {
    CliError::Invalid(e.to_string())
}

pub fn moment(ctx: &Context, name: Option<String>, tau: Option<f64>, samples: Option<usize>, points: Option<usize>) -> Result<Outcome, CliError> {
    let tau = tau.or(ctx.cfg.tau);
    let a: LinearGroupAction = match (name, &ctx.cfg.action) {
        (Some(n), _) => action(&n, tau).map_err(moment_error)?,
        (None, Some(spec)) => {
            if tau.is_some() {
                return Err(CliError::Invalid("--tau applies only to built-in actions".into()));
            }
            spec.build().map_err(moment_error)?
        }
        (None, None) => return Err(CliError::Invalid("no action given".into())),
    };
    let samples = samples.or(ctx.cfg.samples).unwrap_or(16);
    let id = identity_suite(&a, points.unwrap_or(20), ctx.seed).map_err(moment_error)?;
    let h2 = check_h2(&a, samples, ctx.seed).map_err(moment_error)?;
    let identity_ok = id.max_residual < ctx.tol_identity;
    let passed = identity_ok && h2.passed;
    let summary = format!(
        "moment map of {} (seed {})\n  identity: {} points, max residual {:.2e} (threshold {:.0e})\n  zero level: {}/{} starts converged, regular {}, free {}{}\n  quotient dimension {}\n",
        a.name,
        ctx.seed,
        id.points,
        id.max_residual,
        ctx.tol_identity,
        h2.converged,
        h2.samples,
        h2.regular,
        h2.free,
        if h2.inconclusive { " (inconclusive)" } else { "" },
        h2.quotient_dim,
    );
    let mut csv = String::from("point,moment_residual,min_singular_dmu,min_singular_orbit,min_orbit_displacement,regular,free\n");
    for (i, p) in h2.points.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{:e},{:e},{:e},{:e},{},{}",
            p.moment_residual, p.min_singular_dmu, p.min_singular_orbit, p.min_orbit_displacement, p.regular, p.free
        );
    }
    let report = json!({
        "action": a.name,
        "seed": ctx.seed,
        "identity": to_value(&id),
        "identity_threshold": ctx.tol_identity,
        "identity_passed": identity_ok,
        "h2": to_value(&h2),
    });
    Ok(Outcome { passed, summary, report, csv })
}

pub fn flow(ctx: &Context, name: Option<String>, start: Vec<f64>) -> Result<Outcome, CliError> {
    let problem = ctx.problem(name)?;
    let dim = problem.manifold.ambient_dim;
    if start.len() != dim {
        return Err(CliError::Invalid(format!("--start needs {dim} coordinates, got {}", start.len())));
    }
    let x0 = DVector::from_vec(start);
    let params = FlowParams::default();
    let traj = integrate_flow(&problem, &x0, &params).map_err(|e| CliError::Untrusted(e.to_string()))?;
    let limit = traj.limit.clone();
    let located = limit.as_ref().and_then(|l| l.submanifold);
    let fit_ok = limit.as_ref().and_then(|l| l.fit.as_ref()).is_some_and(|f| f.passed);
    let passed = located.is_some() && fit_ok;
    let mut summary = format!("flow on {} from {:?}: {} samples\n", problem.name, x0.as_slice(), traj.len());
    match &limit {
        Some(l) => {
            let sub = located.map_or("none".to_string(), |i| problem.submanifolds[i].name.clone());
            let _ = writeln!(summary, "  limit {:?} on critical submanifold {sub}", l.point);
            if let Some(f) = &l.fit {
                let _ = writeln!(summary, "  decay rate {:.6}, R^2 {:.4}", f.delta, f.r_squared);
            }
        }
        None => summary.push_str("  no limit reached\n"),
    }
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = json!({
        "example": problem.name,
        "start": x0.as_slice(),
        "samples": traj.len(),
        "final_time": traj.times.last(),
        "final_point": traj.points.last(),
        "final_speed": traj.speed.last(),
        "limit": to_value(&limit),
        "converged": located.is_some(),
        "decay_fit_passed": fit_ok,
    });
    Ok(Outcome { passed, summary, report, csv: String::from_utf8_lossy(&buf).into_owned() })
}

fn cascade_error(e: CascadeError) -> CliError {
    match e {
        CascadeError::InvalidPair(_) | CascadeError::Unsupported(_) => CliError::Invalid(e.to_string()),
        _ => CliError::Untrusted(e.to_string()),
    }
}

fn find_point(cs: &[CritPoint], name: &str) -> Result<CritPoint, CliError> {
    cs.iter().find(|c| c.name == name).cloned().ok_or_else(|| {
        let names: Vec<&str> = cs.iter().map(|c| c.name.as_str()).collect();
        CliError::Invalid(format!("unknown critical point {name}; available: {}", names.join(", ")))
    })
}

fn line_summary(l: &CascadeFlowLine) -> Value {
    json!({
        "m": l.m,
        "times": l.times,
        "source_witness": l.source_witness,
        "target_witness": l.target_witness,
        "intermediates": l.intermediates,
        "shooting": l.shooting,
        "chaining_residual": l.chaining_residual,
        "dwell": l.dwell,
        "broken": l.broken,
        "sampled": l.sampled,
        "segment_samples": l.cascades.iter().map(|c| c.len()).collect::<Vec<_>>(),
    })
}

pub fn cascades(ctx: &Context, name: Option<String>, from: &str, to: &str, m: Option<usize>) -> Result<Outcome, CliError> {
    let problem = ctx.problem(name)?;
    let cs = critical_points(&problem);
    let c1 = find_point(&cs, from)?;
    let c2 = find_point(&cs, to)?;
    let mut search = ctx.search();
    search.flow.record = true;
    let ms: Vec<usize> = match m {
        Some(m) => vec![m],
        None => (0..=max_cascades(&problem, &c1, &c2)).collect(),
    };
    let mut lines = Vec::new();
    for &m in &ms {
        lines.extend(find_cascades(&problem, &c1, &c2, m, &search).map_err(cascade_error)?);
    }
    let mut summary = format!("cascades on {} from {} to {} (seed {})\n", problem.name, c1.name, c2.name, ctx.seed);
    for &m in &ms {
        let here: Vec<&CascadeFlowLine> = lines.iter().filter(|l| l.m == m).collect();
        let broken = here.iter().filter(|l| l.broken).count();
        let sampled = here.iter().filter(|l| l.sampled).count();
        let _ = writeln!(summary, "  m = {m}: {} lines ({broken} broken, {sampled} family samples)", here.len());
    }
    let mut csv = String::new();
    for (i, l) in lines.iter().enumerate() {
        let mut buf = Vec::new();
        l.write_csv(&mut buf).map_err(|e| CliError::Invalid(e.to_string()))?;
        for (j, row) in String::from_utf8_lossy(&buf).lines().enumerate() {
            if j == 0 {
                if i == 0 {
                    let _ = writeln!(csv, "line,{row}");
                }
            } else {
                let _ = writeln!(csv, "{i},{row}");
            }
        }
    }
    let report = json!({
        "example": problem.name,
        "from": to_value(&c1),
        "to": to_value(&c2),
        "seed": ctx.seed,
        "m": ms,
        "lines": lines.iter().map(line_summary).collect::<Vec<_>>(),
    });
    Ok(Outcome { passed: true, summary, report, csv })
}
