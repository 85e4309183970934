use mbcascade::cascades::*;
use mbcascade::geometry::{example, MorseBottProblem, REGISTRY};

fn crit(p: &MorseBottProblem, name: &str) -> CritPoint {
    critical_points(p).into_iter().find(|c| c.name == name).unwrap()
}

fn total(p: &MorseBottProblem, a: &str, b: &str, s: &SearchParams) -> Vec<usize> {
    count_mod2(p, &crit(p, a), &crit(p, b), s).unwrap().lines_by_m
}

// Landing azimuth on the equator of the descending z² gradient line that leaves the north pole
// at azimuth φ, integrated in ambient coordinates with a fixed-step RK4.
fn oracle_landing_azimuth(phi: f64) -> f64 {
    let eps = 1e-4f64;
    let mut x = [eps * phi.cos(), eps * phi.sin(), (1.0 - eps * eps).sqrt()];
    let v = |x: &[f64; 3]| {
        let z = x[2];
        [2.0 * z * z * x[0], 2.0 * z * z * x[1], 2.0 * z * z * x[2] - 2.0 * z]
    };
    let h = 1e-2;
    while x[2] > 1e-4 {
        let add = |a: &[f64; 3], b: &[f64; 3], t: f64| [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]];
        let k1 = v(&x);
        let k2 = v(&add(&x, &k1, 0.5 * h));
        let k3 = v(&add(&x, &k2, 0.5 * h));
        let k4 = v(&add(&x, &k3, h));
        for i in 0..3 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x[1].atan2(x[0])
}

#[test]
fn pole_to_saddle_single_line_matches_shooting_oracle() {
    let p = example("s2-z2").unwrap();
    let s = SearchParams::default();
    let lines = find_cascades(&p, &crit(&p, "N"), &crit(&p, "s"), 1, &s).unwrap();
    assert_eq!(lines.len(), 1);
    let l = &lines[0];
    assert!(!l.broken && !l.sampled);
    assert!(l.chaining_residual < s.match_tol, "{}", l.chaining_residual);

    // Dense shooting over the circle of descent directions: count launch azimuths whose landing is the saddle.
    let n = 3600;
    let mut roots = Vec::new();
    for i in 0..n {
        let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let b = 2.0 * std::f64::consts::PI * (i + 1) as f64 / n as f64;
        let (ya, yb) = (oracle_landing_azimuth(a).sin(), oracle_landing_azimuth(b).sin());
        if ya == 0.0 && oracle_landing_azimuth(a).cos() > 0.0 {
            roots.push(a);
        } else if ya * yb < 0.0 && oracle_landing_azimuth(0.5 * (a + b)).cos() > 0.0 {
            roots.push(0.5 * (a + b));
        }
    }
    assert_eq!(roots.len(), 1);

    // The returned cascade leaves the pole at the oracle azimuth and keeps it.
    let c = &l.cascades[0];
    for x in c.points.iter().skip(1) {
        let az = x[1].atan2(x[0]);
        assert!((az - roots[0]).abs() < 1e-3 || (az - roots[0]).abs() > 2.0 * std::f64::consts::PI - 1e-3, "azimuth {az}");
    }
    let end = c.points.last().unwrap();
    let dist = ((end[0] - 1.0).powi(2) + end[1].powi(2) + end[2].powi(2)).sqrt();
    assert!(dist < 1e-3, "cascade ends {dist} from the saddle");
}

#[test]
fn s2_z2_counts() {
    let p = example("s2-z2").unwrap();
    let s = SearchParams::default();
    for (a, b, v) in [("N", "s", 1), ("S", "s", 1), ("s", "m", 0)] {
        let c = count_mod2(&p, &crit(&p, a), &crit(&p, b), &s).unwrap();
        assert_eq!(c.value, v, "{a} -> {b}: {c:?}");
        assert_eq!(c.broken, 0);
    }
    assert_eq!(total(&p, "s", "m", &s), vec![2, 0]);
}

#[test]
fn circle_arcs() {
    let p = example("s1-flat").unwrap();
    let s = SearchParams::default();
    let lines = find_cascades(&p, &crit(&p, "max"), &crit(&p, "min"), 0, &s).unwrap();
    assert_eq!(lines.len(), 2);
    for l in &lines {
        assert!(l.cascades.is_empty() && l.h_line.is_some());
        assert!(l.chaining_residual < s.match_tol);
    }
    // The two arcs leave the top in opposite directions.
    let first = |l: &CascadeFlowLine| l.h_line.as_ref().unwrap().points[1].clone();
    let (a, b) = (first(&lines[0]), first(&lines[1]));
    assert!(a[0] * b[0] < 0.0 || a[1] * b[1] < 0.0);
}

#[test]
fn upward_pairs_are_empty() {
    let p = example("s2-z2").unwrap();
    let s = SearchParams::default();
    for m in 0..=2 {
        assert!(find_cascades(&p, &crit(&p, "s"), &crit(&p, "N"), m, &s).unwrap().is_empty());
    }
}

#[test]
fn torus_counts_are_even() {
    let s = SearchParams::default();
    for name in ["t2-cos", "t2-morse"] {
        let p = example(name).unwrap();
        let cs = critical_points(&p);
        for a in &cs {
            for b in &cs {
                if a.ind() - b.ind() == 1 {
                    let c = count_mod2(&p, a, b, &s).unwrap();
                    assert_eq!(c.value, 0, "{name} {} -> {}: {c:?}", a.name, b.name);
                    assert_eq!(c.lines_by_m.iter().sum::<usize>() % 2, 0);
                }
            }
        }
    }
}

#[test]
fn timeshift_invariance() {
    let p = example("s2-z2").unwrap();
    let base = SearchParams::default();
    let shifted = SearchParams { launch_eps: 3e-7, open_launch: 3e-3, ..SearchParams::default() };
    for (a, b) in [("N", "s"), ("S", "s"), ("s", "m")] {
        assert_eq!(total(&p, a, b, &base), total(&p, a, b, &shifted), "{a} -> {b}");
    }
    let t = example("t2-morse").unwrap();
    assert_eq!(total(&t, "max", "saddle-a", &base), total(&t, "max", "saddle-a", &shifted));
}

#[test]
fn counts_stable_under_metric_perturbation() {
    let s = SearchParams::default();
    for seed in [1, 2] {
        let p = example("s2-z2").unwrap().with_metric(perturbed_metric(3, seed, 1e-2)).unwrap();
        for (a, b, v) in [("N", "s", 1), ("S", "s", 1), ("s", "m", 0)] {
            assert_eq!(count_mod2(&p, &crit(&p, a), &crit(&p, b), &s).unwrap().value, v, "seed {seed} {a} -> {b}");
        }
    }
}

#[test]
fn negative_dimension_has_no_solutions() {
    let p = example("t2-cos").unwrap();
    let s = SearchParams::default();
    let (a, b) = (crit(&p, "top-min"), crit(&p, "bottom-max"));
    assert_eq!(expected_moduli_dim(&a, &b), -1);
    for m in 0..=max_cascades(&p, &a, &b) {
        assert!(find_cascades(&p, &a, &b, m, &s).unwrap().is_empty(), "m={m}");
    }
}

#[test]
fn trichotomy_scan() {
    let s = SearchParams::default();
    for name in ["s2-height", "s2-z2", "t2-cos", "t2-morse", "s1-flat"] {
        let p = example(name).unwrap();
        let cs = critical_points(&p);
        for a in &cs {
            for b in &cs {
                let class = classify_pair(a, b);
                for m in 0..=max_cascades(&p, a, b) {
                    let n = match find_cascades(&p, a, b, m, &s) {
                        Ok(l) => l.len(),
                        Err(CascadeError::Unsupported(_)) => continue,
                        Err(e) => panic!("{name} {} -> {}: {e}", a.name, b.name),
                    };
                    let ok = match class {
                        PairClass::Empty => n == 0,
                        PairClass::ZeroCascadesOnly => m == 0 || n == 0,
                        PairClass::PositiveCascadesOnly => m > 0 || n == 0,
                    };
                    assert!(ok, "{name} {} -> {} m={m}: {n} lines in class {class:?}", a.name, b.name);
                }
            }
        }
    }
    assert!(REGISTRY.contains(&"s2-z2"));
}

#[test]
fn lines_have_no_interior_dwell() {
    let p = example("s2-height").unwrap();
    let s = SearchParams::default();
    let lines = find_cascades(&p, &crit(&p, "N"), &crit(&p, "S"), 1, &s).unwrap();
    assert!(!lines.is_empty());
    for l in &lines {
        assert!(l.dwell < s.dwell_threshold && !l.broken);
    }
}

#[test]
fn invalid_pair_and_budget() {
    let p = example("s2-z2").unwrap();
    let s = SearchParams::default();
    assert!(matches!(count_mod2(&p, &crit(&p, "N"), &crit(&p, "m"), &s), Err(CascadeError::InvalidPair(_))));
    let tiny = SearchParams { budget: 3, ..SearchParams::default() };
    assert!(matches!(count_mod2(&p, &crit(&p, "N"), &crit(&p, "s"), &tiny), Err(CascadeError::BudgetExhausted { .. })));
}

#[test]
fn csv_export() {
    let p = example("s2-z2").unwrap();
    let lines = find_cascades(&p, &crit(&p, "N"), &crit(&p, "s"), 1, &SearchParams::default()).unwrap();
    let mut buf = Vec::new();
    lines[0].write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "segment,s,x0,x1,x2,speed");
    let n = rows.filter(|r| r.split(',').count() == 6).count();
    assert!(n > 10);
}
