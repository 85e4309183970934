use mbcascade::flow::{
    fit_decay, flow_on_critical_manifold, h_flow_param, integrate_flow, FlowParams, FIT_THRESHOLD,
};
use mbcascade::geometry::example;
use nalgebra::DVector;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn s2_height_converges_to_south_pole_with_hessian_rate() {
    let p = example("s2-height").unwrap();
    let e = 0.1f64;
    let t = integrate_flow(&p, &v(&[e.sin(), 0.0, e.cos()]), &FlowParams::default()).unwrap();
    let lim = t.limit.as_ref().expect("converges");
    assert_eq!(lim.submanifold, Some(1));
    assert!((lim.point[2] + 1.0).abs() < 1e-9);
    let hs = p.manifold.hessian_spectrum(p.f.as_ref(), &[0.0, 0.0, -1.0]).unwrap();
    let lam = hs.min_nonzero_abs(1e-6).unwrap();
    let fit = lim.fit.as_ref().expect("fit window");
    assert!(fit.passed);
    assert!((fit.delta - lam).abs() < 0.2 * lam, "delta {} vs {}", fit.delta, lam);
    // envelope holds on the window
    for (s, sp) in t.times.iter().zip(&t.speed) {
        if *s >= fit.window_start {
            assert!(*sp <= fit.c * (-fit.delta * s).exp() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn energy_is_monotone() {
    let p = example("t2-morse").unwrap();
    let a: f64 = 0.3;
    let b: f64 = 2.0;
    let x0 = v(&[a.cos(), a.sin(), b.cos(), b.sin()]);
    let t = integrate_flow(&p, &x0, &FlowParams::default()).unwrap();
    let f: Vec<f64> = t.points.iter().map(|x| p.f.value(x)).collect();
    for w in f.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let lim = t.limit.unwrap();
    let g = p.manifold.gradient(p.f.as_ref(), &lim.point).unwrap();
    assert!(g.norm() < 1e-6);
}

#[test]
fn quartic_decay_is_not_exponential() {
    let p = example("r1-x4").unwrap();
    let t = integrate_flow(&p, &v(&[1.0]), &FlowParams::default()).unwrap();
    assert!(t.limit.is_none(), "x^4 does not reach stop_speed within the horizon");
    let fit = fit_decay(&t).expect("enough window samples");
    assert!(fit.r_squared < FIT_THRESHOLD, "R^2 = {}", fit.r_squared);
    assert!(!fit.passed);
    // The algebraic law 1/sqrt(8s) is followed closely.
    let (s, x) = (*t.times.last().unwrap(), t.points.last().unwrap()[0]);
    assert!((x - 1.0 / (8.0 * s + 1.0).sqrt()).abs() < 1e-6);
}

#[test]
fn fixed_point_gives_constant_trajectory() {
    let p = example("s2-z2").unwrap();
    let t = integrate_flow(&p, &v(&[0.0, 0.0, 1.0]), &FlowParams::default()).unwrap();
    assert_eq!(t.len(), 1);
    let lim = t.limit.unwrap();
    assert_eq!(lim.point, vec![0.0, 0.0, 1.0]);
    assert!(lim.fit.is_none());
}

#[test]
fn model_example_decays_on_stable_set() {
    let p = example("model-x1sq-x2sq").unwrap();
    let t = integrate_flow(&p, &v(&[5.0, 1.0, 0.0]), &FlowParams::default()).unwrap();
    let lim = t.limit.unwrap();
    assert_eq!(lim.submanifold, Some(0));
    assert!((lim.point[0] - 5.0).abs() < 1e-12);
    let fit = lim.fit.unwrap();
    assert!((fit.delta - 2.0).abs() < 0.4);
}

#[test]
fn h_flow_identity_at_zero_and_limit_at_minimum() {
    let p = example("s1-flat").unwrap();
    assert_eq!(h_flow_param(&p, 0, 0.25, 0.0).unwrap(), 0.25);
    let th = h_flow_param(&p, 0, 0.25, 1e3).unwrap();
    assert!((th - 0.5).abs() < 1e-9);
}

/// Forward Euler with a tiny step on θ' = -h'(θ)/g₀ for h = cos 2πθ, g₀ = 4π².
fn euler_oracle(theta: f64, t: f64) -> f64 {
    let dt = 1e-4;
    let mut x = theta;
    let mut s = 0.0;
    while s < t {
        x += dt * (2.0 * std::f64::consts::PI * x).sin() / (2.0 * std::f64::consts::PI);
        s += dt;
    }
    x
}

#[test]
fn equator_h_flow_matches_brute_force() {
    let p = example("s2-z2").unwrap();
    let eq = 2;
    for &th in &[0.1, 0.3, 0.77, 0.95] {
        let ours = h_flow_param(&p, eq, th, 2.0).unwrap();
        let oracle = euler_oracle(th, 2.0).rem_euclid(1.0);
        assert!((ours - oracle).abs() < 1e-4, "{th}: {ours} vs {oracle}");
        let far = h_flow_param(&p, eq, th, 1e3).unwrap();
        assert!((far - 0.5).abs() < 1e-9);
        let x = flow_on_critical_manifold(&p, eq, &p.submanifolds[eq].point(&[th]), 1e3).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-9);
    }
}

#[test]
fn off_submanifold_point_rejected() {
    let p = example("s2-z2").unwrap();
    assert!(flow_on_critical_manifold(&p, 2, &v(&[0.0, 0.6, 0.8]), 1.0).is_err());
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let p = example("s2-height").unwrap();
    let t = integrate_flow(&p, &v(&[0.6, 0.0, 0.8]), &FlowParams::default()).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "s,x0,x1,x2,speed");
    assert_eq!(lines.count(), t.len());
}
