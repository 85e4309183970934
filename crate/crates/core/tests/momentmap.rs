use mbcascade::momentmap::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_z(rng: &mut ChaCha8Rng, n: usize) -> DVector<C64> {
    DVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

#[test]
fn identity_holds_for_builtin_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ACTIONS {
        let a = action(name, None).unwrap();
        for _ in 0..20 {
            let z = rand_z(&mut rng, a.space_dim());
            let xi: Vec<f64> = (0..a.group_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = verify_moment_identity(&a, &z, &xi).unwrap();
            assert!(r < 1e-6, "{name}: {r}");
        }
        let z = rand_z(&mut rng, a.space_dim());
        assert_eq!(verify_moment_identity(&a, &z, &vec![0.0; a.group_dim()]).unwrap(), 0.0);
    }
}

#[test]
fn identity_fails_with_the_opposite_orientation() {
    // Flipping the sign of μ must break the identity, so the check is not vacuous.
    let a = action("s1-c2", None).unwrap();
    let z = DVector::from_vec(vec![C64::new(0.3, -0.2), C64::new(0.5, 0.7)]);
    let h = 1e-5;
    let xi = [1.0];
    let x = a.vector_field(&z, &xi);
    let mut worst = 0.0f64;
    for d in 0..4 {
        let mut v = DVector::<C64>::zeros(2);
        v[d % 2] = if d < 2 { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
        let f = |w: &DVector<C64>| -a.moment(w).unwrap()[0] * a.gram()[(0, 0)];
        let fd = (f(&(&z + &v * C64::new(h, 0.0))) - f(&(&z - &v * C64::new(h, 0.0)))) / (2.0 * h);
        worst = worst.max((fd - omega(&x, &v)).abs());
    }
    assert!(worst > 1e-2);
}

#[test]
fn residual_shrinks_with_step() {
    let a = action("toric-rank2", None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = rand_z(&mut rng, 3);
    let xi = [0.4, -0.9];
    for h in [1e-3, 1e-4] {
        let r = verify_moment_identity_with_step(&a, &z, &xi, h).unwrap();
        assert!(r <= 10.0 * h * h + 1e-9, "h={h}: {r}");
    }
}

#[test]
fn h2_on_the_circle_action() {
    let ok = check_h2(&action("s1-c2", None).unwrap(), 16, 1).unwrap();
    assert!(ok.passed && !ok.inconclusive, "{ok:?}");
    assert_eq!(ok.quotient_dim, 2);
    for p in &ok.points {
        let r2: f64 = p.z_re.iter().chain(&p.z_im).map(|v| v * v).sum();
        assert!((r2 - 1.0).abs() < 1e-9);
    }
    let bad = check_h2(&action("s1-c2", Some(0.0)).unwrap(), 16, 1).unwrap();
    assert!(!bad.passed && !bad.free, "{bad:?}");
}

#[test]
fn h2_on_grassmann_and_rank_two_torus() {
    let g = check_h2(&action("grassmann-2-1", None).unwrap(), 8, 2).unwrap();
    assert!(g.passed);
    assert_eq!(g.quotient_dim, 2);
    let t = check_h2(&action("toric-rank2", None).unwrap(), 8, 2).unwrap();
    assert!(t.passed, "{t:?}");
    assert_eq!(t.quotient_dim, 2);
}

#[test]
fn h2_detects_finite_stabilizer() {
    // Weights (1, 2): the element acting by (−1, 1) fixes every point with z₁ = 0.
    let a = LinearGroupAction::toric("s1-12", DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), DVector::from_element(1, 0.4)).unwrap();
    let probes = group_probes(&a, 0);
    let z = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    assert!(a.moment(&z).unwrap()[0].abs() < 1e-15);
    let p = probe_point(&a, &z, &probes).unwrap();
    assert!(p.regular && !p.free, "{p:?}");
    let w = DVector::from_vec(vec![C64::new(2f64.sqrt(), 0.0), C64::new(0.0, 0.0)]);
    assert!(probe_point(&a, &w, &probes).unwrap().free);
}

#[test]
fn general_recovers_toric() {
    // Orthonormalize the toric generators, evaluate the general formula, then change basis back.
    let t = action("toric-rank2", Some(0.0)).unwrap();
    let q = t.gram().clone();
    let l = q.clone().cholesky().unwrap().l();
    let linv_t = l.transpose().try_inverse().unwrap();
    let gens = t.generators();
    let ortho: Vec<DMatrix<C64>> = (0..2)
        .map(|i| {
            let mut m = DMatrix::zeros(3, 3);
            for j in 0..2 {
                m += &gens[j] * C64::new(linv_t[(j, i)], 0.0);
            }
            m
        })
        .collect();
    let g = LinearGroupAction::general("g", ortho, DVector::zeros(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let z = rand_z(&mut rng, 3);
        let c = moment_general(&g, &z).unwrap();
        let y = &linv_t * c;
        let direct = moment_toric(&t, &z).unwrap();
        assert!((y - direct).amax() < 1e-12);
    }
}

#[test]
fn grassmann_left_unitary_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let b = DMatrix::from_fn(3, 2, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let raw = DMatrix::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let u = raw.qr().q();
        let d = moment_grassmann(&(&u * &b)) - moment_grassmann(&b);
        assert!(d.iter().all(|v| v.norm() < 1e-12));
        let m = moment_grassmann(&b);
        assert!((&m + m.adjoint()).iter().all(|v| v.norm() < 1e-14));
    }
}

#[test]
fn config_round_trip() {
    let spec: ActionSpec = serde_json::from_str(r#"{"kind":"toric","name":"s1","a":[[1,1]],"tau":[0.5]}"#).unwrap();
    let a = spec.build().unwrap();
    assert_eq!(a.group_dim(), 1);
    let g: ActionSpec = serde_json::from_str(
        r#"{"kind":"general-unitary","name":"u1","tau":[0.0],"generators":[{"re":[[0,0],[0,0]],"im":[[0.7071067811865476,0],[0,0.7071067811865476]]}]}"#,
    )
    .unwrap();
    assert_eq!(g.build().unwrap().space_dim(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toric_moment_is_torus_invariant(
        re in proptest::collection::vec(-2.0f64..2.0, 3),
        im in proptest::collection::vec(-2.0f64..2.0, 3),
        t in proptest::collection::vec(-10.0f64..10.0, 2),
    ) {
        let a = action("toric-rank2", None).unwrap();
        let z = DVector::from_fn(3, |i, _| C64::new(re[i], im[i]));
        let gz = a.group_element(&t) * &z;
        let d = a.moment(&gz).unwrap() - a.moment(&z).unwrap();
        prop_assert!(d.amax() < 1e-12);
    }
}
