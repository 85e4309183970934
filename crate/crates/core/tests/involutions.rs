use mbcascade::involutions::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn grids() -> Vec<PathGrid> {
    let mut v = Vec::new();
    for n in [1, 2] {
        for s in [32, 64, 128] {
            v.push(PathGrid::new(n, s).unwrap());
        }
    }
    v
}

#[test]
fn spectra_match_closed_forms() {
    for g in grids() {
        for k in 1..=3 {
            let spec = lk_squared_spectrum(&g, k).unwrap();
            let claim = claimed_spectrum(k).unwrap();
            assert_eq!(spec.len(), claim.len(), "{g:?} k={k}: {spec:?}");
            for (a, b) in spec.iter().zip(&claim) {
                assert!((a - b).abs() < 1e-8, "{g:?} k={k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn eigenvalue_multiplicities_are_even() {
    let g = PathGrid::new(1, 32).unwrap();
    let ev = lk_squared_eigenvalues(&g, 2).unwrap();
    let top = claimed_spectrum(2).unwrap()[1];
    let mult = ev.iter().filter(|&&l| (l - top).abs() < 1e-8).count();
    assert_eq!(mult, ev.len() / 2);
}

#[test]
fn square_recursion_and_commutators() {
    let g = PathGrid::new(2, 64).unwrap();
    let r = verify_lemma(&g, 3).unwrap();
    for row in &r.recursion {
        assert!(row.residual < 1e-10, "{row:?}");
    }
    for row in &r.commutators {
        assert!(row.residual < 1e-9, "{row:?}");
    }
    for l in &r.lk {
        assert!(l.leaves_minus < 1e-12 && l.anticommutes_i1 < 1e-12 && l.symmetry < 1e-12);
        assert!(l.min_eigenvalue > 0.9);
    }
}

#[test]
fn involution_residuals() {
    let g = PathGrid::new(1, 64).unwrap();
    let r = verify_involutions(&g, 3).unwrap();
    for row in r.involutive.iter().chain(&r.self_adjoint).chain(&r.commutators).chain(&r.hd_identity).chain(&r.eigenvalues_pm_one) {
        assert!(row.residual < 1e-9, "{row:?}");
    }
}

#[test]
fn i2_formula_is_involutive_on_whole_space() {
    let g = PathGrid::new(2, 16).unwrap();
    let i2 = build_i2_formula(&g).matrix;
    let id = DMatrix::<f64>::identity(g.dim(), g.dim());
    assert_eq!(&i2 * &i2, id);
    let i1 = build_i1(&g).matrix;
    assert!((&i1 * &i2 - &i2 * &i1).amax() == 0.0);
}

#[test]
fn determinant_table() {
    // Cofactor expansion as an independent determinant for the small cases.
    fn cofactor(m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        if n == 1 {
            return m[(0, 0)];
        }
        let mut s = 0.0;
        for j in 0..n {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * m[(0, j)] * cofactor(&minor);
        }
        s
    }
    for k in 1..=2 {
        for t in [0.01, 0.1, 0.2] {
            let m = sign_matrix(k, t / (1 << k) as f64);
            assert!((cofactor(&m).abs() - sign_matrix_abs_det(k, t / (1 << k) as f64)).abs() < 1e-9);
        }
    }
    let g = PathGrid::new(1, 64).unwrap();
    let r = verify_lemma(&g, 3).unwrap();
    assert_eq!(r.determinants.len(), 15);
    for row in &r.determinants {
        assert!(row.abs_det > 0.0, "injectivity certificate {row:?}");
        assert!((row.abs_det - 2f64.powi((1 << row.k) - 1)).abs() < 1e-9);
    }
}

#[test]
fn coarse_grid_rejected() {
    let g = PathGrid::new(1, 32).unwrap();
    assert!(matches!(verify_lemma(&g, 5), Err(InvolutionError::NotAdmissible { .. })));
}

#[test]
fn fixed_ladder_halves() {
    let g = PathGrid::new(1, 32).unwrap();
    let r = fixed_ladder(&g).unwrap();
    assert_eq!(r.fixed_dims, vec![32, 16, 8, 4, 2, 1]);
    assert_eq!(r.free_after, Some(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l1_self_adjoint_on_minus(seed in proptest::collection::vec(-1.0f64..1.0, 128)) {
        let g = PathGrid::new(1, 32).unwrap();
        let (_, pim) = eigenprojections(&build_i1(&g));
        let l1 = build_lk(&g, 1).unwrap().matrix;
        let x = &pim.matrix * DVector::from_column_slice(&seed[..64]);
        let y = &pim.matrix * DVector::from_column_slice(&seed[64..]);
        let lhs = (&l1 * &x).dot(&y);
        let rhs = x.dot(&(&l1 * &y));
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn i1_preserves_norm(seed in proptest::collection::vec(-1.0f64..1.0, 64)) {
        let g = PathGrid::new(1, 32).unwrap();
        let x = DVector::from_column_slice(&seed);
        let y = build_i1(&g).matrix * &x;
        prop_assert!((y.norm() - x.norm()).abs() < 1e-12);
    }
}
