use mbcascade::cascades::SearchParams;
use mbcascade::geometry::example;
use mbcascade::homology::*;
use proptest::prelude::*;

fn betti_of(name: &str) -> (Vec<usize>, ChainComplexGF2) {
    let p = example(name).unwrap();
    let cx = build_complex(&p, &SearchParams::default()).unwrap();
    assert!(verify_d_squared(&cx), "{name}");
    (betti(&cx).unwrap(), cx)
}

#[test]
fn sphere_examples() {
    for name in ["s2-z2", "s2-height"] {
        let (b, cx) = betti_of(name);
        assert_eq!(b, vec![1, 0, 1], "{name}");
        assert_eq!(cx.euler(), 2);
    }
}

#[test]
fn torus_examples() {
    for name in ["t2-cos", "t2-morse"] {
        let (b, cx) = betti_of(name);
        assert_eq!(b, vec![1, 2, 1], "{name}");
        assert_eq!(cx.euler(), 0);
    }
}

#[test]
fn circle_with_constant_function() {
    assert_eq!(betti_of("s1-flat").0, vec![1, 1]);
}

#[test]
fn s2_z2_boundary_entries() {
    let (_, cx) = betti_of("s2-z2");
    let r = cx.to_report();
    let mut pairs: Vec<(String, String)> = r.boundary.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
    pairs.sort();
    assert_eq!(pairs, vec![("N".to_string(), "s".to_string()), ("S".to_string(), "s".to_string())]);
    assert!(r.d_squared_ok);
}

#[test]
fn quadruple_independence() {
    let s = SearchParams::default();
    for (a, b) in [("s2-z2", "s2-height"), ("t2-cos", "t2-morse")] {
        let c = compare_quadruples(&example(a).unwrap(), &example(b).unwrap(), &s).unwrap();
        assert!(c.equal, "{c:?}");
    }
    let e = compare_quadruples(&example("s2-z2").unwrap(), &example("t2-cos").unwrap(), &s);
    assert!(matches!(e, Err(HomologyError::ManifoldMismatch(..))));
}

#[test]
fn rejects_non_morse_bott_and_non_compact() {
    let s = SearchParams::default();
    assert!(matches!(build_complex(&example("r1-x4").unwrap(), &s), Err(HomologyError::NotMorseBott(_))));
    assert!(matches!(build_complex(&example("model-x1sq-x2sq").unwrap(), &s), Err(HomologyError::NotCompact)));
}

#[test]
fn r1_x4_fails_the_morse_bott_check() {
    let p = example("r1-x4").unwrap();
    assert!(!p.check_morse_bott(MORSE_BOTT_SAMPLES).unwrap().passed);
}

// A direct sum of free generators and acyclic pairs x → y, so the Betti numbers are known.
fn standard(free: &[usize], pairs: &[usize]) -> ChainComplexGF2 {
    let mut gens = Vec::new();
    let mut layout = Vec::new();
    for k in 0..free.len() {
        let mut names = Vec::new();
        for i in 0..free[k] {
            names.push(format!("f{k}.{i}"));
        }
        // Targets of pairs starting in degree k+1 and sources of pairs starting in degree k.
        if k + 1 < free.len() {
            for i in 0..pairs[k + 1] {
                names.push(format!("y{}.{i}", k + 1));
            }
        }
        for i in 0..pairs[k] {
            names.push(format!("x{k}.{i}"));
        }
        for n in &names {
            gens.push(Generator { name: n.clone(), submanifold: 0, point: vec![], ind_f: k as i64, ind_h: 0, degree: k as i64, level: 0.0 });
        }
        layout.push(names);
    }
    let mut cx = ChainComplexGF2::from_generators(gens);
    for k in 1..free.len() {
        for i in 0..pairs[k] {
            let col = layout[k].iter().position(|n| *n == format!("x{k}.{i}")).unwrap();
            let row = layout[k - 1].iter().position(|n| *n == format!("y{k}.{i}")).unwrap();
            cx.set_entry(k as i64, row, col, true);
        }
    }
    cx
}

// Replace generator i of degree k by g_i + g_j.
fn change_basis(cx: &mut ChainComplexGF2, k: usize, i: usize, j: usize) {
    let d = &mut cx.boundary[k];
    for r in 0..d.rows() {
        if d.get(r, j) {
            d.flip(r, i);
        }
    }
    if k + 1 < cx.boundary.len() {
        let u = &mut cx.boundary[k + 1];
        for c in 0..u.cols() {
            if u.get(i, c) {
                u.flip(j, c);
            }
        }
    }
}

fn permute(cx: &ChainComplexGF2, k: usize, perm: &[usize]) -> ChainComplexGF2 {
    let mut out = cx.clone();
    out.by_degree[k] = perm.iter().map(|&p| cx.by_degree[k][p].clone()).collect();
    for (new, &old) in perm.iter().enumerate() {
        for r in 0..cx.boundary[k].rows() {
            out.boundary[k].set(r, new, cx.boundary[k].get(r, old));
        }
        if k + 1 < cx.boundary.len() {
            for c in 0..cx.boundary[k + 1].cols() {
                out.boundary[k + 1].set(new, c, cx.boundary[k + 1].get(old, c));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn betti_survives_basis_changes_and_permutations(
        free in proptest::collection::vec(0usize..3, 4),
        pairs in proptest::collection::vec(0usize..3, 4),
        ops in proptest::collection::vec((0usize..4, 0usize..16, 0usize..16), 0..40),
        seed in 0u64..1000,
    ) {
        let mut pairs = pairs;
        pairs[0] = 0;
        let mut cx = standard(&free, &pairs);
        prop_assume!(cx.generators().count() > 0);
        for (k, i, j) in ops {
            if k >= cx.by_degree.len() {
                continue;
            }
            let n = cx.by_degree[k].len();
            if n >= 2 && i % n != j % n {
                change_basis(&mut cx, k, i % n, j % n);
            }
        }
        prop_assert!(verify_d_squared(&cx));
        let expected: Vec<usize> = free[..cx.by_degree.len()].to_vec();
        prop_assert_eq!(betti(&cx).unwrap(), expected.clone());

        for k in 0..cx.by_degree.len() {
            let n = cx.by_degree[k].len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left(((seed as usize) + k) % n.max(1));
            if n > 1 {
                perm.swap(0, n - 1);
            }
            cx = permute(&cx, k, &perm);
        }
        prop_assert_eq!(betti(&cx).unwrap(), expected);
        let chi: i64 = free.iter().enumerate().map(|(k, &f)| if k % 2 == 0 { f as i64 } else { -(f as i64) }).sum();
        prop_assert_eq!(cx.euler(), chi);
    }
}
