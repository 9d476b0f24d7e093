use fractalconfig::patterns::fixtures::*;
use fractalconfig::patterns::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn rank2_all_pairs(a: &[f64]) -> bool {
    // n=1, k=2 with A₀=0: every pair {i,j} needs [A_i − ... ] of full rank 1 after differencing.
    let vals = [0.0, a[0], a[1]];
    (0..3).all(|i| (i + 1..3).all(|j| (vals[i] - vals[j]).abs() > 0.0))
}

#[test]
fn worked_nondegeneracy_examples() {
    assert!(
        !check_nondegenerate(&degenerate_system())
            .unwrap()
            .nondegenerate
    );
    let rep = check_nondegenerate(&repaired_system()).unwrap();
    assert!(rep.nondegenerate && rep.forms_agree() && rep.witness.is_none());
    let bad = check_nondegenerate(&degenerate_system()).unwrap();
    assert!(bad.witness.is_some() && bad.forms_agree());
    assert!(
        check_nondegenerate(&showcase_system())
            .unwrap()
            .nondegenerate
    );
}

#[test]
fn scalar_system_matches_exhaustive_pairs() {
    let sys = MatrixSystem::new(1, 1, vec![vec![1.0], vec![2.0]]);
    // m = 1 = (k-1)n, so r = 1 and n' = 0.
    let sys = sys.unwrap();
    let rep = check_nondegenerate(&sys).unwrap();
    assert_eq!(rep.nondegenerate, rank2_all_pairs(&[1.0, 2.0]));
    assert!(rep.nondegenerate);
    let equal = MatrixSystem::new(1, 1, vec![vec![1.0], vec![1.0]]).unwrap();
    assert!(!check_nondegenerate(&equal).unwrap().nondegenerate);
}

#[test]
fn scaling_a_single_matrix_can_change_the_verdict() {
    // Differences A_i − A_j enter the rank conditions, so only a common scale is harmless.
    let equal = MatrixSystem::new(1, 1, vec![vec![1.0], vec![1.0]]).unwrap();
    assert!(!check_nondegenerate(&equal).unwrap().nondegenerate);
    assert!(
        check_nondegenerate(&equal.scaled(1, 2.0))
            .unwrap()
            .nondegenerate
    );
}

#[test]
fn inconsistent_dimensions_rejected() {
    let sys = MatrixSystem::new(2, 4, vec![vec![0.0; 8], vec![0.0; 8]]).unwrap();
    assert!(matches!(
        check_nondegenerate(&sys),
        Err(fractalconfig::Error::Parameter(_))
    ));
}

#[test]
fn pattern_spec_clauses() {
    let line = PatternSpec::new(
        MatrixSystem::new(1, 1, vec![vec![1.0], vec![0.0]]).unwrap(),
        PolynomialPhase::squared_norm(1),
        CutoffSpec::new(1, 0.25),
    )
    .unwrap();
    let rep = check_pattern_spec(&line, 0.5, 1e-6);
    assert!(!rep.dimension_gate && !rep.passes());

    let show = showcase_spec(0.25);
    let rep = check_pattern_spec(&show, 1.5, 1e-6);
    assert!(rep.passes(), "{rep:?}");
    assert!((rep.hessian_det_at_zero - 8.0).abs() < 1e-12);

    let q = PolynomialPhase::zero(2).with_term(vec![2, 0], 1.0);
    assert_eq!(q.hessian(&[0.0, 0.0]).determinant(), 0.0);
    let sys =
        MatrixSystem::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let flat = PatternSpec::new(sys, q, CutoffSpec::new(2, 0.25)).unwrap();
    let rep = check_pattern_spec(&flat, 0.5, 1e-6);
    assert!(!rep.hessian_nonsingular && rep.hessian_det_at_zero == 0.0 && !rep.passes());
}

#[test]
fn shifts() {
    let show = showcase_spec(0.25);
    assert!(show
        .eval_shifts(&[0.0; 3])
        .unwrap()
        .iter()
        .flatten()
        .all(|&v| v == 0.0));
    let y = [0.1, -0.05, 0.2];
    let s = show.eval_shifts(&y).unwrap();
    let q = 0.01 + 0.0025 + 0.04;
    assert_eq!(s[0], vec![0.1, -0.05]);
    assert!((s[1][0] - 0.2).abs() < 1e-15 && (s[1][1] - (0.1 + q)).abs() < 1e-15);
    assert!(matches!(
        show.eval_shifts(&[0.3, 0.0, 0.0]),
        Err(fractalconfig::Error::Domain(_))
    ));

    let toy = PatternSpec::new(
        MatrixSystem::new(1, 1, vec![vec![1.0], vec![2.0]]).unwrap(),
        PolynomialPhase::squared_norm(1),
        CutoffSpec::new(1, 0.25),
    )
    .unwrap();
    let s = toy.eval_shifts(&[0.1]).unwrap();
    assert!((s[0][0] - 0.1).abs() < 1e-15 && (s[1][0] - 0.21).abs() < 1e-15);
}

#[test]
fn cutoff_shape() {
    let c = CutoffSpec::new(3, 0.25);
    c.validate().unwrap();
    assert!(c.eval(&[0.0; 3]) >= 2.0);
    assert!(c.eval(&[c.c, -c.c, c.c]) >= 1.0 - 1e-12);
    assert_eq!(c.eval(&[0.25, 0.0, 0.0]), 0.0);
}

#[test]
fn random_systems_agree_between_forms() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let (n, k) = if trial % 2 == 0 { (2, 2) } else { (1, 3) };
        let m = (k - 1) * n + rng.gen_range(0..n);
        let sparse = trial % 5 == 0;
        let matrices: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..n * m)
                    .map(|_| {
                        if sparse {
                            rng.gen_range(0..2) as f64
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let sys = MatrixSystem::new(n, m, matrices).unwrap();
        let rep = check_nondegenerate(&sys).unwrap();
        assert!(rep.forms_agree(), "trial {trial}: {rep:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_decision_scale_invariant(entries in proptest::collection::vec(-2i32..3, 12), scale in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0]) {
        let mats = vec![entries[..6].iter().map(|&x| x as f64).collect(), entries[6..].iter().map(|&x| x as f64).collect()];
        let sys = MatrixSystem::new(2, 3, mats).unwrap();
        let a = check_nondegenerate(&sys).unwrap().nondegenerate;
        let b = check_nondegenerate(&sys.scaled(1, scale).scaled(2, scale)).unwrap().nondegenerate;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn linear_terms_do_not_change_hessian_clauses(c in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let base = showcase_spec(0.25);
        let mut q = base.q.clone();
        for (i, ci) in c.iter().enumerate() {
            let mut e = vec![0u32; 3];
            e[i] = 1;
            q = q.with_term(e, *ci);
        }
        let shifted = PatternSpec::new(base.system.clone(), q, base.cutoff.clone()).unwrap();
        let a = check_pattern_spec(&base, 1.5, 1e-6);
        let b = check_pattern_spec(&shifted, 1.5, 1e-6);
        prop_assert_eq!(a.hessian_nonsingular, b.hessian_nonsingular);
        prop_assert_eq!(a.hessian_bounded_away, b.hessian_bounded_away);
        prop_assert!((a.hessian_min_abs_det - b.hessian_min_abs_det).abs() < 1e-9);
    }
}
