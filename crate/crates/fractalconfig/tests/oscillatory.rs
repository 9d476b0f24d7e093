use fractalconfig::bump::bump;
use fractalconfig::oscillatory::*;
use fractalconfig::patterns::fixtures::*;
use fractalconfig::patterns::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn linear_spec() -> PatternSpec {
    PatternSpec::new(
        MatrixSystem::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        PolynomialPhase::zero(2),
        CutoffSpec::new(2, 0.25),
    )
    .unwrap()
}

/// `ψ̂(ω) = ∫ψ(y)e(−ω·y)dy` by a dense independent 1-D rule per axis.
fn psi_hat(spec: &PatternSpec, omega: &[f64]) -> Complex64 {
    let s = spec.cutoff.support;
    let nodes = 20_000;
    let h = 2.0 * s / nodes as f64;
    omega
        .iter()
        .map(|w| {
            (0..nodes)
                .map(|i| {
                    let y = -s + (i as f64 + 0.5) * h;
                    spec.cutoff.axis(y)
                        * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * w * y)
                })
                .sum::<Complex64>()
                * h
        })
        .product()
}

#[test]
fn vanishing_phase_is_the_cutoff_mass() {
    let spec = showcase_spec(0.25);
    let j = eval_j(&spec, &[0.0; 4], &[0.0; 3]).unwrap();
    let gap = (j.value.re - spec.cutoff.integral()).abs();
    assert!(
        gap <= j.est_error + 1e-10 && j.value.im.abs() < 1e-12,
        "gap {gap} err {}",
        j.est_error
    );
    let rep = certify_j_decay(&spec, 3.0, 2, 0).unwrap();
    assert_eq!(
        rep.rays[0].samples[0].envelope,
        rep.rays[0].samples[0].abs_j
    );
}

#[test]
fn linear_case_is_cutoff_transform() {
    let spec = linear_spec();
    for (xi, theta) in [([3.0, -2.0], [0.0, 0.0]), ([1.5, 4.0], [0.5, -1.0])] {
        let j = eval_j(&spec, &xi, &theta).unwrap();
        let omega = [-(xi[0] + theta[0]), -(xi[1] + theta[1])];
        let oracle = psi_hat(&spec, &omega);
        assert!(
            (j.value - oracle).norm() <= j.est_error + 1e-7,
            "{} vs {}",
            j.value,
            oracle
        );
    }
}

#[test]
fn showcase_against_finer_quadrature() {
    let spec = showcase_spec(0.25);
    let xi = [4.0, 0.0, 0.0, 4.0];
    let a = JEvaluator::new(&spec).eval(&xi, &[0.0; 3]).unwrap();
    let b = JEvaluator::refined(&spec, 4).eval(&xi, &[0.0; 3]).unwrap();
    assert!((a.value - b.value).norm() < 1e-4);
}

#[test]
fn decay_exponent_for_quadratic_phase() {
    let spec = showcase_spec(0.25);
    let rep = certify_j_decay(&spec, 3.0, 8, 1).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.min_exponent.unwrap() >= 1.3);
    assert!(rep.c_fit.is_finite());
    assert!(rep.to_csv().lines().count() > 8 * 12);
}

#[test]
fn linear_case_decays_super_polynomially() {
    let spec = linear_spec();
    let rep = certify_j_decay(&spec, 2.0, 6, 3).unwrap();
    for r in rep.rays.iter().filter(|r| !r.kernel_direction) {
        assert!(
            r.fitted_exponent.map_or(r.decayed_below_floor, |e| e > 3.0),
            "{r:?}"
        );
    }
}

#[test]
fn kernel_k_values() {
    let sys = MatrixSystem::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(eval_kernel_k(&sys, &[0.0, 0.0], 2.0, &[0.0, 0.0]), 1.0);
    assert!((eval_kernel_k(&sys, &[0.0, 0.0], 2.0, &[3.0, 4.0]) - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(eval_kernel_k(&sys, &[-3.0, -4.0], 5.0, &[3.0, 4.0]), 1.0);
}

#[test]
fn kernel_directions_of_a_singular_system() {
    let sys = MatrixSystem::new(1, 1, vec![vec![1.0], vec![1.0]]).unwrap();
    let dirs = kernel_directions(&sys);
    assert_eq!(dirs.len(), 1);
    assert!((dirs[0][0] + dirs[0][1]).abs() < 1e-12);
    let show = kernel_directions(&showcase_system());
    assert_eq!(show.len(), 1);
    let v = &show[0];
    assert!((v[0] + v[3]).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12);
}

#[test]
fn generic_path_matches_separable_path() {
    let spec = showcase_spec(0.25);
    let mixed = PatternSpec::new(
        spec.system.clone(),
        spec.q.clone().with_term(vec![1, 1, 0], 1e-300),
        spec.cutoff.clone(),
    )
    .unwrap();
    let sep = JEvaluator::new(&spec);
    let gen = JEvaluator::new(&mixed);
    assert!(sep.is_separable() && !gen.is_separable());
    let xi = [2.0, -1.0, 0.5, 3.0];
    let a = sep.eval(&xi, &[0.3, 0.0, -0.2]).unwrap();
    let b = gen.eval(&xi, &[0.3, 0.0, -0.2]).unwrap();
    assert!(
        (a.value - b.value).norm() < 1e-6,
        "{} vs {}",
        a.value,
        b.value
    );
    let _ = bump(0.0);
}

#[test]
fn quadrature_converges_under_refinement() {
    let spec = showcase_spec(0.25);
    let coarse = JEvaluator::new(&spec);
    let fine = JEvaluator::refined(&spec, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let xi: Vec<f64> = (0..4).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let a = coarse.eval(&xi, &theta).unwrap();
        let b = fine.eval(&xi, &theta).unwrap();
        assert!(
            (a.value - b.value).norm() <= 4.0 * a.est_error,
            "{} {} err {}",
            a.value,
            b.value,
            a.est_error
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modulus_bound_and_conjugate_symmetry(xi in proptest::collection::vec(-40.0f64..40.0, 4)) {
        let spec = showcase_spec(0.25);
        let eval = JEvaluator::new(&spec);
        let a = eval.eval(&xi, &[0.0; 3]).unwrap();
        let neg: Vec<f64> = xi.iter().map(|x| -x).collect();
        let b = eval.eval(&neg, &[0.0; 3]).unwrap();
        prop_assert!(a.value.norm() <= spec.cutoff.integral() + a.est_error);
        prop_assert!((a.value - b.value.conj()).norm() <= 1e-12 + a.est_error + b.est_error);
    }
}

#[test]
fn envelope_consistency_over_certified_samples() {
    let spec = showcase_spec(0.25);
    let rep = certify_j_decay(&spec, 3.0, 8, 5).unwrap();
    for r in &rep.rays {
        for s in &r.samples {
            let xi: Vec<f64> = r.direction.iter().map(|c| c * s.t).collect();
            let k = eval_kernel_k(&spec.system, &[0.0; 3], 3.0, &xi);
            assert!(s.abs_j <= rep.c_fit * k * (1.0 + 1e-12));
        }
    }
}
