use std::sync::Arc;

use fractalconfig::forms::lambda_direct;
use fractalconfig::grid::GridFunction;
use fractalconfig::patterns::fixtures;
use fractalconfig::regularity::fixtures::{smooth_bump, smoothed_box};
use fractalconfig::regularity::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_exact(f: &TorusFunction, dec: &RegDecomposition) {
    assert!(dec.reconstruction_error(f) < 1e-9);
    assert!((dec.f1.integral() - f.integral()).abs() < 1e-9);
    assert!(dec.f1.values.iter().all(|&v| v >= -1e-9));
    assert!(dec
        .f1
        .values
        .iter()
        .zip(&dec.f2.values)
        .all(|(a, b)| a + b >= -1e-9));
    assert!(dec.holds(), "{:?}", dec.summary());
}

#[test]
fn bohr_measure_examples() {
    let whole = BohrSet::new(2, vec![vec![0, 0]], 0.01).unwrap();
    let m = bohr_measure(&whole, 10_000, 1).unwrap();
    assert_eq!(m.estimate.estimate, 1.0);

    let interval = BohrSet::new(1, vec![vec![1]], 0.25).unwrap();
    let m = bohr_measure(&interval, 100_000, 2).unwrap();
    assert!((m.estimate.estimate - 0.5).abs() <= m.estimate.half_width);
    assert_eq!(m.lower_bound, 0.125);

    let square = BohrSet::coordinate(2, 0.1).unwrap();
    let m = bohr_measure(&square, 100_000, 3).unwrap();
    assert!((m.estimate.estimate - 0.04).abs() <= m.estimate.half_width);
    assert!((m.lower_bound - 0.0025).abs() < 1e-15);
    assert!(m.consistent);
    assert!(bohr_measure(&square, 9_999, 3).is_err());
    assert!(BohrSet::new(1, vec![vec![1]], 0.6).is_err());
}

#[test]
fn random_bohr_sets_respect_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let n = rng.gen_range(1..=2);
        let d = rng.gen_range(1..=3);
        let gamma = (0..d)
            .map(|_| (0..n).map(|_| rng.gen_range(-5..=5)).collect())
            .collect();
        let delta = rng.gen_range(0.01..=0.5);
        let bohr = BohrSet::new(n, gamma, delta).unwrap();
        let m = bohr_measure(&bohr, 20_000, trial).unwrap();
        assert!(m.consistent, "trial {trial}: {m:?}");
    }
}

#[test]
fn bohr_measure_is_thread_independent() {
    let bohr = BohrSet::new(2, vec![vec![1, 2], vec![3, -1]], 0.2).unwrap();
    let a = bohr_measure(&bohr, 50_000, 9).unwrap();
    fractalconfig::par::set_sequential(true);
    let b = bohr_measure(&bohr, 50_000, 9).unwrap();
    fractalconfig::par::set_sequential(false);
    assert_eq!(a, b);
}

#[test]
fn mollifier_examples() {
    let flat = build_bohr_mollifier(&BohrSet::new(1, vec![vec![0]], 0.5).unwrap(), 16).unwrap();
    assert!(flat.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

    // Fejér oracle: ν̂(1) = (sin πδ / πδ)² for the one-dimensional tent.
    let bohr = BohrSet::new(1, vec![vec![1]], 0.25).unwrap();
    let nu = build_bohr_mollifier(&bohr, 512).unwrap();
    let check = check_mollifier(&bohr, &nu);
    assert!(check.holds(), "{check:?}");
    let s = (std::f64::consts::PI * 0.25).sin() / (std::f64::consts::PI * 0.25);
    assert!((1.0 - check.gamma_defect - s * s).abs() < 1e-4);
    assert!(check.gamma_defect <= 0.25 * 2.0);

    for bohr in [
        BohrSet::coordinate(2, 0.25).unwrap(),
        BohrSet::new(2, vec![vec![1, 1], vec![1, -2], vec![0, 3]], 0.2).unwrap(),
    ] {
        let nu = build_bohr_mollifier(&bohr, 128).unwrap();
        let check = check_mollifier(&bohr, &nu);
        assert!(check.holds(), "{check:?}");
    }
    assert!(matches!(
        build_bohr_mollifier(&BohrSet::coordinate(1, 0.05).unwrap(), 64),
        Err(fractalconfig::Error::Resolution(_))
    ));
}

#[test]
fn mollifier_shift_constant() {
    let bohr = BohrSet::coordinate(2, 0.25).unwrap();
    let res = 128;
    let nu = build_bohr_mollifier(&bohr, res).unwrap();
    let scale = (bohr.delta / 4.0).powi(-2);
    let mut worst: f64 = 0.0;
    for steps in 1..=4usize {
        let t = [steps as f64 / res as f64, -(steps as f64) / res as f64];
        let rho = bohr.radius(&t) / bohr.delta;
        let moved = nu.shifted(&t);
        let defect = moved
            .values
            .iter()
            .zip(&nu.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(defect / (scale * rho));
    }
    assert!(worst <= 4.0, "fitted C = {worst}");
}

#[test]
fn torus_fourier_roundtrip_and_convolution() {
    let f = smoothed_box(2, 32);
    let back = TorusFunction::from_coefficients(2, 32, f.origin, &f.coefficients());
    assert!(back
        .values
        .iter()
        .zip(&f.values)
        .all(|(a, b)| (a - b).abs() < 1e-12));
    let c = f.coefficients();
    let parseval: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    assert!((parseval - f.l2().powi(2)).abs() < 1e-12);

    // Direct convolution against the mollifier on the node lattice.
    let nu = build_bohr_mollifier(&BohrSet::coordinate(2, 0.25).unwrap(), 32).unwrap();
    let conv = f.convolve(&nu).unwrap();
    let res = 32usize;
    for probe in [0usize, 17, 300, 1023] {
        let (i, j) = (probe / res, probe % res);
        let mut direct = 0.0;
        for p in 0..res {
            for q in 0..res {
                let a = (i + res - p) % res;
                let b = (j + res - q) % res;
                direct += f.values[a * res + b] * nu.values[p * res + q];
            }
        }
        direct /= (res * res) as f64;
        assert!((conv.values[probe] - direct).abs() < 1e-12);
    }
}

#[test]
fn zero_function_decomposes_trivially() {
    let f = TorusFunction::new(2, 32, vec![0.0; 1024]).unwrap();
    let dec = reg_decompose(&f, 0.5, &Kappa::Default, &RegOptions::default()).unwrap();
    assert_eq!(dec.iterations, 0);
    assert!(dec.f1.linf() == 0.0 && dec.f2.linf() == 0.0 && dec.f3.linf() == 0.0);
    assert_eq!(dec.achieved.ap_sup, 0.0);
    assert_eq!(dec.achieved.l2, 0.0);
    assert_eq!(dec.achieved.fourier_sup, 0.0);
}

#[test]
fn smooth_bump_exits_early() {
    let f = smooth_bump(2, 64);
    assert!(f.linf() <= 1.0);
    let dec = reg_decompose(&f, 0.5, &Kappa::Default, &RegOptions::default()).unwrap();
    assert!(dec.iterations <= 1);
    assert!(dec.support_ok);
    assert_exact(&f, &dec);
    assert!(dec.achieved.l2 <= 0.5);
}

#[test]
fn fixtures_meet_all_three_bounds() {
    for f in [smooth_bump(2, 64), smoothed_box(2, 64)] {
        for eps in [0.5, 0.25] {
            let dec = reg_decompose(&f, eps, &Kappa::Default, &RegOptions::default()).unwrap();
            assert_exact(&f, &dec);
            assert!(dec.levels[0].resolved);
            if let Some(c) = dec.periodization_ratio {
                assert!(c <= 4.0, "periodization constant {c}");
            }
            let json = serde_json::to_value(dec.summary()).unwrap();
            for key in ["eps", "kappa_id", "iterations", "d", "delta", "achieved"] {
                assert!(json.get(key).is_some());
            }
        }
    }
}

#[test]
fn resolved_schedule_with_generous_kappa() {
    // A constant κ keeps δ₁ on a fine one-dimensional grid.
    let kappa = Kappa::Custom {
        id: "const-0.2".into(),
        f: Arc::new(|_, _, _| 0.2),
    };
    let half = smoothed_box(1, 2048);
    let f = half.combine(0.5, &half, 0.0);
    let dec = reg_decompose(&f, 0.5, &kappa, &RegOptions::default()).unwrap();
    assert_eq!(dec.iterations, 0);
    assert!(dec.levels[1].resolved, "{:?}", dec.levels);
    assert!(dec.f3.linf() > 0.0);
    assert_exact(&f, &dec);
    let c = dec.periodization_ratio.unwrap();
    assert!(c <= 4.0, "periodization constant {c}");
}

#[test]
fn out_of_range_input_rejected() {
    let f = TorusFunction::from_fn(1, 32, |x| if x[0].abs() < 0.05 { 1.5 } else { 0.0 }).unwrap();
    assert!(reg_decompose(&f, 0.5, &Kappa::Default, &RegOptions::default()).is_err());
    let wide = TorusFunction::from_fn(1, 32, |x| if x[0].abs() < 0.3 { 1.0 } else { 0.0 }).unwrap();
    let dec = reg_decompose(&wide, 0.5, &Kappa::Default, &RegOptions::default()).unwrap();
    assert!(!dec.support_ok);
}

#[test]
fn diophantine_examples() {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let zero =
        diophantine_density(DiophantineMode::Integer { n_max: 100 }, &[vec![0.0]], 0.1).unwrap();
    assert_eq!(zero, 1.0);
    let half = diophantine_density(
        DiophantineMode::Integer { n_max: 10_000 },
        &[vec![0.5]],
        0.1,
    )
    .unwrap();
    assert!((half - 0.5).abs() <= 2e-3, "{half}");
    let g4 = diophantine_density(
        DiophantineMode::Integer { n_max: 10_000 },
        &[vec![golden]],
        0.1,
    )
    .unwrap();
    assert!((g4 - 0.2).abs() <= 0.02, "{g4}");
    let g3 = diophantine_density(
        DiophantineMode::Integer { n_max: 1_000 },
        &[vec![golden]],
        0.1,
    )
    .unwrap();
    let g8 = diophantine_density(
        DiophantineMode::Integer { n_max: 20_000 },
        &[vec![golden]],
        0.1,
    )
    .unwrap();
    assert!((g3 - g4).abs() <= 0.1 * g4);
    assert!((g8 - g4).abs() <= 0.1 * g4);

    let real = DiophantineMode::Real {
        c: 0.5,
        nodes: 100_000,
    };
    assert_eq!(
        diophantine_density(real, &[vec![0.0], vec![0.0, 0.0]], 0.2).unwrap(),
        1.0
    );
    let line = diophantine_density(real, &[vec![1.0]], 0.1).unwrap();
    assert!((line - 0.2).abs() < 1e-4);
    // Two monomials: ‖y‖ ≤ ε already forces ‖y²‖ ≤ ε² there.
    let both = diophantine_density(real, &[vec![1.0], vec![1.0]], 0.1).unwrap();
    assert!((both - 0.2).abs() < 1e-4);
    assert!(diophantine_density(real, &[], 0.1).is_err());
    assert!(diophantine_density(real, &[vec![1.0]], 0.5).is_err());
}

#[test]
fn eset_examples() {
    let spec = fixtures::showcase_spec(0.25);
    let volume = 0.5f64.powi(3);
    let whole = BohrSet::new(2, vec![vec![0, 0]], 0.1).unwrap();
    assert_eq!(
        eset_measure(&spec, &whole, 20_000, 0).unwrap().estimate,
        volume
    );
    let full = BohrSet::coordinate(2, 0.5).unwrap();
    assert_eq!(
        eset_measure(&spec, &full, 20_000, 0).unwrap().estimate,
        volume
    );

    let bohr = BohrSet::coordinate(2, 0.2).unwrap();
    let mc = eset_measure(&spec, &bohr, 200_000, 5).unwrap();
    let coarse = eset_grid(&spec, &bohr, 40).unwrap();
    let fine = eset_grid(&spec, &bohr, 80).unwrap();
    assert!(mc.estimate > 0.0);
    assert!((coarse - fine).abs() <= 0.1 * fine);
    assert!(
        (mc.estimate - fine).abs() <= mc.half_width + 0.02 * fine,
        "{mc:?} vs {fine}"
    );
}

#[test]
fn abscont_full_box() {
    let spec = fixtures::toy_spec();
    let f = GridFunction::from_fn(1, 64, 0.5, |x| ((0.5 - x[0].abs()) * 20.0).clamp(0.0, 1.0));
    let report = abscont_lower(
        &spec,
        &f,
        None,
        0.5,
        &Kappa::Default,
        &RegOptions::default(),
    )
    .unwrap();
    let psi_mass = spec.cutoff.integral();
    assert!(report.tau > 0.9);
    assert!(
        report.lambda_value > 0.5 * psi_mass * report.tau.powi(3),
        "{report:?}"
    );
    assert!(report.positive && report.chain_holds, "{report:?}");
    let fine = GridFunction::from_fn(1, 128, 0.5, |x| ((0.5 - x[0].abs()) * 20.0).clamp(0.0, 1.0));
    let doubled = lambda_direct(&spec, &[fine.clone(), fine.clone(), fine], 256)
        .unwrap()
        .value;
    assert!((doubled - report.lambda_value).abs() <= 0.02 * doubled);
}

#[test]
fn abscont_half_box_showcase() {
    let spec = fixtures::showcase_spec(0.25);
    let strip = |x: &[f64]| ((0.25 - x[0].abs()) * 32.0 + 0.5).clamp(0.0, 1.0);
    let f = GridFunction::from_fn(2, 64, 0.5, strip);
    let tau = f.integral();
    assert!((tau - 0.5).abs() < 0.01);
    let report = abscont_lower(
        &spec,
        &f,
        Some(tau),
        0.25,
        &Kappa::Default,
        &RegOptions::default(),
    )
    .unwrap();
    assert!(report.positive && report.chain_holds);
    assert!(report.lambda_value > 0.0);

    let zero = GridFunction::zeros(2, 64, 0.5);
    let report = abscont_lower(
        &spec,
        &zero,
        Some(0.0),
        0.25,
        &Kappa::Default,
        &RegOptions::default(),
    )
    .unwrap();
    assert_eq!(report.lambda_value, 0.0);
    assert!(!report.positive);
    assert!(abscont_lower(
        &spec,
        &f,
        Some(0.9),
        0.25,
        &Kappa::Default,
        &RegOptions::default()
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decomposition_is_exact(seed in 0u64..10_000, eps in prop::sample::select(vec![0.5, 0.25])) {
        let f = TorusFunction::from_fn(2, 32, |x| {
            if x.iter().all(|v| v.abs() <= 0.125) { hashed_value(x, seed) } else { 0.0 }
        }).unwrap();
        let dec = reg_decompose(&f, eps, &Kappa::Default, &RegOptions { ap_samples: 100, ..Default::default() }).unwrap();
        prop_assert!(dec.reconstruction_error(&f) < 1e-9);
        prop_assert!((dec.f1.integral() - f.integral()).abs() < 1e-9);
        prop_assert!(dec.f1.values.iter().all(|&v| v >= -1e-9));
        prop_assert!(dec.holds());
    }

    #[test]
    fn dilation_keeps_frequencies(delta in 0.01f64..0.5, rho in 0.01f64..1.0) {
        let b = BohrSet::new(2, vec![vec![1, 3]], delta).unwrap();
        let d = b.dilate(rho);
        prop_assert_eq!(&d.gamma, &b.gamma);
        prop_assert!((d.delta - rho * delta).abs() < 1e-15);
    }
}

/// Deterministic pseudo-random value in `[0, 1]` at a point.
fn hashed_value(x: &[f64], seed: u64) -> f64 {
    let h = (x[0] * 7919.0 + x[1] * 104_729.0 + seed as f64 * 0.618).sin() * 43_758.545_3;
    h - h.floor()
}
