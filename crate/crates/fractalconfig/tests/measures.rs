use fractalconfig::bump::Profile;
use fractalconfig::grid::unflatten;
use fractalconfig::measures::*;
use proptest::prelude::*;

/// Brute-force ball masses: every centre against every cell.
fn scan_ball_masses(mu: &GridMeasure, r: f64) -> Vec<f64> {
    let w = mu.cell_width();
    let n = mu.n;
    let mut a = vec![0usize; n];
    let mut b = vec![0usize; n];
    (0..mu.mass.len())
        .map(|x| {
            unflatten(x, mu.res, n, &mut a);
            let mut total = 0.0;
            for (y, &m) in mu.mass.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                unflatten(y, mu.res, n, &mut b);
                let d2: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(p, q)| ((*p as f64 - *q as f64) * w).powi(2))
                    .sum();
                if d2 <= r * r * (1.0 + 1e-12) {
                    total += m;
                }
            }
            total
        })
        .collect()
}

#[test]
fn full_keep_is_uniform() {
    let mu = build_cantor_measure(&CantorSpec::new(1, 2, 2, 3, 0)).unwrap();
    assert_eq!(mu.res, 8);
    assert!(mu.mass.iter().all(|&m| m == 1.0 / 8.0));
    let mu2 = build_cantor_measure(&CantorSpec::new(2, 4, 16, 2, 9)).unwrap();
    assert_eq!(
        mu2.mass,
        GridMeasure::uniform(2, 16, SUPPORT_HALFWIDTH).mass
    );
}

#[test]
fn single_generation_keeps_two_of_four() {
    let mu = build_cantor_measure(&CantorSpec::new(1, 4, 2, 1, 7)).unwrap();
    let kept: Vec<f64> = mu.mass.iter().cloned().filter(|&m| m > 0.0).collect();
    assert_eq!(kept, vec![0.5, 0.5]);
    assert!((mu.target_dimension.unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn cantor_dimension_fit_matches_scan() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 2, 3, 4, 42)).unwrap();
    assert_eq!(mu.support().len(), 81);
    assert!(mu
        .support()
        .iter()
        .all(|&i| (mu.mass[i] - 1.0 / 81.0).abs() < 1e-15));
    let report = certify_ball_decay(&mu, 1.585).unwrap();
    for (r, m) in report.radii.iter().zip(&report.max_ball_mass) {
        let scan = scan_ball_masses(&mu, *r).into_iter().fold(0.0, f64::max);
        assert!((scan - m).abs() < 1e-12, "radius {r}: fft {m} scan {scan}");
    }
    let target = 3f64.ln() / 2f64.ln();
    let deep = build_cantor_measure(&CantorSpec::new(2, 2, 3, 7, 42)).unwrap();
    let fit = certify_ball_decay(&deep, 1.585).unwrap().fitted_alpha;
    assert!((fit - target).abs() < 0.15, "fitted {fit}");
}

#[test]
fn cantor_half_dimension_constant() {
    let spec = CantorSpec {
        halfwidth: 0.5,
        ..CantorSpec::new(1, 4, 2, 5, 3)
    };
    let mu = build_cantor_measure(&spec).unwrap();
    let report = certify_ball_decay(&mu, 0.5).unwrap();
    let scan_worst = report
        .radii
        .iter()
        .map(|&r| scan_ball_masses(&mu, r).into_iter().fold(0.0, f64::max) * r.powf(-0.5))
        .fold(0.0, f64::max);
    assert!((scan_worst - report.worst_ratio).abs() < 1e-12);
    assert!(report.worst_ratio <= 4.0, "D = {}", report.worst_ratio);
    assert!(*report.radii.last().unwrap() >= 4f64.powi(-5) * (1.0 - 1e-12));
    assert!(!report.small_radius_blowup);
}

#[test]
fn uniform_ratio_is_scale_free() {
    let mu = GridMeasure::uniform(2, 64, SUPPORT_HALFWIDTH);
    let report = certify_ball_decay(&mu, 2.0).unwrap();
    let side = 2.0 * SUPPORT_HALFWIDTH;
    let bound = std::f64::consts::PI / (side * side);
    for (r, ratio) in report.radii.iter().zip(&report.ratios) {
        if *r >= 8.0 * mu.cell_width() {
            assert!(*ratio <= bound * 1.1, "r {r}: {ratio} vs {bound}");
        }
    }
}

#[test]
fn point_mass_blows_up() {
    let mu = GridMeasure::point_mass(1, 256, SUPPORT_HALFWIDTH);
    let report = certify_ball_decay(&mu, 0.5).unwrap();
    assert!(report.small_radius_blowup);
    assert!(report.ratios.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn smooth_measure_normalized() {
    let mu = build_smooth_measure(1, Profile::GaussianBump, 64, SMOOTH_HALFWIDTH).unwrap();
    assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    assert!(build_smooth_measure(2, Profile::GaussianBump, 64, SMOOTH_HALFWIDTH).is_ok());
    assert!("cosine".parse::<Profile>().is_err());
}

#[test]
fn parameter_and_resolution_errors() {
    assert!(build_cantor_measure(&CantorSpec::new(1, 4, 5, 2, 0)).is_err());
    assert!(build_cantor_measure(&CantorSpec::new(1, 4, 0, 2, 0)).is_err());
    let coarse = CantorSpec::new(1, 4, 2, 3, 0).with_res(16);
    assert!(matches!(
        build_cantor_measure(&coarse),
        Err(fractalconfig::Error::Resolution(_))
    ));
    assert!(certify_ball_decay(&GridMeasure::uniform(1, 8, 0.5), 1.5).is_err());
    assert!(certify_ball_decay(&GridMeasure::uniform(1, 8, 0.5), 0.0).is_err());
}

#[test]
fn mollify_identity_cases() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 2, 3, 4, 42)).unwrap();
    let w = mu.cell_width();
    for p in [Profile::DeltaLike, Profile::GaussianBump] {
        let out = mollify(&mu, &MollifierSpec::new(p, w)).unwrap();
        let tv: f64 = out
            .mass
            .iter()
            .zip(&mu.mass)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(tv < 1e-9);
    }
    assert!(matches!(
        mollify(&mu, &MollifierSpec::new(Profile::GaussianBump, w / 2.0)),
        Err(fractalconfig::Error::Resolution(_))
    ));
}

#[test]
fn mollified_point_mass_is_sampled_profile() {
    let mu = GridMeasure::point_mass(1, 256, 0.5);
    let out = mollify(&mu, &MollifierSpec::new(Profile::GaussianBump, 0.01)).unwrap();
    let kernel = sampled_kernel(Profile::GaussianBump, 0.01, mu.cell_width());
    let reach = kernel.len() / 2;
    let at = out.res / 2;
    for (i, k) in kernel.iter().enumerate() {
        assert!((out.mass[at - reach + i] - k).abs() < 1e-15);
    }
    assert!((out.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn mollified_cantor_density_bound() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 2, 3, 4, 42)).unwrap();
    let eps = 2f64.powi(-6);
    let out = mollify(&mu, &MollifierSpec::new(Profile::GaussianBump, eps)).unwrap();
    assert!((out.total_mass() - 1.0).abs() < 1e-9);
    // Direct convolution oracle with the same sampled kernel.
    let kernel = sampled_kernel(Profile::GaussianBump, eps, mu.cell_width());
    let reach = kernel.len() as isize / 2;
    let res = out.res as isize;
    let off = (out.res - mu.res) as isize / 2;
    let mut direct = vec![0.0; out.mass.len()];
    for (flat, &m) in mu.mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (i, j) = (
            (flat / mu.res) as isize + off,
            (flat % mu.res) as isize + off,
        );
        for (a, ka) in kernel.iter().enumerate() {
            for (b, kb) in kernel.iter().enumerate() {
                let (p, q) = (i + a as isize - reach, j + b as isize - reach);
                if p >= 0 && q >= 0 && p < res && q < res {
                    direct[(p * res + q) as usize] += m * ka * kb;
                }
            }
        }
    }
    for (a, b) in out.mass.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-15);
    }
    // Density bound: a mollified ball mass over the kernel's cell volume.
    let report = certify_ball_decay(&mu, 3f64.ln() / 2f64.ln()).unwrap();
    let sup_density = out.mass.iter().cloned().fold(0.0, f64::max) / out.cell_volume();
    let bound = report.d_const
        * eps.powf(report.alpha)
        * kernel.iter().cloned().fold(0.0, f64::max).powi(2)
        / out.cell_volume();
    assert!(sup_density <= bound * 4.0, "{sup_density} vs {bound}");
}

#[test]
fn ball_mass_monotone_in_radius() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 4, 7, 2, 5)).unwrap();
    let radii = [0.004, 0.008, 0.016, 0.05];
    let masses: Vec<Vec<f64>> = radii.iter().map(|&r| ball_masses(&mu, r)).collect();
    for w in masses.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| *a <= b + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cantor_is_probability_and_deterministic(n in 1usize..3, m in 2usize..5, g in 1u32..3, seed in 0u64..1000, keep_frac in 0.0f64..1.0) {
        let children = m.pow(n as u32);
        let keep = 1 + ((children - 1) as f64 * keep_frac) as usize;
        let spec = CantorSpec::new(n, m, keep, g, seed);
        match build_cantor_measure(&spec) {
            Ok(mu) => {
                prop_assert!((mu.total_mass() - 1.0).abs() < 1e-12);
                prop_assert!(mu.mass.iter().all(|&x| x >= 0.0));
                let again = build_cantor_measure(&spec).unwrap();
                prop_assert_eq!(mu.mass.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), again.mass.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            }
            Err(e) => prop_assert!(!m.pow(g).is_power_of_two(), "{e}"),
        }
    }

    #[test]
    fn mollify_preserves_mass(seed in 0u64..500, cells in 1usize..6) {
        let mu = build_cantor_measure(&CantorSpec::new(1, 4, 3, 3, seed)).unwrap();
        let eps = mu.cell_width() * cells as f64;
        let out = mollify(&mu, &MollifierSpec::new(Profile::GaussianBump, eps)).unwrap();
        prop_assert!((out.total_mass() - 1.0).abs() < 1e-9);
    }
}
