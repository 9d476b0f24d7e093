use fractalconfig::bump::Profile;
use fractalconfig::fourier::*;
use fractalconfig::grid::GridFunction;
use fractalconfig::measures::*;
use fractalconfig::patterns::fixtures::*;
use fractalconfig::transference::*;
use fractalconfig::Error;
use proptest::prelude::*;

fn certificates(mu: &GridMeasure, alpha: f64, beta: f64) -> (BallDecayReport, FourierDecayReport) {
    let a = certify_ball_decay(mu, alpha).unwrap();
    let b = certify_fourier_decay(&fourier_table(mu, 16, 1.0).unwrap(), beta).unwrap();
    (a, b)
}

fn cantor_family(keep: usize) -> GridMeasure {
    build_cantor_measure(&CantorSpec::new(2, 8, keep, 3, 7)).unwrap()
}

fn assert_split_invariants(s: &TransferenceSplit) {
    assert!(
        s.consistency_defect() <= 1e-9,
        "defect {}",
        s.consistency_defect()
    );
    for i in 0..s.mu_hat.len() {
        let cap = 2.0 * s.mu_hat.values[i].norm() + 1e-9;
        assert!(s.mu1_hat.values[i].norm() <= cap);
        assert!(s.mu2_hat.values[i].norm() <= cap);
    }
    assert!((s.mu1.total_mass() - 1.0).abs() <= 1e-9);
    assert!(s.density_bounded(), "{} > {}", s.c1, s.c1_bound);
}

#[test]
fn grid_split_on_coarse_cantor() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 8, 20, 3, 7)).unwrap();
    let (a, b) = certificates(&mu, mu.target_dimension.unwrap(), 0.5);
    let s = split_measure(&mu, &a, &b, &SplitOptions::default()).unwrap();
    assert_eq!(s.mode, SplitMode::Grid);
    assert!((s.log_l - 1.0 / (2.0 - a.alpha)).abs() < 1e-15);
    assert_split_invariants(&s);
    assert!(s.sup_bound > 0.0);
    assert!(
        s.factor_constant <= 2.0 * std::f64::consts::PI / 16.0 * 1.05,
        "{}",
        s.factor_constant
    );
}

#[test]
fn cantor_family_remainder_decays() {
    let mut previous = f64::INFINITY;
    for keep in [52, 58, 63] {
        let mu = cantor_family(keep);
        let (a, b) = certificates(&mu, mu.target_dimension.unwrap(), 0.5);
        let s = split_measure(&mu, &a, &b, &SplitOptions::default()).unwrap();
        assert_eq!(s.mode, SplitMode::Analytic);
        assert_split_invariants(&s);
        assert!(
            s.sup_bound < previous,
            "keep {keep}: {} vs {previous}",
            s.sup_bound
        );
        previous = s.sup_bound;
    }
}

#[test]
fn remainder_small_beyond_the_transition_frequency() {
    let mu = cantor_family(52);
    let (a, b) = certificates(&mu, 1.9, 0.5);
    let opts = SplitOptions {
        xi_max: 16,
        spacing: 256.0,
        mode: SplitMode::Analytic,
    };
    let s = split_measure(&mu, &a, &b, &opts).unwrap();
    let threshold = s.l().powf(2.0 / 2.5);
    let mut checked = 0;
    for i in 0..s.mu_hat.len() {
        let r = s.mu_hat.radius(i);
        let full = s.mu_hat.values[i].norm();
        let rest = s.mu2_hat.values[i].norm();
        assert!(rest <= full * (r / s.l()).min(1.0) * 2.0 * std::f64::consts::PI / 16.0 + 1e-15);
        if r >= threshold {
            assert!(rest <= full / 2.0);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn smooth_measure_has_small_remainder() {
    let mu = build_smooth_measure(2, Profile::GaussianBump, 64, SMOOTH_HALFWIDTH).unwrap();
    let (a, b) = certificates(&mu, 1.0, 1.0);
    let grid = split_measure(
        &mu,
        &a,
        &b,
        &SplitOptions {
            mode: SplitMode::Grid,
            ..Default::default()
        },
    )
    .unwrap();
    let analytic = split_measure(
        &mu,
        &a,
        &b,
        &SplitOptions {
            mode: SplitMode::Analytic,
            ..Default::default()
        },
    )
    .unwrap();
    assert_split_invariants(&grid);
    let low = (0..grid.mu_hat.len())
        .filter(|&i| grid.mu_hat.radius(i) <= 1.0)
        .map(|i| grid.mu_hat.values[i].norm());
    let low_sup = low.fold(0.0, f64::max);
    assert!(
        grid.sup_bound <= 0.1 * low_sup,
        "{} vs {low_sup}",
        grid.sup_bound
    );
    assert!(analytic.sup_bound <= 0.1 * low_sup);
}

#[test]
fn resolution_ceiling() {
    let mu = cantor_family(52);
    let ceiling = max_grid_alpha(&mu).unwrap();
    let w = mu.cell_width();
    let expected = 2.0 - 1.0 / (1.0 / (16.0 * 2f64.sqrt() * w)).ln();
    assert!((ceiling - expected).abs() < 1e-12);
    let grid = SplitOptions {
        mode: SplitMode::Grid,
        ..Default::default()
    };
    let (a, b) = certificates(&mu, ceiling, 0.5);
    assert_eq!(
        split_measure(&mu, &a, &b, &grid).unwrap().mode,
        SplitMode::Grid
    );
    let (a, b) = certificates(&mu, 1.99, 0.5);
    match split_measure(&mu, &a, &b, &grid) {
        Err(Error::Resolution(msg)) => assert!(msg.contains(&format!("{ceiling:.6}")), "{msg}"),
        other => panic!("expected a resolution error, got {other:?}"),
    }
    let (a, b) = certificates(&mu, 2.0, 0.5);
    assert!(matches!(
        split_measure(&mu, &a, &b, &SplitOptions::default()),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn point_mass_is_refused() {
    let mu = GridMeasure::point_mass(2, 64, SUPPORT_HALFWIDTH);
    let (a, b) = certificates(&mu, 1.5, 0.5);
    let spec = showcase_spec(1.0 / 16.0);
    let out = positivity_pipeline(&spec, &mu, &a, &b, &PipelineOptions::default());
    assert!(matches!(out, Err(Error::Certificate(_))), "{out:?}");
}

#[test]
fn dense_case_is_positive_and_witnessed() {
    let mu = GridMeasure::uniform(2, 64, SUPPORT_HALFWIDTH);
    let (a, b) = certificates(&mu, 1.999, 1.9);
    let spec = showcase_spec(1.0 / 16.0);
    let r = positivity_pipeline(&spec, &mu, &a, &b, &PipelineOptions::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Positive);
    assert!(r.positive_with_margin(2.0));
    assert!(r.main_term > 0.0 && r.tails.is_finite());
    let w = r
        .search
        .as_ref()
        .and_then(|s| s.witness.clone())
        .expect("dense case has a witness");
    assert!(w.y.iter().all(|v| v.abs() > 0.0));
    let json = r.verdict_json();
    for key in ["main_term", "error_terms", "tails", "verdict", "witness"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["verdict"], "positive");
}

#[test]
fn search_on_full_and_single_cell_sets() {
    let spec = showcase_spec(1.0 / 16.0).excluding_coordinate_planes();
    let full = CellSet::from_support(&GridMeasure::uniform(2, 32, SUPPORT_HALFWIDTH));
    let tol = full.cell_width() * 2f64.sqrt();
    let opts = SearchOptions {
        y_nodes: 16,
        budget: u64::MAX,
    };
    let found = pattern_search(&spec, &full, tol, &opts).unwrap();
    let w = found.witness.expect("full cube contains configurations");
    assert_eq!(w.x, full.center(0));
    assert!(found.complete);
    // First y in grid order that keeps every image inside the cube and off the excluded planes.
    let c = 1.0 / 16.0;
    let h = 2.0 * c / 16.0;
    assert!(w
        .y
        .iter()
        .all(|&v| v > tol && ((v + c) / h - 0.5).fract().abs() < 1e-9));
    for p in &w.images {
        assert!(full.near(p, tol));
    }

    let single = CellSet::from_support(&GridMeasure::point_mass(2, 32, SUPPORT_HALFWIDTH));
    let none = pattern_search(&spec, &single, tol, &opts).unwrap();
    assert!(none.witness.is_none() && none.complete);

    let capped = pattern_search(
        &spec,
        &single,
        tol,
        &SearchOptions {
            y_nodes: 16,
            budget: 10,
        },
    )
    .unwrap();
    assert!(!capped.complete || capped.examined <= 16u64.pow(3));
    assert!(pattern_search(&spec, &full, tol / 2.0, &opts).is_err());
}

#[test]
fn cantor_witness_lies_in_the_set() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 4, 15, 4, 10)).unwrap();
    let cells = CellSet::from_support(&mu);
    let tol = cells.cell_width() * 2f64.sqrt();
    let spec = showcase_spec(1.0 / 16.0).excluding_coordinate_planes();
    let report = pattern_search(&spec, &cells, tol, &SearchOptions::default()).unwrap();
    let w = report.witness.clone().expect("witness");
    assert!(w.y.iter().all(|v| v.abs() > tol));
    let shifts = spec.shifts_unchecked(&w.y);
    for (img, s) in w.images[1..].iter().zip(&shifts) {
        for a in 0..2 {
            assert!((img[a] - w.x[a] - s[a]).abs() < 1e-15);
        }
    }
    // Direct membership: some support cell centre within tol of every image.
    for p in &w.images {
        let hit = cells.cells().into_iter().any(|c| {
            let centre = cells.center(c);
            centre.iter().zip(p).all(|(a, b)| (a - b).abs() <= tol)
        });
        assert!(hit, "{p:?}");
    }
    let again = pattern_search(&spec, &cells, tol, &SearchOptions::default()).unwrap();
    assert_eq!(report, again);
}

#[test]
fn pairing_mass_identity_and_stabilization() {
    let mu = build_cantor_measure(&CantorSpec::new(2, 4, 12, 2, 3)).unwrap();
    let spec = showcase_spec(1.0 / 16.0);
    let eps = 4.0 * mu.cell_width();
    let p = config_pairing(&spec, &mu, None, eps).unwrap();
    let direct = mollified_lambda(&spec, &mu, eps).unwrap();
    assert!(
        (p.value - direct).abs() <= 1e-9 * direct.abs().max(1.0),
        "{} vs {direct}",
        p.value
    );
    assert!(p.value > 0.0 && p.coarse > 0.0);
    assert!(p.stabilization.is_finite());

    let zero = GridFunction::zeros(5, 8, 0.5);
    assert_eq!(
        config_pairing(&spec, &mu, Some(&zero), eps).unwrap().value,
        0.0
    );
    assert!(config_pairing(&spec, &mu, None, mu.cell_width() / 2.0).is_err());
}

#[test]
fn pairing_off_the_configuration_set_vanishes() {
    let mu = GridMeasure::uniform(2, 8, SUPPORT_HALFWIDTH);
    let spec = showcase_spec(1.0 / 16.0);
    // A weight living near x = (0.15, 0.15), vanishing within 0.02 of the support box.
    let weight = GridFunction::from_fn(5, 12, 0.25, |z| {
        let d = (z[0] - 0.15).abs().max((z[1] - 0.15).abs());
        (1.0 - d / 0.0625).max(0.0)
    });
    let wide = config_pairing(&spec, &mu, Some(&weight), 0.0625).unwrap();
    let narrow = config_pairing(&spec, &mu, Some(&weight), 0.015625).unwrap();
    assert!(wide.value > 0.0);
    assert!(narrow.value.abs() < 1e-12 && narrow.value < wide.value);
}

#[test]
fn slab_mass_scales_with_width() {
    let mu = GridMeasure::uniform(2, 32, SUPPORT_HALFWIDTH);
    let spec = showcase_spec(1.0 / 16.0);
    let eps = mu.cell_width();
    let plane = Hyperplane::new(vec![0.0, 0.0, 1.0, 0.0, 0.0], 0.0).unwrap();
    let w0 = 1.0 / 64.0;
    let masses: Vec<f64> = [w0, w0 / 2.0, w0 / 4.0]
        .iter()
        .map(|&w| hyperplane_slab_mass(&spec, &mu, &plane, w, eps).unwrap())
        .collect();
    for pair in masses.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!((ratio - 0.5).abs() <= 0.5 * 0.15, "ratio {ratio}");
    }
    let full = mollified_lambda(&spec, &mu, eps).unwrap();
    let covering = hyperplane_slab_mass(&spec, &mu, &plane, 1.0, eps).unwrap();
    assert!((covering - full).abs() <= 1e-12 * full);
    let far = Hyperplane::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
    assert_eq!(
        hyperplane_slab_mass(&spec, &mu, &far, 0.01, eps).unwrap(),
        0.0
    );
    assert!(Hyperplane::new(vec![0.0; 5], 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_is_consistent(seed in 0u64..1000, keep in 8usize..16, alpha_gap in 0.01f64..0.9) {
        let mu = build_cantor_measure(&CantorSpec::new(2, 4, keep, 3, seed)).unwrap();
        let (a, b) = certificates(&mu, 2.0 - alpha_gap, 0.5);
        let s = split_measure(&mu, &a, &b, &SplitOptions { xi_max: 8, ..Default::default() }).unwrap();
        prop_assert!(s.consistency_defect() <= 1e-9);
        prop_assert!((s.mu1.total_mass() - 1.0).abs() <= 1e-9);
        for i in 0..s.mu_hat.len() {
            prop_assert!(s.mu2_hat.values[i].norm() <= 2.0 * s.mu_hat.values[i].norm() + 1e-9);
        }
    }

    #[test]
    fn slab_profile_is_flat_top(t in -3.0f64..3.0) {
        let v = slab_profile(t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, slab_profile(-t));
        if t.abs() <= 1.0 { prop_assert_eq!(v, 1.0); }
        if t.abs() >= 2.0 { prop_assert_eq!(v, 0.0); }
    }
}
