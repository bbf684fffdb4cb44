use confdimlab::approx::Side;
use confdimlab::confdim::{
    estimate_confdim, fit_decay_rate, ConfdimError, DecaySeries, ModulusSeries, SeriesSource,
    SyntheticSeries, DEFAULT_EPS_RATE,
};
use confdimlab::modulus::{FamilyRecipe, SpaceSource};

fn crossing() -> FamilyRecipe {
    FamilyRecipe::Crossing(Side::Left, Side::Right)
}

#[test]
fn unit_square_crosses_near_two() {
    let levels: Vec<u32> = (1..=6).collect();
    let source = ModulusSeries::new(&SpaceSource::Grid, &levels, crossing(), 1e-4).unwrap();
    let est = estimate_confdim(&source, 1.5, 3.0, DEFAULT_EPS_RATE, 12).unwrap();
    assert!((1.8..=2.2).contains(&est.p_star), "p_star = {}", est.p_star);
    assert!(est.bracket.0 < est.p_star && est.p_star < est.bracket.1);
    assert!(est.bracket.1 - est.bracket.0 < 0.01);
}

#[test]
fn grid_modulus_at_two_is_flat() {
    let levels: Vec<u32> = (1..=5).collect();
    let source = ModulusSeries::new(&SpaceSource::Grid, &levels, crossing(), 1e-6).unwrap();
    let s = source.series(2.0).unwrap();
    for &(_, v) in &s.entries {
        assert!((v - 1.0).abs() < 1e-4, "{v}");
    }
    assert!((s.fitted_rate - 1.0).abs() < 1e-4);
}

#[test]
fn noisy_synthetic_rate_is_recovered() {
    for seed in 0..20 {
        for p in [1.7, 1.8, 2.0, 2.3] {
            let mut s = SyntheticSeries::new(1.7, (1..=12).collect());
            s.noise = 0.05;
            s.seed = seed;
            let series = s.series(p).unwrap();
            let truth = s.true_rate(p);
            assert!(
                (series.fitted_rate - truth).abs() < 0.03,
                "seed {seed} p {p}: {} vs {truth}",
                series.fitted_rate
            );
        }
    }
}

#[test]
fn planted_crossover_is_recovered() {
    let s = SyntheticSeries::new(1.5, (1..=6).collect());
    let est = estimate_confdim(&s, 1.1, 2.5, DEFAULT_EPS_RATE, 12).unwrap();
    assert!((est.p_star - 1.5).abs() < 0.05, "{}", est.p_star);
    assert!(est.bracket.1 - est.bracket.0 < 0.05);
    // every sample on the final bracket is classified consistently
    let lo = est.per_p.iter().find(|r| r.p == est.bracket.0).unwrap();
    let hi = est.per_p.iter().find(|r| r.p == est.bracket.1).unwrap();
    assert!(!lo.decaying && hi.decaying);
}

#[test]
fn exact_fits() {
    let halves = DecaySeries::new(2.0, vec![(0, 1.0), (1, 0.5), (2, 0.25), (3, 0.125)]).unwrap();
    assert!((halves.fitted_rate - 0.5).abs() < 1e-12);
    let flat = DecaySeries::new(2.0, vec![(1, 3.0), (2, 3.0), (3, 3.0)]).unwrap();
    assert!((fit_decay_rate(&flat).unwrap() - 1.0).abs() < 1e-12);
    let zero = DecaySeries::new(2.0, vec![(1, 3.0), (2, 0.0), (3, 0.0)]).unwrap();
    assert_eq!(zero.fitted_rate, 0.0);
    assert!(zero.zero_flagged);
    assert!(matches!(
        DecaySeries::new(2.0, vec![(1, 1.0), (2, 1.0)]),
        Err(ConfdimError::TooFewLevels(2))
    ));
}

#[test]
fn range_errors() {
    let s = SyntheticSeries::new(1.5, (1..=6).collect());
    assert!(matches!(
        estimate_confdim(&s, 1.0, 2.0, 0.05, 12),
        Err(ConfdimError::BadRange { .. })
    ));
    assert!(matches!(
        estimate_confdim(&s, 1.6, 2.0, 0.05, 12),
        Err(ConfdimError::NotBracketed { .. })
    ));
    assert!(matches!(
        estimate_confdim(&s, 1.1, 2.0, 1.5, 12),
        Err(ConfdimError::BadEpsRate(_))
    ));
}

#[test]
#[ignore = "several minutes: carpet levels up to 5 at every bisection point"]
fn carpet_crossover_is_sane() {
    let levels: Vec<u32> = (1..=5).collect();
    let source =
        ModulusSeries::new(&SpaceSource::Carpet, &levels, FamilyRecipe::LargeCurves, 1e-3).unwrap();
    let est = estimate_confdim(&source, 1.05, 3.0, DEFAULT_EPS_RATE, 6).unwrap();
    let upper = 8f64.ln() / 3f64.ln() + 0.1;
    assert!(est.p_star > 1.0 && est.p_star < upper, "{}", est.p_star);
}
