use expfun_lab::charstats::{empirical_cf, ks_critical_value, ks_distance_cdf, ks_distance_two_sample, linear_grid};
use expfun_lab::expfun::{estimate_cpp_series, estimate_euler, EulerOptions};
use expfun_lab::levy_spec::{DensityFamily, LevyMeasure, LevyTriplet};
use expfun_lab::oracles::{
    brownian_xi_case, continuity_counterexample_spec, dependent_pair, dufresne_median, ou_normal_case,
    poisson_product_cf, poisson_product_residual, poisson_xi_product_check, stationary_levy_tail,
};
use expfun_lab::pathsim::{RngStream, Scheme};
use expfun_lab::relations::invert_eta;
use num_complex::Complex64;
use proptest::prelude::*;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    0.5 * (s[(s.len() - 1) / 2] + s[s.len() / 2])
}

#[test]
fn dufresne_law_matches_brute_force_simulation() {
    // μ = 3: mean 1/(2(μ − 1)) = 0.25.
    let case = brownian_xi_case(3.0).unwrap();
    let s = estimate_euler(&case.spec, &EulerOptions::default(), 40_000, RngStream::new(21)).unwrap();
    assert!((s.mean() - 0.25).abs() < 0.02 * 0.25, "mean {}", s.mean());
    let ks = ks_distance_cdf(&s.values, |x| case.cdf(x).unwrap()).unwrap();
    assert!(ks < 0.02, "ks {ks}");
    // μ = 1: infinite mean, median 1/(2 ln 2).
    let case = brownian_xi_case(1.0).unwrap();
    let want = dufresne_median(1.0).unwrap();
    assert!((want - 0.5 / 2f64.ln()).abs() < 1e-12);
    let opts = EulerOptions { horizon: Some(15.0), step: 2e-3, ..Default::default() };
    let s = estimate_euler(&case.spec, &opts, 50_000, RngStream::new(22)).unwrap();
    let m = median(&s.values);
    assert!((m - want).abs() < 0.02 * want, "median {m} vs {want}");
}

#[test]
fn dufresne_exact_sample_recovers_drift_exponent() {
    let case = brownian_xi_case(3.0).unwrap();
    let s = case.exact_sample(100_000, RngStream::new(23)).unwrap();
    let expfun_lab::levy_spec::DrivingSpec::IndependentXiEta { xi, .. } = &case.spec else { unreachable!() };
    let g = invert_eta(xi, &s, &linear_grid(-3.0, 3.0, 25)).unwrap();
    assert!(g.fraction_within(|u| Complex64::new(0.0, u), 4.0) >= 0.9);
}

#[test]
fn ou_exact_sampler_and_scaled_case() {
    let case = ou_normal_case(0.5, 2.0).unwrap();
    let s = case.exact_sample(20_000, RngStream::new(1)).unwrap();
    let ks = ks_distance_cdf(&s.values, |x| case.cdf(x).unwrap()).unwrap();
    assert!(ks < ks_critical_value(20_000, usize::MAX / 2, 0.001));
}

#[test]
fn poisson_product_checks() {
    let grid = linear_grid(-5.0, 5.0, 41);
    for eta in [LevyTriplet::deterministic(1.0), LevyTriplet::brownian(1.0)] {
        let s = estimate_cpp_series(&LevyTriplet::poisson(1.0), &eta, 1e-12, 100_000, RngStream::new(31)).unwrap();
        let r = poisson_xi_product_check(1.0, &eta, &s, &grid).unwrap();
        assert_eq!(r.estimate[20], Complex64::new(0.0, 0.0));
        assert!(r.fraction_within(4.0) == 1.0, "{:?}", r.z_scores());
        let p = poisson_product_residual(1.0, &eta, &s, &grid).unwrap();
        assert!(p.fraction_within(4.0) == 1.0, "{:?}", p.z_scores());
    }
}

#[test]
fn product_cf_matches_geometric_series_for_drift() {
    // η_t = t: V = Σ e^{−k}τ_k with τ_k ~ Exp(1), so φ = ∏ 1/(1 − iue^{−k}).
    let eta = LevyTriplet::deterministic(1.0);
    for u in [0.3, 1.0, 4.0] {
        let direct: Complex64 = (0..=30).map(|k| 1.0 / Complex64::new(1.0, -u * (-(k as f64)).exp())).product();
        assert!((poisson_product_cf(1.0, &eta, u).unwrap() - direct).norm() < 1e-14);
    }
}

#[test]
fn dependent_pair_laws_agree() {
    let n = 100_000;
    let crit = 0.012f64.min(ks_critical_value(n, n, 0.01) * 1.65);
    for eta in [LevyTriplet::deterministic(1.0), LevyTriplet::brownian(1.0)] {
        let (a, b) = dependent_pair(eta).unwrap();
        let opts = EulerOptions { scheme: Some(Scheme::EventDriven), ..Default::default() };
        let sa = estimate_euler(&a, &opts, n, RngStream::new(41)).unwrap();
        let sb = estimate_euler(&b, &EulerOptions::default(), n, RngStream::new(42)).unwrap();
        let ks = ks_distance_two_sample(&sa.values, &sb.values).unwrap();
        assert!(ks < crit, "ks {ks}");
    }
}

#[test]
fn dependent_pair_marginal_is_poisson() {
    let (_, b) = dependent_pair(LevyTriplet::brownian(1.0)).unwrap();
    let expfun_lab::levy_spec::DrivingSpec::JointCompoundPoisson(j) = b else { unreachable!() };
    let chi = j.xi_marginal().unwrap();
    let p = LevyTriplet::poisson(1.0);
    for u in [0.5, 1.0, 3.0] {
        assert_eq!(chi.exponent(u).unwrap(), p.exponent(u).unwrap());
    }
}

#[test]
fn tail_formula_is_half_log_n() {
    for n in [2u32, 3, 4, 8, 16] {
        let t = stationary_levy_tail(continuity_counterexample_spec(n).unwrap().nu()).unwrap();
        let want = 0.5 * (n as f64).ln();
        assert!((t - want).abs() <= 4.0 * f64::EPSILON * want, "n={n}: {t} vs {want}");
    }
    assert_eq!(stationary_levy_tail(continuity_counterexample_spec(0).unwrap().nu()).unwrap(), 0.0);
    let log_tail = LevyMeasure::from_family(DensityFamily::LogTail { c: 1.0, lower: 2.0 }).unwrap();
    assert_eq!(stationary_levy_tail(&log_tail).unwrap(), f64::INFINITY);
    let exp = LevyMeasure::from_family(DensityFamily::Exponential { mass: 1.0, rate: 1.0 }).unwrap();
    // ∫_1^∞ log y e^{−y} dy = E₁(1) ≈ 0.219383934395520.
    assert!((stationary_levy_tail(&exp).unwrap() - 0.219_383_934_395_520).abs() < 1e-10);
}

#[test]
fn input_laws_converge_while_tail_diverges() {
    let limit = continuity_counterexample_spec(0).unwrap();
    let mut gaps = Vec::new();
    let mut tails = Vec::new();
    for n in [2u32, 4, 8, 16] {
        let t = continuity_counterexample_spec(n).unwrap();
        gaps.push((t.exponent(1.0).unwrap().exp() - limit.exponent(1.0).unwrap().exp()).norm());
        tails.push(stationary_levy_tail(t.nu()).unwrap());
    }
    // |e^a − e^b| ≤ |a − b| = |cos nⁿ − cos 1|/n on Re ≤ 0: an O(1/n)
    // envelope, not a monotone sequence.
    for (g, n) in gaps.iter().zip([2.0, 4.0, 8.0, 16.0]) {
        assert!(*g <= 2.0 / n, "{gaps:?}");
    }
    assert!(tails.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn stationary_ou_cf_is_gaussian() {
    let case = ou_normal_case(1.0, 1.0).unwrap();
    let s = case.exact_sample(50_000, RngStream::new(2)).unwrap();
    let g = linear_grid(-3.0, 3.0, 13);
    let cf = empirical_cf(&s.values, &g).unwrap();
    for (i, &u) in g.iter().enumerate() {
        assert!((cf.estimate[i] - Complex64::new((-0.5 * u * u).exp(), 0.0)).norm() < 5.0 * cf.stderr[i] + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_is_additive_over_atom_unions(
        a in proptest::collection::vec((0.1f64..50.0, 0.01f64..2.0), 1..6),
        b in proptest::collection::vec((-50.0f64..50.0, 0.01f64..2.0), 1..6),
    ) {
        let na = LevyMeasure::atoms(a.clone()).unwrap();
        let nb = LevyMeasure::atoms(b.clone()).unwrap();
        let nab = LevyMeasure::atoms(a.into_iter().chain(b)).unwrap();
        let lhs = stationary_levy_tail(&nab).unwrap();
        let rhs = stationary_levy_tail(&na).unwrap() + stationary_levy_tail(&nb).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn tail_scales_linearly(c in 0.01f64..10.0, n in 2u32..20) {
        let nu = continuity_counterexample_spec(n).unwrap().nu().clone();
        let scaled = LevyMeasure::atoms(nu.as_atoms().unwrap().iter().map(|a| (a.location, c * a.mass))).unwrap();
        let lhs = stationary_levy_tail(&scaled).unwrap();
        prop_assert!((lhs - c * stationary_levy_tail(&nu).unwrap()).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
