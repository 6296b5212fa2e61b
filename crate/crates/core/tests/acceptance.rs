//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::time::Instant;

use expfun_lab::charstats::{ks_critical_value, ks_distance_cdf, ks_distance_two_sample, linear_grid};
use expfun_lab::expfun::{estimate_cpp_series, estimate_euler, EulerOptions, ExpFunSample};
use expfun_lab::generator::{apply_generator_ul, apply_generator_xieta, stationarity_residual, TestFunction};
use expfun_lab::harness::{continuity_suite, run_experiment, ContinuityFamily, ExperimentConfig};
use expfun_lab::levy_spec::{xi_eta_to_ul, DensityFamily, DrivingSpec, LevyMeasure, LevyTriplet};
use expfun_lab::oracles::{
    brownian_xi_case, continuity_counterexample_spec, dependent_pair, ou_normal_case, poisson_product_residual,
    poisson_xi_product_check, stationary_levy_tail,
};
use expfun_lab::pathsim::{RngStream, Scheme};
use expfun_lab::relations::{invert_eta, invert_xi, laplace_residual, residual_compact};
use expfun_lab::Result;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

const N: usize = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn event_driven() -> EulerOptions {
    EulerOptions { scheme: Some(Scheme::EventDriven), ..Default::default() }
}

fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

fn ou_normality() -> Result<Outcome> {
    let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::brownian(2.0));
    let opts = EulerOptions { horizon: Some(20.0), step: 1e-3, scheme: Some(Scheme::GridEuler), ..Default::default() };
    let s = estimate_euler(&spec, &opts, N, RngStream::new(101))?;
    let ks = ks_distance_cdf(&s.values, normal_cdf)?;
    outcome(ks < 0.01, format!("KS to N(0,1) = {ks:.5}"))
}

fn cpp_mean() -> Result<Outcome> {
    // V = Σ_k e^{−k} τ_k with τ_k ~ Exp(1): E V = Σ e^{−k}.
    let want: f64 = (0..200).map(|k| (-(k as f64)).exp()).sum();
    let xi = LevyTriplet::poisson(1.0);
    let eta = LevyTriplet::deterministic(1.0);
    let a = estimate_euler(&DrivingSpec::independent(xi.clone(), eta.clone()), &EulerOptions::default(), N, RngStream::new(102))?;
    let b = estimate_cpp_series(&xi, &eta, 1e-12, N, RngStream::new(103))?;
    let (ma, mb) = (a.mean(), b.mean());
    let joint = (a.mean_se().powi(2) + b.mean_se().powi(2)).sqrt();
    let pass = (ma - want).abs() < 0.01 * want && (mb - want).abs() < 0.01 * want && (ma - mb).abs() < 3.0 * joint;
    outcome(pass, format!("euler {ma:.5}, series {mb:.5}, target {want:.5}, gap {:.2} joint SE", (ma - mb).abs() / joint))
}

fn compact_identity() -> Result<Outcome> {
    let grid = linear_grid(-5.0, 5.0, 41);
    let ou = ou_normal_case(1.0, 1.0)?;
    let ou_sample = ou.exact_sample(N, RngStream::new(104)).expect("analytic law");
    let pd_xi = LevyTriplet::poisson(1.0);
    let pd_eta = LevyTriplet::deterministic(1.0);
    let pd_sample = estimate_cpp_series(&pd_xi, &pd_eta, 1e-12, N, RngStream::new(105))?;
    let jd_xi = LevyTriplet::from_drift(
        1.0,
        0.0,
        LevyMeasure::from_family(DensityFamily::TwoSidedExponential { mass: 1.0, rate: 3.0 })?,
    )?;
    let jd_eta = LevyTriplet::new(0.2, 0.5, LevyMeasure::atoms([(0.7, 0.4), (-1.5, 0.3)])?)?;
    let jd_sample =
        estimate_euler(&DrivingSpec::independent(jd_xi.clone(), jd_eta.clone()), &event_driven(), N, RngStream::new(106))?;
    let cases = [
        ("OU", ou.spec.to_ul()?, &ou_sample),
        ("Poisson-drift", xi_eta_to_ul(&pd_xi, &pd_eta, 0.0)?, &pd_sample),
        ("jump-diffusion", xi_eta_to_ul(&jd_xi, &jd_eta, 0.0)?, &jd_sample),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, ul, s) in &cases {
        let f = residual_compact(ul, s, &grid)?.fraction_within(4.0);
        pass &= f >= 0.95;
        detail.push(format!("{name} {f:.3}"));
    }
    let bad = residual_compact(&cases[0].1, &ou_sample.scaled(1.2), &grid)?;
    let max_z = bad.z_scores().into_iter().fold(0.0, f64::max);
    pass &= max_z > 10.0;
    outcome(pass, format!("within 4 SE: {}; corrupted max |z| = {max_z:.1}", detail.join(", ")))
}

fn inversion_round_trip() -> Result<Outcome> {
    let grid = linear_grid(-3.0, 3.0, 25);
    let xi = LevyTriplet::deterministic(1.0);
    let cases: [(&str, LevyTriplet, fn(f64) -> Complex64); 2] = [
        ("Brownian", LevyTriplet::brownian(2.0), |u| Complex64::new(-u * u, 0.0)),
        ("symmetric CPP", LevyTriplet::compound_poisson(1.0, &[(1.0, 0.5), (-1.0, 0.5)])?, |u| {
            Complex64::new(u.cos() - 1.0, 0.0)
        }),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, (name, eta, truth)) in cases.into_iter().enumerate() {
        let s = estimate_euler(&DrivingSpec::independent(xi.clone(), eta), &event_driven(), N, RngStream::new(107 + k as u64))?;
        let g = invert_eta(&xi, &s, &grid)?;
        let f = g.fraction_within(truth, 4.0);
        pass &= f >= 0.9;
        detail.push(format!("{name} {f:.3} of {} valid", g.valid_points().count()));
    }
    outcome(pass, detail.join(", "))
}

fn xi_inversion() -> Result<Outcome> {
    let eta = LevyTriplet::deterministic(1.0);
    let s = estimate_cpp_series(&LevyTriplet::poisson(2.0), &eta, 1e-12, N, RngStream::new(109))?;
    let g = invert_xi(&eta, &s, &linear_grid(-2.0, 2.0, 21))?;
    let truth = |u: f64| 2.0 * (Complex64::from_polar(1.0, -u) - 1.0);
    let valid = g.valid_points().count();
    let ok = g.valid_points().filter(|(u, p, se)| (p - truth(*u)).norm() <= 4.0 * se).count();
    outcome(ok == valid && valid > 0, format!("{ok} of {valid} valid points within 4 SE"))
}

fn laplace_identity() -> Result<Outcome> {
    let grid = linear_grid(0.0, 5.0, 21);
    let a_xi = LevyTriplet::deterministic(1.0);
    let a_eta = LevyTriplet::poisson(1.0);
    let a = estimate_euler(&DrivingSpec::independent(a_xi.clone(), a_eta.clone()), &EulerOptions::default(), N, RngStream::new(110))?;
    let b_xi = LevyTriplet::poisson(1.0);
    let b_eta = LevyTriplet::deterministic(1.0);
    let b = estimate_cpp_series(&b_xi, &b_eta, 1e-12, N, RngStream::new(111))?;
    let fa = laplace_residual(&a_xi, &a_eta, &a, &grid)?.fraction_within(4.0);
    let fb = laplace_residual(&b_xi, &b_eta, &b, &grid)?.fraction_within(4.0);
    outcome(fa == 1.0 && fb == 1.0, format!("within 4 SE: drift/Poisson {fa:.3}, Poisson/drift {fb:.3}"))
}

fn normal_sample(n: usize, sd: f64, seed: u64) -> Result<ExpFunSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    ExpFunSample::from_values(v, seed)
}

fn generator_agreement() -> Result<Outcome> {
    let xi = LevyTriplet::new(
        0.5,
        0.3,
        LevyMeasure::from_family(DensityFamily::TwoSidedExponential { mass: 1.0, rate: 3.0 })?,
    )?;
    let eta = LevyTriplet::new(0.2, 0.5, LevyMeasure::atoms([(0.7, 0.4), (-1.5, 0.3)])?)?;
    let ul = xi_eta_to_ul(&xi, &eta, 0.0)?;
    let mut gap: f64 = 0.0;
    for f in TestFunction::battery() {
        for i in 0..21 {
            let x = -3.0 + 0.3 * i as f64;
            gap = gap.max((apply_generator_xieta(&xi, &eta, &f, x)? - apply_generator_ul(&ul, &f, x)?).norm());
        }
    }
    let mut pass = gap < 1e-8;

    // Oracle pairs: spec with a sample of its stationary law.
    let ou = ou_normal_case(1.0, 1.0)?;
    let duf = brownian_xi_case(3.0)?;
    let pp_eta = LevyTriplet::deterministic(1.0);
    let pp_spec = DrivingSpec::independent(LevyTriplet::poisson(1.0), pp_eta.clone());
    let (dp_spec, _) = dependent_pair(LevyTriplet::brownian(1.0))?;
    let pairs = [
        ("ou-normal", ou.spec.clone(), ou.exact_sample(N, RngStream::new(112)).expect("analytic law")),
        ("dufresne", duf.spec.clone(), duf.exact_sample(N, RngStream::new(113)).expect("analytic law")),
        ("poisson-product", pp_spec, estimate_cpp_series(&LevyTriplet::poisson(1.0), &pp_eta, 1e-12, N, RngStream::new(114))?),
        ("dep-pair", dp_spec.clone(), estimate_euler(&dp_spec, &event_driven(), N, RngStream::new(115))?),
    ];
    let mut worst: f64 = 0.0;
    for (_, spec, s) in &pairs {
        for f in TestFunction::battery() {
            let (r, se) = stationarity_residual(spec, &f, s)?;
            worst = worst.max(r.norm() / se);
        }
    }
    pass &= worst <= 4.0;
    let wrong = normal_sample(N, 2.0, 116)?;
    let mut wrong_z: f64 = 0.0;
    for f in TestFunction::battery() {
        let (r, se) = stationarity_residual(&ou.spec, &f, &wrong)?;
        wrong_z = wrong_z.max(r.norm() / se);
    }
    pass &= wrong_z > 10.0;
    outcome(
        pass,
        format!(
            "form gap {gap:.1e}; worst oracle |z| {worst:.2} over {} pairs x 5 functions; wrong law |z| {wrong_z:.1}",
            pairs.len()
        ),
    )
}

fn tail_formula() -> Result<Outcome> {
    let mut pass = true;
    let mut worst_ulps: f64 = 0.0;
    for n in [2u32, 3, 4, 8, 16] {
        let t = stationary_levy_tail(continuity_counterexample_spec(n)?.nu())?;
        let want = 0.5 * (n as f64).ln();
        let ulps = (t - want).abs() / (f64::EPSILON * want);
        worst_ulps = worst_ulps.max(ulps);
        pass &= ulps <= 4.0;
    }
    // |φ_n(u) − φ_0(u)| ≤ |ψ_n(u) − ψ_0(u)| = |cos(nⁿu) − cos u|/n ≤ 2/n.
    let limit = continuity_counterexample_spec(0)?;
    let mut gaps = Vec::new();
    for n in [2u32, 4, 8, 16] {
        let t = continuity_counterexample_spec(n)?;
        let mut g: f64 = 0.0;
        for u in linear_grid(-5.0, 5.0, 41) {
            g = g.max((t.exponent(u)?.exp() - limit.exponent(u)?.exp()).norm());
        }
        pass &= g <= 2.0 / n as f64;
        gaps.push(format!("{g:.4}"));
    }
    outcome(pass, format!("tail within {worst_ulps:.1} ulp of ½ log n; sup CF gaps [{}] within 2/n", gaps.join(", ")))
}

fn decomposability() -> Result<Outcome> {
    let grid = linear_grid(-5.0, 5.0, 41);
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, (name, eta)) in [("drift", LevyTriplet::deterministic(1.0)), ("Brownian", LevyTriplet::brownian(1.0))]
        .into_iter()
        .enumerate()
    {
        let s = estimate_cpp_series(&LevyTriplet::poisson(1.0), &eta, 1e-12, N, RngStream::new(117 + k as u64))?;
        let a = poisson_xi_product_check(1.0, &eta, &s, &grid)?.fraction_within(4.0);
        let b = poisson_product_residual(1.0, &eta, &s, &grid)?.fraction_within(4.0);
        pass &= a == 1.0 && b == 1.0;
        let (first, second) = dependent_pair(eta)?;
        let sa = estimate_euler(&first, &event_driven(), N, RngStream::new(119 + k as u64))?;
        let sb = estimate_euler(&second, &EulerOptions::default(), N, RngStream::new(121 + k as u64))?;
        let ks = ks_distance_two_sample(&sa.values, &sb.values)?;
        let crit = ks_critical_value(N, N, 0.01);
        pass &= ks < crit;
        detail.push(format!("{name}: product {a:.2}/{b:.2}, pair KS {ks:.5} < {crit:.5}"));
    }
    outcome(pass, detail.join("; "))
}

fn continuity() -> Result<Outcome> {
    let xi = LevyTriplet::deterministic(1.0);
    let mut pass = true;
    let mut detail = Vec::new();
    let discont = ContinuityFamily::discont(&[2, 4, 8, 16])?;
    for delta in [0.5, 1.0, 2.0] {
        let r = continuity_suite(&discont, &xi, delta, 10_000, RngStream::new(123))?;
        pass &= r.verdict == "condition-violated: contcond6";
        detail.push(format!("δ={delta}: {}", r.verdict));
    }
    let drift = ContinuityFamily::drift_brownian(&[2, 4, 8, 16, 32, 64], 1.0)?;
    let r = continuity_suite(&drift, &xi, 1.0, 10_000, RngStream::new(124))?;
    let ks: Vec<f64> = r.rows.iter().map(|row| row.ks_to_limit).collect();
    let bounded = r.rows.iter().all(|row| row.cond_contcond6.is_finite() && row.cond_contcond1.is_finite());
    pass &= bounded
        && r.verdict == "consistent-with-continuity"
        && ks.windows(2).all(|w| w[1] < w[0])
        && *ks.last().unwrap() < 0.02;
    detail.push(format!("drift family: {}, KS {:?}", r.verdict, ks));
    outcome(pass, detail.join("; "))
}

fn reproducibility() -> Result<Outcome> {
    let configs = [
        r#"{"command":"simulate","spec":{"xi":{"drift":1},"eta":{"sigma2":2}},"n":5000,"step":0.01,"seed":5}"#,
        r#"{"command":"invert-eta","spec":{"xi":{"drift":1},"eta":{"drift":0,"nu":{"type":"atoms","atoms":[[1,0.5],[-1,0.5]]}}},"n":5000,"seed":5}"#,
        r#"{"command":"continuity","n":1000,"seed":5,"continuity":{"family":"discont","delta":1}}"#,
    ];
    let mut pass = true;
    let mut files = 0;
    for c in configs {
        let cfg = ExperimentConfig::from_json(c)?;
        let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
        let ra = run_experiment(&cfg, a.path())?;
        let rb = run_experiment(&cfg, b.path())?;
        for (fa, fb) in ra.data_files.iter().zip(&rb.data_files) {
            pass &= std::fs::read(fa)? == std::fs::read(fb)?;
            files += 1;
        }
    }
    outcome(pass && files > 0, format!("{files} CSV files byte-identical across repeated runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 11] = [
        ("OU normality", ou_normality),
        ("compound Poisson mean", cpp_mean),
        ("compact identity", compact_identity),
        ("inversion round-trip", inversion_round_trip),
        ("inversion of xi", xi_inversion),
        ("Laplace identity", laplace_identity),
        ("generator agreement", generator_agreement),
        ("exact tail formula", tail_formula),
        ("e^-1 decomposability", decomposability),
        ("continuity harness", continuity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
