use expfun_lab::generator::{
    apply_generator, apply_generator_ul, apply_generator_xieta, levy_generator, semigroup_estimate,
    stationarity_residual, TestFunction,
};
use expfun_lab::levy_spec::{xi_eta_to_ul, DensityFamily, DrivingSpec, LevyMeasure, LevyTriplet};
use expfun_lab::expfun::ExpFunSample;
use expfun_lab::pathsim::RngStream;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn jump_diffusion() -> (LevyTriplet, LevyTriplet) {
    let xi = LevyTriplet::new(
        0.5,
        0.3,
        LevyMeasure::from_family(DensityFamily::TwoSidedExponential { mass: 1.0, rate: 3.0 }).unwrap(),
    )
    .unwrap();
    let eta = LevyTriplet::new(0.2, 0.5, LevyMeasure::atoms([(0.7, 0.4), (-1.5, 0.3)]).unwrap()).unwrap();
    (xi, eta)
}

fn atomic_pair() -> (LevyTriplet, LevyTriplet) {
    let xi = LevyTriplet::new(0.4, 0.2, LevyMeasure::atoms([(0.5, 1.0), (-0.3, 0.5), (1.4, 0.2)]).unwrap()).unwrap();
    let eta = LevyTriplet::new(-0.1, 0.6, LevyMeasure::atoms([(2.0, 0.3), (-0.4, 0.6)]).unwrap()).unwrap();
    (xi, eta)
}

fn normal_sample(n: usize, sd: f64, seed: u64) -> ExpFunSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }).collect::<Vec<f64>>();
    ExpFunSample::from_values(v, seed).unwrap()
}

fn ou() -> DrivingSpec {
    DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::brownian(2.0))
}

#[test]
fn ul_and_xieta_forms_agree() {
    for (xi, eta) in [jump_diffusion(), atomic_pair()] {
        let ul = xi_eta_to_ul(&xi, &eta, 0.0).unwrap();
        for f in TestFunction::battery() {
            for i in 0..21 {
                let x = -3.0 + 0.3 * i as f64;
                let a = apply_generator_xieta(&xi, &eta, &f, x).unwrap();
                let b = apply_generator_ul(&ul, &f, x).unwrap();
                assert!((a - b).norm() < 1e-8, "{} at x={x}: {a} vs {b}", f.name());
            }
        }
    }
}

#[test]
fn constant_function_is_annihilated() {
    let (xi, eta) = jump_diffusion();
    let f = TestFunction::constant(2.5);
    let ul = xi_eta_to_ul(&xi, &eta, 0.0).unwrap();
    for x in [-4.0, 0.0, 0.3, 7.0] {
        assert_eq!(apply_generator_xieta(&xi, &eta, &f, x).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(apply_generator_ul(&ul, &f, x).unwrap(), Complex64::new(0.0, 0.0));
    }
}

#[test]
fn ou_generator_is_second_order_operator() {
    let spec = ou();
    let f = TestFunction::gaussian_bump();
    for i in 0..21 {
        let x = -4.0 + 0.4 * i as f64;
        let want = f.d2(x) - f.d1(x) * x;
        let got = apply_generator(&spec, &f, x).unwrap();
        assert!((got - want).norm() < 1e-14, "x={x}");
    }
}

#[test]
fn split_form_for_functions_vanishing_at_zero() {
    let (xi, eta) = jump_diffusion();
    let g = TestFunction::gaussian_bump();
    // f(x) = x e^{−x²/2}, f(0) = 0.
    let f = TestFunction::new(
        "x·gaussian",
        expfun_lab::generator::FunctionClass::SchwartzLike,
        f64::INFINITY,
        move |x| g.value(x) * x,
        |x: f64| Complex64::new((1.0 - x * x) * (-0.5 * x * x).exp(), 0.0),
        |x: f64| Complex64::new((x * x * x - 3.0 * x) * (-0.5 * x * x).exp(), 0.0),
    );
    let ft = f.compose_exp(1.0);
    for x in [0.2, 0.7, 1.0, 1.9, 3.5] {
        let full = apply_generator_xieta(&xi, &eta, &f, x).unwrap();
        let split = levy_generator(&eta, &f, x).unwrap() + levy_generator(&xi.negate(), &ft, x.ln()).unwrap();
        assert!((full - split).norm() < 1e-8, "x={x}: {full} vs {split}");
    }
}

#[test]
fn cutoff_limit_stabilises() {
    let (xi, eta) = atomic_pair();
    for x in [-1.0, 0.5, 2.0] {
        let vals: Vec<Complex64> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&n| apply_generator_xieta(&xi, &eta, &TestFunction::exp_iu(1.3, n), x).unwrap())
            .collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        for d in diffs.windows(2) {
            assert!(d[1] <= 0.5 * d[0] || d[1] < 1e-12, "x={x}: {diffs:?}");
        }
    }
}

#[test]
fn stationarity_residual_detects_wrong_law() {
    let spec = ou();
    let f = TestFunction::gaussian_bump();
    let (r, se) = stationarity_residual(&spec, &f, &normal_sample(100_000, 1.0, 11)).unwrap();
    assert!(r.norm() < 4.0 * se, "{r} {se}");
    let (r, se) = stationarity_residual(&spec, &f, &normal_sample(100_000, 2.0, 12)).unwrap();
    // ∫(f'' − xf') dN(0,s²) = (s² − 1)/(1 + s²)^{3/2}
    assert!((r.re - 3.0 / 5f64.powf(1.5)).abs() < 4.0 * se);
    assert!(r.norm() > 10.0 * se);
    let (r, se) = stationarity_residual(&spec, &TestFunction::constant(3.0), &normal_sample(100, 1.0, 1)).unwrap();
    assert_eq!((r, se), (Complex64::new(0.0, 0.0), 0.0));
}

#[test]
fn semigroup_difference_quotient_approaches_generator() {
    let spec = ou();
    let f = TestFunction::gaussian_bump();
    let x = 0.8;
    let af = apply_generator(&spec, &f, x).unwrap();
    let mut errs = Vec::new();
    for (k, t) in [0.2, 0.1, 0.05].into_iter().enumerate() {
        let (tf, se) = semigroup_estimate(&spec, &f, x, t, 400_000, RngStream::with_stream(5, k as u64)).unwrap();
        let err = ((tf - f.value(x)) / t - af).norm();
        errs.push((err, se / t));
    }
    // Bias is O(t); check monotone decrease of the bias beyond noise.
    for w in errs.windows(2) {
        assert!(w[1].0 < w[0].0 + 2.0 * (w[0].1 + w[1].1), "{errs:?}");
    }
    assert!(errs[2].0 < errs[0].0, "{errs:?}");
}

#[test]
fn feller_far_start() {
    let (r, _) =
        semigroup_estimate(&ou(), &TestFunction::compact_poly(), 1e6, 0.5, 2000, RngStream::new(3)).unwrap();
    assert_eq!(r, Complex64::new(0.0, 0.0));
    let (c, se) = semigroup_estimate(&ou(), &TestFunction::constant(1.5), 0.0, 1.0, 10, RngStream::new(3)).unwrap();
    assert_eq!((c.re, se), (1.5, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_linear(x in -4.0f64..4.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (xi, eta) = atomic_pair();
        let f = TestFunction::lorentzian();
        let g = TestFunction::smooth_bump();
        let (ca, cb) = (Complex64::new(a, 0.3), Complex64::new(b, -0.7));
        let h = TestFunction::combine(ca, &f, cb, &g);
        let lhs = apply_generator_xieta(&xi, &eta, &h, x).unwrap();
        let rhs = ca * apply_generator_xieta(&xi, &eta, &f, x).unwrap()
            + cb * apply_generator_xieta(&xi, &eta, &g, x).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn real_functions_have_real_generator(x in -5.0f64..5.0) {
        let (xi, eta) = jump_diffusion();
        for f in TestFunction::battery() {
            let v = apply_generator_xieta(&xi, &eta, &f, x).unwrap();
            prop_assert!(v.im.abs() < 1e-14);
        }
    }
}
