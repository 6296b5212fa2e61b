//! The GOU generator on test functions, Monte Carlo semigroup estimates and
//! stationarity residuals.
//!
//! In `(U, L)` form
//!
//! ```text
//! A f(x) = f'(x)(xγ_U + γ_L) + ½f''(x)(x²σ_U² + 2xσ_UL + σ_L²)
//!        + ∫ (f(x + xz₁ + z₂) − f(x) − f'(x)(xz₁ + z₂)·1_{|z|≤1}) ν_{U,L}(dz)
//! ```
//!
//! and for independent `(ξ, η)`
//!
//! ```text
//! A f(x) = A^η f(x) − f'(x)xγ_ξ + ½(f''(x)x² + f'(x)x)σ_ξ²
//!        + ∫ (f(xe^{−y}) − f(x) + f'(x)xy·1_{|y|≤1}) ν_ξ(dy).
//! ```

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charstats::complex_mean_se;
use crate::error::{LabError, Result};
use crate::expfun::{ExpFunSample, GouSimulator};
use crate::levy_spec::{DrivingSpec, Interval, JointJumpLaw, LevyMeasure, LevyTriplet, UlJumps, UlSpec};
use crate::pathsim::RngStream;
use crate::quad::QuadConfig;

type CFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

const TAYLOR_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionClass {
    /// Smooth with `|x f'| + |x² f''| → 0`; membership is screened numerically.
    SchwartzLike,
    /// Twice continuously differentiable with compact support.
    CompactC2,
    /// `e^{iux} h(x/n)` with the fixed smooth cutoff `h`.
    ExpIu { u: f64, n: f64 },
    Constant,
}

/// A test function with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    f: CFn,
    f1: CFn,
    f2: CFn,
    class: FunctionClass,
    /// `f` vanishes outside `[−support_bound, support_bound]` (`∞` if not compact).
    support_bound: f64,
    name: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("class", &self.class)
            .field("support_bound", &self.support_bound)
            .finish()
    }
}

fn real(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> CFn {
    Arc::new(move |x| Complex64::new(g(x), 0.0))
}

/// Smooth step `g(t) = e^{−1/t}` for `t > 0` with its first two derivatives.
fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let g = (-1.0 / t).exp();
    let t2 = t * t;
    (g, g / t2, g * (1.0 - 2.0 * t) / (t2 * t2))
}

/// The cutoff `h`: 1 on `[−1, 1]`, 0 off `[−2, 2]`, smooth in between.
/// Returns `(h, h', h'')`.
pub fn cutoff(x: f64) -> (f64, f64, f64) {
    let s = x.abs();
    if s <= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    if s >= 2.0 {
        return (0.0, 0.0, 0.0);
    }
    let (n, n1, n2) = smooth_step(2.0 - s);
    let (m, m1, m2) = smooth_step(s - 1.0);
    // d/ds of g(2−s) flips the sign of the odd derivative.
    let (dn, ddn) = (-n1, n2);
    let (dm, ddm) = (m1, m2);
    let d = n + m;
    let h = n / d;
    let num1 = dn * m - n * dm;
    let h1 = num1 / (d * d);
    let h2 = ((ddn * m - n * ddm) * d - 2.0 * num1 * (dn + dm)) / (d * d * d);
    (h, x.signum() * h1, h2)
}

impl TestFunction {
    /// Builds a test function from closures for `f`, `f'`, `f''`.
    pub fn new<F, F1, F2>(name: &str, class: FunctionClass, support_bound: f64, f: F, f1: F1, f2: F2) -> Self
    where
        F: Fn(f64) -> Complex64 + Send + Sync + 'static,
        F1: Fn(f64) -> Complex64 + Send + Sync + 'static,
        F2: Fn(f64) -> Complex64 + Send + Sync + 'static,
    {
        TestFunction {
            f: Arc::new(f),
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            class,
            support_bound,
            name: name.to_string(),
        }
    }

    pub fn gaussian_bump() -> Self {
        TestFunction {
            f: real(|x| (-0.5 * x * x).exp()),
            f1: real(|x| -x * (-0.5 * x * x).exp()),
            f2: real(|x| (x * x - 1.0) * (-0.5 * x * x).exp()),
            class: FunctionClass::SchwartzLike,
            support_bound: f64::INFINITY,
            name: "gaussian".into(),
        }
    }

    /// `1/(1+x²)`
    pub fn lorentzian() -> Self {
        TestFunction {
            f: real(|x| 1.0 / (1.0 + x * x)),
            f1: real(|x| -2.0 * x / (1.0 + x * x).powi(2)),
            f2: real(|x| (6.0 * x * x - 2.0) / (1.0 + x * x).powi(3)),
            class: FunctionClass::SchwartzLike,
            support_bound: f64::INFINITY,
            name: "lorentzian".into(),
        }
    }

    /// `x/(1+x²)²`
    pub fn odd_rational() -> Self {
        TestFunction {
            f: real(|x| x / (1.0 + x * x).powi(2)),
            f1: real(|x| (1.0 - 3.0 * x * x) / (1.0 + x * x).powi(3)),
            f2: real(|x| 12.0 * x * (x * x - 1.0) / (1.0 + x * x).powi(4)),
            class: FunctionClass::SchwartzLike,
            support_bound: f64::INFINITY,
            name: "odd-rational".into(),
        }
    }

    /// `(1−x²)³` on `[−1, 1]`.
    pub fn compact_poly() -> Self {
        let inside = |x: f64| x.abs() < 1.0;
        TestFunction {
            f: real(move |x| if inside(x) { (1.0 - x * x).powi(3) } else { 0.0 }),
            f1: real(move |x| if inside(x) { -6.0 * x * (1.0 - x * x).powi(2) } else { 0.0 }),
            f2: real(move |x| if inside(x) { (1.0 - x * x) * (30.0 * x * x - 6.0) } else { 0.0 }),
            class: FunctionClass::CompactC2,
            support_bound: 1.0,
            name: "compact-poly".into(),
        }
    }

    /// `exp(−1/(1−x²))` on `(−1, 1)`.
    pub fn smooth_bump() -> Self {
        let parts = |x: f64| -> Option<(f64, f64)> {
            let q = 1.0 - x * x;
            if q <= 0.0 {
                return None;
            }
            Some(((-1.0 / q).exp(), q))
        };
        TestFunction {
            f: real(move |x| parts(x).map_or(0.0, |(f, _)| f)),
            f1: real(move |x| parts(x).map_or(0.0, |(f, q)| -2.0 * x / (q * q) * f)),
            f2: real(move |x| {
                parts(x).map_or(0.0, |(f, q)| {
                    let q2 = q * q;
                    f * (4.0 * x * x / (q2 * q2) - 2.0 / q2 - 8.0 * x * x / (q2 * q))
                })
            }),
            class: FunctionClass::CompactC2,
            support_bound: 1.0,
            name: "smooth-bump".into(),
        }
    }

    /// Gaussian bump, two rational-decay functions and two compact bumps.
    pub fn battery() -> Vec<TestFunction> {
        vec![
            Self::gaussian_bump(),
            Self::lorentzian(),
            Self::odd_rational(),
            Self::compact_poly(),
            Self::smooth_bump(),
        ]
    }

    /// `f_n(x) = e^{iux} h(x/n)`.
    pub fn exp_iu(u: f64, n: f64) -> Self {
        assert!(n > 0.0, "cutoff index must be positive");
        let e = move |x: f64| Complex64::from_polar(1.0, u * x);
        let iu = Complex64::new(0.0, u);
        TestFunction {
            f: Arc::new(move |x| e(x) * cutoff(x / n).0),
            f1: Arc::new(move |x| {
                let (h, h1, _) = cutoff(x / n);
                e(x) * (iu * h + h1 / n)
            }),
            f2: Arc::new(move |x| {
                let (h, h1, h2) = cutoff(x / n);
                e(x) * (iu * iu * h + 2.0 * iu * h1 / n + h2 / (n * n))
            }),
            class: FunctionClass::ExpIu { u, n },
            support_bound: 2.0 * n,
            name: format!("exp-iu(u={u}, n={n})"),
        }
    }

    pub fn constant(c: f64) -> Self {
        TestFunction {
            f: real(move |_| c),
            f1: real(|_| 0.0),
            f2: real(|_| 0.0),
            class: FunctionClass::Constant,
            support_bound: f64::INFINITY,
            name: format!("constant({c})"),
        }
    }

    /// `α f + β g`.
    pub fn combine(alpha: Complex64, f: &TestFunction, beta: Complex64, g: &TestFunction) -> TestFunction {
        let (a0, a1, a2) = (f.f.clone(), f.f1.clone(), f.f2.clone());
        let (b0, b1, b2) = (g.f.clone(), g.f1.clone(), g.f2.clone());
        let class = match (f.class, g.class) {
            (FunctionClass::Constant, FunctionClass::Constant) => FunctionClass::Constant,
            (FunctionClass::CompactC2, FunctionClass::CompactC2) => FunctionClass::CompactC2,
            _ => FunctionClass::SchwartzLike,
        };
        TestFunction {
            f: Arc::new(move |x| alpha * a0(x) + beta * b0(x)),
            f1: Arc::new(move |x| alpha * a1(x) + beta * b1(x)),
            f2: Arc::new(move |x| alpha * a2(x) + beta * b2(x)),
            class,
            support_bound: f.support_bound.max(g.support_bound),
            name: format!("({alpha})·{} + ({beta})·{}", f.name, g.name),
        }
    }

    /// `s ↦ f(sign·e^s)`; `sign = 1` gives `f̃`, `sign = −1` gives `f̃̃`.
    pub fn compose_exp(&self, sign: f64) -> TestFunction {
        let (f0, f1, f2) = (self.f.clone(), self.f1.clone(), self.f2.clone());
        let (g1, g2) = (f1.clone(), f2);
        TestFunction {
            f: Arc::new(move |s| f0(sign * s.exp())),
            f1: Arc::new(move |s| {
                let y = sign * s.exp();
                f1(y) * y
            }),
            f2: Arc::new(move |s| {
                let y = sign * s.exp();
                g1(y) * y + g2(y) * (y * y)
            }),
            class: FunctionClass::SchwartzLike,
            support_bound: f64::INFINITY,
            name: format!("{}∘exp", self.name),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    pub fn value(&self, x: f64) -> Complex64 {
        let v = (self.f)(x);
        // Test functions vanish at infinity unless constant.
        if x.is_infinite() && !v.is_finite() {
            return Complex64::new(0.0, 0.0);
        }
        v
    }

    pub fn d1(&self, x: f64) -> Complex64 {
        (self.f1)(x)
    }

    pub fn d2(&self, x: f64) -> Complex64 {
        (self.f2)(x)
    }

    /// Points where `f` or its derivatives are not smooth (support edges,
    /// cutoff transitions).
    fn kinks(&self) -> Vec<f64> {
        match self.class {
            FunctionClass::CompactC2 => vec![-self.support_bound, self.support_bound],
            FunctionClass::ExpIu { n, .. } => vec![-2.0 * n, -n, n, 2.0 * n],
            _ => Vec::new(),
        }
    }

    /// Numerical screen for the decay class: `|x f'(x)| + |x² f''(x)|` at
    /// `|x| ∈ {10³, 10⁴, 10⁵}` must be non-increasing and end below `1e−6`.
    pub fn screen_decay(&self) -> bool {
        let g = |x: f64| {
            let side = |x: f64| (x * self.d1(x)).norm() + (x * x * self.d2(x)).norm();
            side(x).max(side(-x))
        };
        let v: Vec<f64> = [1e3, 1e4, 1e5].iter().map(|&x| g(x)).collect();
        v[0] >= v[1] && v[1] >= v[2] && v[2] < 1e-6
    }
}

fn quad_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-12, rel_tol: 1e-12, ..Default::default() }
}

/// Generator of a Lévy process: `γf' + σ²/2 f'' + ∫(f(x+y) − f − f'y·1_{|y|≤1})ν(dy)`.
pub fn levy_generator(triplet: &LevyTriplet, f: &TestFunction, x: f64) -> Result<Complex64> {
    let (f0, f1, f2) = (f.value(x), f.d1(x), f.d2(x));
    let mut out = f1 * triplet.gamma() + f2 * (0.5 * triplet.sigma2());
    let integrand = |y: f64| -> Complex64 {
        if y.abs() < TAYLOR_CUTOFF {
            f2 * (0.5 * y * y)
        } else {
            let comp = if y.abs() <= 1.0 { f1 * y } else { Complex64::new(0.0, 0.0) };
            f.value(x + y) - f0 - comp
        }
    };
    out += jump_integral(triplet.nu(), integrand, &shifted(&f.kinks(), |k| k - x))?;
    Ok(out)
}

fn shifted(kinks: &[f64], map: impl Fn(f64) -> f64) -> Vec<f64> {
    kinks.iter().map(|&k| map(k)).filter(|v| v.is_finite()).collect()
}

fn jump_integral<G: Fn(f64) -> Complex64>(nu: &LevyMeasure, g: G, extra: &[f64]) -> Result<Complex64> {
    match nu {
        LevyMeasure::Empty => Ok(Complex64::new(0.0, 0.0)),
        LevyMeasure::Atoms(a) => Ok(a.iter().map(|a| g(a.location) * a.mass).sum()),
        LevyMeasure::Density(_) => nu.integrate_split(g, &Interval::real_line(), extra, &quad_cfg()),
    }
}

/// Generator in `(U, L)` form.
pub fn apply_generator_ul(spec: &UlSpec, f: &TestFunction, x: f64) -> Result<Complex64> {
    let (f0, f1, f2) = (f.value(x), f.d1(x), f.d2(x));
    let mut out = f1 * (x * spec.gamma_u + spec.gamma_l)
        + f2 * (0.5 * (x * x * spec.sigma_u2 + 2.0 * x * spec.sigma_ul + spec.sigma_l2));
    let zero = Complex64::new(0.0, 0.0);
    match &spec.jumps {
        UlJumps::Independent { nu_u, nu_l } => {
            if x != 0.0 {
                let g = |z: f64| -> Complex64 {
                    if z.abs() < TAYLOR_CUTOFF {
                        f2 * (0.5 * x * x * z * z)
                    } else {
                        let comp = if z.abs() <= 1.0 { f1 * (x * z) } else { zero };
                        f.value(x + x * z) - f0 - comp
                    }
                };
                // Kinks of f at x(1+z) = k.
                out += jump_integral(nu_u, g, &shifted(&f.kinks(), |k| k / x - 1.0))?;
            }
            let g = |z: f64| -> Complex64 {
                if z.abs() < TAYLOR_CUTOFF {
                    f2 * (0.5 * z * z)
                } else {
                    let comp = if z.abs() <= 1.0 { f1 * z } else { zero };
                    f.value(x + z) - f0 - comp
                }
            };
            out += jump_integral(nu_l, g, &shifted(&f.kinks(), |k| k - x))?;
        }
        UlJumps::Joint(atoms) => {
            for &((z1, z2), m) in atoms {
                let d = x * z1 + z2;
                let comp = if z1.hypot(z2) <= 1.0 { f1 * d } else { zero };
                out += (f.value(x + d) - f0 - comp) * m;
            }
        }
    }
    Ok(out)
}

/// Generator in `(ξ, η)` form for independent `ξ`, `η`.
pub fn apply_generator_xieta(xi: &LevyTriplet, eta: &LevyTriplet, f: &TestFunction, x: f64) -> Result<Complex64> {
    let (f0, f1, f2) = (f.value(x), f.d1(x), f.d2(x));
    let mut out = levy_generator(eta, f, x)?;
    out += -f1 * (x * xi.gamma()) + (f2 * (x * x) + f1 * x) * (0.5 * xi.sigma2());
    if x != 0.0 {
        let g = |y: f64| -> Complex64 {
            if y.abs() < TAYLOR_CUTOFF {
                (f1 * x + f2 * (x * x)) * (0.5 * y * y)
            } else {
                let comp = if y.abs() <= 1.0 { f1 * (x * y) } else { Complex64::new(0.0, 0.0) };
                f.value(x * (-y).exp()) - f0 + comp
            }
        };
        // Kinks of f at x e^{−y} = k with k/x > 0.
        let kinks: Vec<f64> = f.kinks().iter().filter(|k| *k / x > 0.0).map(|k| -(k / x).ln()).collect();
        out += jump_integral(xi.nu(), g, &kinks)?;
    }
    Ok(out)
}

/// Generator of the GOU process of any driving spec.
pub fn apply_generator(spec: &DrivingSpec, f: &TestFunction, x: f64) -> Result<Complex64> {
    match spec {
        DrivingSpec::IndependentXiEta { xi, eta } => apply_generator_xieta(xi, eta, f, x),
        DrivingSpec::UlForm(ul) => apply_generator_ul(ul, f, x),
        DrivingSpec::JointCompoundPoisson(j) => match &j.jumps {
            JointJumpLaw::Atoms(a) => {
                let f0 = f.value(x);
                Ok(a.iter()
                    .map(|&((dx, dy), p)| (f.value((-dx).exp() * (x + dy)) - f0) * (p * j.rate))
                    .sum())
            }
            JointJumpLaw::EtaAtExpTime { .. } => Err(LabError::domain(
                "sampled joint jump laws have no closed generator; use the (U, L) form",
            )),
        },
    }
}

/// `T_t f(x) = E f(V_t^x)` by Monte Carlo with step `t/100`; returns the
/// estimate and its standard error. Constant functions return `(c, 0)`.
pub fn semigroup_estimate(
    spec: &DrivingSpec,
    f: &TestFunction,
    x: f64,
    t: f64,
    n: usize,
    stream: RngStream,
) -> Result<(Complex64, f64)> {
    if !(t > 0.0) {
        return Err(LabError::domain("t must be positive"));
    }
    if f.class == FunctionClass::Constant {
        return Ok((f.value(0.0), 0.0));
    }
    let sim = GouSimulator::new(spec, t / 100.0)?;
    let v = sim.terminals(&vec![x; n], t, stream);
    if let Some(bad) = v.iter().find(|v| !v.is_finite()) {
        return Err(LabError::numerical(format!("GOU terminal value {bad} is not finite")));
    }
    Ok(complex_mean_se(v.iter().map(|&y| f.value(y))))
}

/// Mean of `A f(V_i)` over a sample of the candidate stationary law.
pub fn stationarity_residual(spec: &DrivingSpec, f: &TestFunction, sample: &ExpFunSample) -> Result<(Complex64, f64)> {
    if f.class == FunctionClass::Constant {
        return Ok((Complex64::new(0.0, 0.0), 0.0));
    }
    if sample.values.is_empty() {
        return Err(LabError::precondition("sample is empty"));
    }
    let terms: Vec<Complex64> = sample
        .values
        .par_iter()
        .map(|&x| apply_generator(spec, f, x))
        .collect::<Result<_>>()?;
    Ok(complex_mean_se(terms))
}
