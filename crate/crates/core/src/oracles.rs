//! Reference cases with known stationary laws, and the counterexample
//! constructions used to probe injectivity and continuity of `η ↦ 𝓛(V∞)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};

use crate::charstats::{complex_mean_se, CFGrid, CfKind};
use crate::error::{LabError, Result};
use crate::expfun::ExpFunSample;
use crate::levy_spec::{
    DensityFamily, DrivingSpec, Interval, JointCompoundPoisson, JointJumpLaw, LevyMeasure, LevyTriplet,
};
use crate::pathsim::RngStream;
use crate::quad::{self, QuadConfig};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type CfFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
type DrawFn = Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;

/// Registered oracle names.
pub const ORACLE_NAMES: [&str; 5] = ["ou-normal", "dufresne", "poisson-product", "dep-pair", "discont-n"];

/// Terms in the truncated product CF.
pub const PRODUCT_TERMS: usize = 30;

#[derive(Clone)]
pub enum StationaryLaw {
    /// Closed-form law with CDF, density and an exact sampler.
    Analytic { label: String, cdf: RealFn, pdf: RealFn, draw: DrawFn },
    /// Characteristic function given by a convergent product.
    ProductCf(CfFn),
    None,
}

impl fmt::Debug for StationaryLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StationaryLaw::Analytic { label, .. } => write!(f, "Analytic({label})"),
            StationaryLaw::ProductCf(_) => write!(f, "ProductCf"),
            StationaryLaw::None => write!(f, "None"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub name: String,
    pub spec: DrivingSpec,
    pub stationary_law: StationaryLaw,
    /// Second spec with the same stationary law, when the case is a pair.
    pub companion: Option<DrivingSpec>,
    pub notes: String,
}

impl OracleCase {
    /// `∫ pdf` over the real line for analytic laws.
    pub fn law_mass(&self) -> Option<Result<f64>> {
        let StationaryLaw::Analytic { pdf, .. } = &self.stationary_law else {
            return None;
        };
        let cfg = QuadConfig { abs_tol: 1e-12, rel_tol: 1e-10, ..Default::default() };
        Some(
            quad::integrate(|x| pdf(x), f64::NEG_INFINITY, f64::INFINITY, &[0.0], &cfg)
                .map(|r| r.value),
        )
    }

    pub fn cdf(&self, x: f64) -> Option<f64> {
        match &self.stationary_law {
            StationaryLaw::Analytic { cdf, .. } => Some(cdf(x)),
            _ => None,
        }
    }

    /// Exact draws from an analytic stationary law.
    pub fn exact_sample(&self, n: usize, stream: RngStream) -> Option<ExpFunSample> {
        let StationaryLaw::Analytic { draw, .. } = &self.stationary_law else {
            return None;
        };
        let values: Vec<f64> = (0..n as u64)
            .into_par_iter()
            .map(|i| draw(&mut stream.substream(i).rng()))
            .collect();
        let mut s = ExpFunSample::from_values(values, stream.seed).ok()?;
        s.warnings.push(format!("exact draws from the {} stationary law", self.name));
        Some(s)
    }
}

/// `ξ_t = γ_ξ t`, `η = √(2γ_ξ)·v·W`, stationary law `N(0, v²)`.
pub fn ou_normal_case(gamma_xi: f64, v: f64) -> Result<OracleCase> {
    if !(gamma_xi > 0.0 && v > 0.0 && gamma_xi.is_finite() && v.is_finite()) {
        return Err(LabError::domain("ou_normal_case needs γ_ξ > 0 and v > 0"));
    }
    let law = Normal::new(0.0, v).map_err(|e| LabError::domain(e.to_string()))?;
    let (l1, l2) = (law, law);
    Ok(OracleCase {
        name: "ou-normal".into(),
        spec: DrivingSpec::independent(LevyTriplet::deterministic(gamma_xi), LevyTriplet::brownian(2.0 * gamma_xi * v * v)),
        stationary_law: StationaryLaw::Analytic {
            label: format!("N(0, {})", v * v),
            cdf: Arc::new(move |x| l1.cdf(x)),
            pdf: Arc::new(move |x| l2.pdf(x)),
            draw: Arc::new(move |rng| {
                let z: f64 = StandardNormal.sample(rng);
                v * z
            }),
        },
        companion: None,
        notes: format!("ξ_t = {gamma_xi}t, η = √(2·{gamma_xi})·{v}·W"),
    })
}

/// `ξ_s = 2(B_s + μs)`, `η_t = t`; `V∞ = 1/(2G)` with `G ~ Gamma(μ, 1)`.
pub fn brownian_xi_case(mu: f64) -> Result<OracleCase> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(LabError::domain("brownian_xi_case needs μ > 0"));
    }
    let g = Gamma::new(mu, 1.0).map_err(|e| LabError::domain(e.to_string()))?;
    let (g1, g2) = (g, g);
    let sampler = GammaDist::new(mu, 1.0).map_err(|e| LabError::domain(e.to_string()))?;
    Ok(OracleCase {
        name: "dufresne".into(),
        spec: DrivingSpec::independent(
            LevyTriplet::new(2.0 * mu, 4.0, LevyMeasure::Empty)?,
            LevyTriplet::deterministic(1.0),
        ),
        stationary_law: StationaryLaw::Analytic {
            label: format!("1/(2·Gamma({mu}, 1))"),
            cdf: Arc::new(move |x| if x <= 0.0 { 0.0 } else { 1.0 - g1.cdf(0.5 / x) }),
            pdf: Arc::new(move |x| if x <= 0.0 { 0.0 } else { g2.pdf(0.5 / x) * 0.5 / (x * x) }),
            draw: Arc::new(move |rng| 0.5 / sampler.sample(rng)),
        },
        companion: None,
        notes: "closed form from outside the identity suite; validated by simulation before use".into(),
    })
}

/// Median of `1/(2·Gamma(μ, 1))`.
pub fn dufresne_median(mu: f64) -> Result<f64> {
    let g = Gamma::new(mu, 1.0).map_err(|e| LabError::domain(e.to_string()))?;
    Ok(0.5 / g.inverse_cdf(0.5))
}

/// `φ_{η_T}(u) = λ/(λ − ψ_η(u))`: `η` sampled at an independent `Exp(λ)` time.
pub fn eta_at_exp_time_cf(lambda: f64, eta: &LevyTriplet, u: f64) -> Result<Complex64> {
    Ok(lambda / (lambda - eta.exponent(u)?))
}

/// `∏_{k=0}^{30} φ_{η_T}(e^{−k}u)`: the stationary CF for `ξ = Poisson(λ)`.
pub fn poisson_product_cf(lambda: f64, eta: &LevyTriplet, u: f64) -> Result<Complex64> {
    (0..=PRODUCT_TERMS).try_fold(Complex64::new(1.0, 0.0), |acc, k| {
        Ok(acc * eta_at_exp_time_cf(lambda, eta, u * (-(k as f64)).exp())?)
    })
}

/// `ξ = Poisson(λ)` with independent `η`; the law is given by its product CF.
pub fn poisson_product_case(lambda: f64, eta: LevyTriplet) -> Result<OracleCase> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::domain("λ must be positive"));
    }
    let e2 = eta.clone();
    Ok(OracleCase {
        name: "poisson-product".into(),
        spec: DrivingSpec::independent(LevyTriplet::poisson(lambda), eta),
        stationary_law: StationaryLaw::ProductCf(Arc::new(move |u| {
            poisson_product_cf(lambda, &e2, u).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        })),
        companion: None,
        notes: format!("ξ = Poisson({lambda}); law is e^{{-1}}-decomposable"),
    })
}

fn residual_grid(grid: &[f64], rows: Vec<(Complex64, f64)>) -> CFGrid {
    let (estimate, stderr) = rows.into_iter().unzip();
    CFGrid {
        u: grid.to_vec(),
        estimate,
        stderr,
        valid_mask: vec![true; grid.len()],
        kind: CfKind::Residual,
        warnings: Vec::new(),
    }
}

fn sample_values(sample: &ExpFunSample) -> Result<&[f64]> {
    if sample.values.is_empty() {
        return Err(LabError::precondition("sample is empty"));
    }
    Ok(&sample.values)
}

/// Residual of `φ_W(u) − φ_W(u/e)·λ/(λ − ψ_η(u))` for a sample of `V∞`
/// with `ξ = Poisson(λ)`.
pub fn poisson_xi_product_check(lambda: f64, eta: &LevyTriplet, sample: &ExpFunSample, grid: &[f64]) -> Result<CFGrid> {
    let values = sample_values(sample)?;
    let shrink = (-1.0f64).exp();
    let rows = grid
        .par_iter()
        .map(|&u| {
            if u == 0.0 {
                return Ok((Complex64::new(0.0, 0.0), 0.0));
            }
            let c = eta_at_exp_time_cf(lambda, eta, u)?;
            Ok(complex_mean_se(
                values
                    .iter()
                    .map(|&v| Complex64::from_polar(1.0, u * v) - Complex64::from_polar(1.0, u * shrink * v) * c),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(residual_grid(grid, rows))
}

/// Residual of `φ_W(u) − ∏_{k=0}^{30} φ_{η_T}(e^{−k}u)`.
pub fn poisson_product_residual(lambda: f64, eta: &LevyTriplet, sample: &ExpFunSample, grid: &[f64]) -> Result<CFGrid> {
    let values = sample_values(sample)?;
    let rows = grid
        .par_iter()
        .map(|&u| {
            if u == 0.0 {
                return Ok((Complex64::new(0.0, 0.0), 0.0));
            }
            let p = poisson_product_cf(lambda, eta, u)?;
            Ok(complex_mean_se(values.iter().map(|&v| Complex64::from_polar(1.0, u * v) - p)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(residual_grid(grid, rows))
}

/// Two driving pairs with the same stationary law: `(Poisson(1), η)` with
/// independent components, and a bivariate compound Poisson process that
/// jumps by `(1, η_τ)` with `τ ~ Exp(1)` independent of `η`.
pub fn dependent_pair(eta: LevyTriplet) -> Result<(DrivingSpec, DrivingSpec)> {
    let first = DrivingSpec::independent(LevyTriplet::poisson(1.0), eta.clone());
    let second = DrivingSpec::JointCompoundPoisson(JointCompoundPoisson::new(
        1.0,
        JointJumpLaw::EtaAtExpTime { xi_jump: 1.0, eta, clock_rate: 1.0 },
    )?);
    Ok((first, second))
}

pub fn dependent_pair_case(eta: LevyTriplet) -> Result<OracleCase> {
    let (first, second) = dependent_pair(eta)?;
    Ok(OracleCase {
        name: "dep-pair".into(),
        spec: first,
        stationary_law: StationaryLaw::None,
        companion: Some(second),
        notes: "independent and jointly jumping drivers with equal V∞ laws".into(),
    })
}

/// `∫_{(1,∞)} log y ν(dy)`: the mass of `[1, ∞)` under the Lévy measure of
/// `V∞` when `ξ_t = t`. `+∞` when the integral diverges.
pub fn stationary_levy_tail(nu: &LevyMeasure) -> Result<f64> {
    let region = Interval::open(1.0, f64::INFINITY);
    match nu {
        LevyMeasure::Empty => Ok(0.0),
        LevyMeasure::Atoms(atoms) => Ok(atoms
            .iter()
            .filter(|a| region.contains(a.location))
            .map(|a| a.mass * a.location.ln())
            .sum()),
        LevyMeasure::Density(d) => {
            if let Some(DensityFamily::LogTail { .. }) = d.family() {
                // c/(y log²y) against log y leaves c/(y log y).
                return Ok(f64::INFINITY);
            }
            match nu.integrate(|y: f64| y.ln(), &region) {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) | Err(LabError::Quadrature { .. }) | Err(LabError::Numerical(_)) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        }
    }
}

/// Compound Poisson rate 1 with
/// `ν⁽ⁿ⁾ = (1 − 1/n)(½δ₁ + ½δ₋₁) + (1/n)(½δ_{nⁿ} + ½δ_{−nⁿ})`; `n = 0` gives
/// the limit `½δ₁ + ½δ₋₁`. Coincident atoms are merged.
pub fn continuity_counterexample_spec(n: u32) -> Result<LevyTriplet> {
    if n == 0 {
        return LevyTriplet::compound_poisson(1.0, &[(1.0, 0.5), (-1.0, 0.5)]);
    }
    let nf = n as f64;
    let far = nf.powf(nf);
    if !far.is_finite() {
        return Err(LabError::domain(format!("n = {n} overflows nⁿ")));
    }
    let near = 0.5 * (1.0 - 1.0 / nf);
    let tail = 0.5 / nf;
    LevyTriplet::compound_poisson(1.0, &[(1.0, near), (-1.0, near), (far, tail), (-far, tail)])
}

/// `ξ_t = t` with `η = ` [`continuity_counterexample_spec`]`(n)`.
pub fn continuity_counterexample_case(n: u32) -> Result<OracleCase> {
    Ok(OracleCase {
        name: "discont-n".into(),
        spec: DrivingSpec::independent(LevyTriplet::deterministic(1.0), continuity_counterexample_spec(n)?),
        stationary_law: StationaryLaw::None,
        companion: None,
        notes: format!("member n = {n}; tail mass of the stationary Lévy measure is ½ log n"),
    })
}

/// Parameters accepted by [`lookup`]; unused ones are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub gamma_xi: f64,
    pub v: f64,
    pub mu: f64,
    pub lambda: f64,
    pub n: u32,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { gamma_xi: 1.0, v: 1.0, mu: 3.0, lambda: 1.0, n: 4 }
    }
}

/// Builds a registered oracle by name. `eta` overrides the default `η_t = t`
/// of `poisson-product` and `dep-pair`.
pub fn lookup(name: &str, params: &OracleParams, eta: Option<LevyTriplet>) -> Result<OracleCase> {
    let eta = eta.unwrap_or_else(|| LevyTriplet::deterministic(1.0));
    match name {
        "ou-normal" => ou_normal_case(params.gamma_xi, params.v),
        "dufresne" => brownian_xi_case(params.mu),
        "poisson-product" => poisson_product_case(params.lambda, eta),
        "dep-pair" => dependent_pair_case(eta),
        "discont-n" => continuity_counterexample_case(params.n),
        other => Err(LabError::config(
            "spec",
            format!("unknown oracle {other:?}; expected one of {}", ORACLE_NAMES.join(", ")),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_laws_have_unit_mass() {
        let cases = [
            ou_normal_case(1.0, 1.0).unwrap(),
            ou_normal_case(0.5, 2.0).unwrap(),
            brownian_xi_case(3.0).unwrap(),
            brownian_xi_case(1.0).unwrap(),
        ];
        for case in cases {
            let m = case.law_mass().unwrap().unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{}: {m}", case.name);
        }
    }

    #[test]
    fn ou_coefficients() {
        let c = ou_normal_case(0.5, 2.0).unwrap();
        let DrivingSpec::IndependentXiEta { xi, eta } = &c.spec else { panic!() };
        assert_eq!(xi.drift(), Some(0.5));
        assert!((eta.sigma2() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn counterexample_atoms() {
        let one = continuity_counterexample_spec(1).unwrap();
        let a = one.nu().as_atoms().unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|a| a.location.abs() == 1.0 && a.mass == 0.5));
        let three = continuity_counterexample_spec(3).unwrap();
        let a = three.nu().as_atoms().unwrap();
        assert_eq!(a.len(), 4);
        for atom in a {
            let want = if atom.location.abs() == 1.0 { 1.0 / 3.0 } else { 1.0 / 6.0 };
            assert!((atom.mass - want).abs() < 1e-15 && (atom.location.abs() == 1.0 || atom.location.abs() == 27.0));
        }
    }

    #[test]
    fn unknown_oracle_is_a_config_error() {
        assert!(matches!(lookup("nope", &OracleParams::default(), None), Err(LabError::Config { .. })));
        for name in ORACLE_NAMES {
            lookup(name, &OracleParams::default(), None).unwrap();
        }
    }
}
