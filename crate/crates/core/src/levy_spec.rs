//! Lévy measures, characteristic triplets and bivariate driving pairs.
//!
//! The truncation function is `1_{|x| ≤ 1}` everywhere. A triplet
//! `(γ, σ², ν)` therefore has exponent
//!
//! ```text
//! ψ(u) = iγu − σ²u²/2 + ∫ (e^{iux} − 1 − iux·1_{|x|≤1}) ν(dx)
//! ```
//!
//! and finite-variation triplets additionally expose the drift
//! `γ⁰ = γ − ∫_{|x|≤1} x ν(dx)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad::{self, QuadConfig, QuadResult, QuadValue};

/// A real interval with explicit endpoint closedness (atoms care about it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: lo.is_finite(),
            hi_closed: hi.is_finite(),
        }
    }

    pub fn real_line() -> Self {
        Interval::open(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `[-1, 1]`, the truncation region.
    pub fn unit_ball() -> Self {
        Interval::closed(-1.0, 1.0)
    }

    /// The two halves of `ℝ ∖ [-1, 1]`.
    pub fn outside_unit_ball() -> [Interval; 2] {
        [
            Interval::open(f64::NEG_INFINITY, -1.0),
            Interval::open(1.0, f64::INFINITY),
        ]
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        if lo < hi || (lo == hi && lo_closed && hi_closed) {
            Some(Interval { lo, hi, lo_closed, hi_closed })
        } else {
            None
        }
    }
}

/// Named parametric Lévy densities; these are the only densities that
/// survive a round trip through JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensityFamily {
    /// `mass·rate·e^{−rate·x}` on `(0, ∞)`.
    Exponential { mass: f64, rate: f64 },
    /// `mass·rate/2·e^{−rate·|x|}` on `ℝ`.
    TwoSidedExponential { mass: f64, rate: f64 },
    /// `c·e^{−λx}·x^{−1−α}` on `(0, ∞)`, `0 ≤ α < 2` (`α = 0` is the gamma process).
    TemperedStable { c: f64, alpha: f64, lambda: f64 },
    /// `c / (x (log x)²)` on `(lower, ∞)`, `lower > 1`; has infinite log-moment.
    LogTail { c: f64, lower: f64 },
}

impl DensityFamily {
    fn build(self) -> Result<DensityMeasure> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let (density, support, order, label): (DensityFn, Interval, f64, String) = match self {
            DensityFamily::Exponential { mass, rate } => {
                positive("mass", mass)?;
                positive("rate", rate)?;
                (
                    Arc::new(move |x: f64| mass * rate * (-rate * x).exp()),
                    Interval::open(0.0, f64::INFINITY),
                    -1.0,
                    format!("exponential(mass={mass}, rate={rate})"),
                )
            }
            DensityFamily::TwoSidedExponential { mass, rate } => {
                positive("mass", mass)?;
                positive("rate", rate)?;
                (
                    Arc::new(move |x: f64| 0.5 * mass * rate * (-rate * x.abs()).exp()),
                    Interval::real_line(),
                    -1.0,
                    format!("two-sided exponential(mass={mass}, rate={rate})"),
                )
            }
            DensityFamily::TemperedStable { c, alpha, lambda } => {
                positive("c", c)?;
                positive("lambda", lambda)?;
                if !(0.0..2.0).contains(&alpha) {
                    return Err(LabError::domain(format!("alpha must lie in [0, 2), got {alpha}")));
                }
                (
                    Arc::new(move |x: f64| c * (-lambda * x).exp() * x.powf(-1.0 - alpha)),
                    Interval::open(0.0, f64::INFINITY),
                    alpha,
                    format!("tempered stable(c={c}, alpha={alpha}, lambda={lambda})"),
                )
            }
            DensityFamily::LogTail { c, lower } => {
                positive("c", c)?;
                if !(lower > 1.0) {
                    return Err(LabError::domain("log tail lower bound must exceed 1"));
                }
                (
                    Arc::new(move |x: f64| {
                        let l = x.ln();
                        c / (x * l * l)
                    }),
                    Interval::open(lower, f64::INFINITY),
                    -1.0,
                    format!("log tail(c={c}, lower={lower})"),
                )
            }
        };
        Ok(DensityMeasure {
            density,
            support,
            singularity_order: order,
            label,
            family: Some(self),
            preimage: None,
        })
    }
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Lévy measure given by a density on an interval.
///
/// `singularity_order` declares the behaviour at the origin: the density is
/// `O(|x|^{−1−α})` there with `α = singularity_order < 2`; a negative value
/// means the density is bounded near 0 (or 0 is outside the support).
#[derive(Clone)]
pub struct DensityMeasure {
    density: DensityFn,
    support: Interval,
    singularity_order: f64,
    label: String,
    family: Option<DensityFamily>,
    /// Source density when this one is a pushforward between ξ and U jumps.
    preimage: Option<Arc<DensityMeasure>>,
}

impl DensityMeasure {
    pub fn eval(&self, x: f64) -> f64 {
        if x != 0.0 && self.support.contains(x) {
            (self.density)(x)
        } else {
            0.0
        }
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn singularity_order(&self) -> f64 {
        self.singularity_order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn family(&self) -> Option<DensityFamily> {
        self.family
    }
}

impl fmt::Debug for DensityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMeasure")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("singularity_order", &self.singularity_order)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// A Lévy measure in one of three computable representations.
#[derive(Debug, Clone)]
pub enum LevyMeasure {
    Empty,
    /// Sorted by location, coincident locations merged, all masses positive.
    Atoms(Vec<Atom>),
    Density(DensityMeasure),
}

const BREAKPOINTS: [f64; 3] = [-1.0, 0.0, 1.0];

impl LevyMeasure {
    /// Builds an atomic measure. Coincident locations are merged by summing
    /// masses; zero masses are dropped.
    pub fn atoms<I: IntoIterator<Item = (f64, f64)>>(atoms: I) -> Result<Self> {
        let mut list: Vec<Atom> = Vec::new();
        for (location, mass) in atoms {
            if !location.is_finite() || location == 0.0 {
                return Err(LabError::domain(format!(
                    "atom location must be finite and non-zero, got {location}"
                )));
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(LabError::domain(format!("atom mass must be finite and ≥ 0, got {mass}")));
            }
            if mass > 0.0 {
                list.push(Atom { location, mass });
            }
        }
        list.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(list.len());
        for atom in list {
            match merged.last_mut() {
                Some(last) if last.location == atom.location => last.mass += atom.mass,
                _ => merged.push(atom),
            }
        }
        if merged.is_empty() {
            Ok(LevyMeasure::Empty)
        } else {
            Ok(LevyMeasure::Atoms(merged))
        }
    }

    /// Builds a density measure and checks `∫ min(1, x²) ν(dx) < ∞` numerically.
    pub fn density<F>(density: F, support: Interval, singularity_order: f64, label: &str) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let m = DensityMeasure {
            density: Arc::new(density),
            support,
            singularity_order,
            label: label.to_string(),
            family: None,
            preimage: None,
        };
        Self::validated(m)
    }

    /// Parametric families are valid by construction once their parameters are.
    pub fn from_family(family: DensityFamily) -> Result<Self> {
        Ok(LevyMeasure::Density(family.build()?))
    }

    fn validated(m: DensityMeasure) -> Result<Self> {
        if !(m.singularity_order < 2.0) {
            return Err(LabError::domain("singularity order must be < 2"));
        }
        let measure = LevyMeasure::Density(m);
        match measure.integrate(|x: f64| x.abs().min(1.0).powi(2), &Interval::real_line()) {
            Ok(v) if v.is_finite() => Ok(measure),
            Ok(_) | Err(_) => Err(LabError::domain(
                "density does not define a Lévy measure: ∫ min(1, x²) ν(dx) is not finite",
            )),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, LevyMeasure::Empty)
    }

    pub fn as_atoms(&self) -> Option<&[Atom]> {
        match self {
            LevyMeasure::Atoms(a) => Some(a),
            LevyMeasure::Empty => Some(&[]),
            LevyMeasure::Density(_) => None,
        }
    }

    /// `∫_region g dν`; an exact sum for atoms.
    pub fn integrate<T, G>(&self, g: G, region: &Interval) -> Result<T>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        self.integrate_with(g, region, &QuadConfig::default())
    }

    pub fn integrate_with<T, G>(&self, g: G, region: &Interval, cfg: &QuadConfig) -> Result<T>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        self.integrate_split(g, region, &[], cfg)
    }

    /// As [`integrate_with`](Self::integrate_with) with extra breakpoints where
    /// `g` has kinks or jumps (the points `0, ±1` are always used).
    pub fn integrate_split<T, G>(&self, g: G, region: &Interval, extra: &[f64], cfg: &QuadConfig) -> Result<T>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        self.integrate_detailed(g, region, extra, cfg).map(|r| r.value)
    }

    /// As [`integrate_split`](Self::integrate_split), keeping the quadrature
    /// error bound (zero for atoms).
    pub fn integrate_detailed<T, G>(&self, g: G, region: &Interval, extra: &[f64], cfg: &QuadConfig) -> Result<QuadResult<T>>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        let exact = |value: T| QuadResult { value, abs_error: 0.0, evaluations: 0 };
        match self {
            LevyMeasure::Empty => Ok(exact(T::default())),
            LevyMeasure::Atoms(atoms) => Ok(exact(
                atoms
                    .iter()
                    .filter(|a| region.contains(a.location))
                    .fold(T::default(), |acc, a| acc + g(a.location) * a.mass),
            )),
            LevyMeasure::Density(d) => {
                let Some(r) = region.intersect(&d.support) else {
                    return Ok(exact(T::default()));
                };
                let mut breaks = BREAKPOINTS.to_vec();
                breaks.extend_from_slice(extra);
                quad::integrate(
                    |x| {
                        let w = d.eval(x);
                        // Overflow only happens within ~1e-250 of a singular origin.
                        if w.is_infinite() || w == 0.0 {
                            T::default()
                        } else {
                            g(x) * w
                        }
                    },
                    r.lo,
                    r.hi,
                    &breaks,
                    cfg,
                )
            }
        }
    }

    /// Sum of the integrals over several disjoint regions.
    pub fn integrate_regions<T, G>(&self, g: G, regions: &[Interval]) -> Result<T>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        let mut acc = T::default();
        for r in regions {
            acc = acc + self.integrate(&g, r)?;
        }
        Ok(acc)
    }

    /// `ν(ℝ)`, or `None` when the measure has infinite mass.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            LevyMeasure::Empty => Some(0.0),
            LevyMeasure::Atoms(a) => Some(a.iter().map(|a| a.mass).sum()),
            LevyMeasure::Density(d) => {
                match d.family {
                    Some(DensityFamily::Exponential { mass, .. })
                    | Some(DensityFamily::TwoSidedExponential { mass, .. }) => return Some(mass),
                    Some(DensityFamily::LogTail { c, lower }) => return Some(c / lower.ln()),
                    _ => {}
                }
                if d.singularity_order >= 0.0 && d.support.contains_zero_closure() {
                    return None;
                }
                self.integrate(|_| 1.0, &Interval::real_line()).ok().filter(|v: &f64| v.is_finite())
            }
        }
    }

    /// True if `∫_{|x|≤1} |x| ν(dx) < ∞`.
    pub fn is_finite_variation(&self) -> bool {
        match self {
            LevyMeasure::Empty | LevyMeasure::Atoms(_) => true,
            LevyMeasure::Density(d) => d.singularity_order < 1.0,
        }
    }

    /// `ν((−∞, 0)) = 0`.
    pub fn is_nonnegative_support(&self) -> bool {
        match self {
            LevyMeasure::Empty => true,
            LevyMeasure::Atoms(a) => a.iter().all(|a| a.location > 0.0),
            LevyMeasure::Density(d) => d.support.lo >= 0.0,
        }
    }

    /// Image measure under `x ↦ −x`.
    pub fn negate(&self) -> LevyMeasure {
        self.scale(-1.0)
    }

    /// Image measure under `x ↦ c·x`, `c ≠ 0`.
    pub fn scale(&self, c: f64) -> LevyMeasure {
        assert!(c != 0.0 && c.is_finite(), "scale factor must be finite and non-zero");
        match self {
            LevyMeasure::Empty => LevyMeasure::Empty,
            LevyMeasure::Atoms(a) => {
                LevyMeasure::atoms(a.iter().map(|a| (c * a.location, a.mass))).expect("scaled atoms stay valid")
            }
            LevyMeasure::Density(d) => {
                let inner = d.density.clone();
                let s = d.support;
                let support = if c > 0.0 {
                    Interval { lo: c * s.lo, hi: c * s.hi, lo_closed: s.lo_closed, hi_closed: s.hi_closed }
                } else {
                    Interval { lo: c * s.hi, hi: c * s.lo, lo_closed: s.hi_closed, hi_closed: s.lo_closed }
                };
                let jac = 1.0 / c.abs();
                LevyMeasure::Density(DensityMeasure {
                    density: Arc::new(move |x: f64| inner(x / c) * jac),
                    support,
                    singularity_order: d.singularity_order,
                    label: format!("{} scaled by {c}", d.label),
                    family: None,
                    preimage: None,
                })
            }
        }
    }

    /// Pushforward under `y ↦ e^{−y} − 1` (jumps of ξ to jumps of U).
    pub fn push_to_u(&self) -> LevyMeasure {
        match self {
            LevyMeasure::Empty => LevyMeasure::Empty,
            LevyMeasure::Atoms(a) => LevyMeasure::atoms(a.iter().map(|a| ((-a.location).exp_m1(), a.mass)))
                .expect("pushforward of valid atoms is valid"),
            LevyMeasure::Density(d) => {
                let inner = d.density.clone();
                let s = d.support;
                let support = Interval {
                    lo: (-s.hi).exp_m1(),
                    hi: (-s.lo).exp_m1(),
                    lo_closed: s.hi_closed,
                    hi_closed: s.lo_closed,
                };
                LevyMeasure::Density(DensityMeasure {
                    density: Arc::new(move |z: f64| {
                        let w = 1.0 + z;
                        if w <= 0.0 {
                            return 0.0;
                        }
                        let v = inner(-z.ln_1p()) / w;
                        if v.is_nan() { 0.0 } else { v }
                    }),
                    support,
                    singularity_order: d.singularity_order,
                    label: format!("{} pushed by y ↦ e^(−y)−1", d.label),
                    family: None,
                    preimage: Some(Arc::new(d.clone())),
                })
            }
        }
    }

    /// Pushforward under `z ↦ −log(1 + z)` (jumps of U back to jumps of ξ).
    /// Requires `ν((−∞, −1]) = 0`.
    pub fn push_to_xi(&self) -> Result<LevyMeasure> {
        match self {
            LevyMeasure::Empty => Ok(LevyMeasure::Empty),
            LevyMeasure::Atoms(a) => {
                if let Some(bad) = a.iter().find(|a| a.location <= -1.0) {
                    return Err(LabError::domain(format!(
                        "ν_U has an atom at {} ≤ −1, outside the (ξ,η) ↔ (U,L) bijection",
                        bad.location
                    )));
                }
                LevyMeasure::atoms(a.iter().map(|a| (-a.location.ln_1p(), a.mass)))
            }
            LevyMeasure::Density(d) => {
                let s = d.support;
                if s.lo < -1.0 {
                    return Err(LabError::domain(
                        "ν_U charges (−∞, −1], outside the (ξ,η) ↔ (U,L) bijection",
                    ));
                }
                if let Some(src) = &d.preimage {
                    return Ok(LevyMeasure::Density((**src).clone()));
                }
                let inner = d.density.clone();
                let support = Interval {
                    lo: if s.hi.is_finite() { -s.hi.ln_1p() } else { f64::NEG_INFINITY },
                    hi: if s.lo > -1.0 { -s.lo.ln_1p() } else { f64::INFINITY },
                    lo_closed: s.hi_closed && s.hi.is_finite(),
                    hi_closed: s.lo_closed && s.lo > -1.0,
                };
                Ok(LevyMeasure::Density(DensityMeasure {
                    density: Arc::new(move |y: f64| {
                        let e = (-y).exp();
                        if e == 0.0 {
                            return 0.0;
                        }
                        inner((-y).exp_m1()) * e
                    }),
                    support,
                    singularity_order: d.singularity_order,
                    label: format!("{} pushed by z ↦ −log(1+z)", d.label),
                    family: None,
                    preimage: Some(Arc::new(d.clone())),
                }))
            }
        }
    }
}

impl Interval {
    fn contains_zero_closure(&self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }
}

/// `∫_region g dν` with the shared quadrature contract.
pub fn measure_integral<G: Fn(f64) -> f64>(nu: &LevyMeasure, g: G, region: &Interval) -> Result<f64> {
    nu.integrate(g, region)
}

/// `E X₁` of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MeanValue {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
    Undefined,
}

impl MeanValue {
    pub fn is_positive(&self) -> bool {
        match *self {
            MeanValue::Finite(m) => m > 0.0,
            MeanValue::PlusInfinity => true,
            MeanValue::MinusInfinity | MeanValue::Undefined => false,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            MeanValue::Finite(m) => Some(m),
            _ => None,
        }
    }
}

/// Characteristic triplet `(γ, σ², ν)` of a real Lévy process.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    gamma: f64,
    sigma2: f64,
    nu: LevyMeasure,
}

impl LevyTriplet {
    pub fn new(gamma: f64, sigma2: f64, nu: LevyMeasure) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(LabError::domain("γ must be finite"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(LabError::domain(format!("σ² must be finite and ≥ 0, got {sigma2}")));
        }
        Ok(LevyTriplet { gamma, sigma2, nu })
    }

    /// Builds a finite-variation triplet from its drift `γ⁰`.
    pub fn from_drift(drift: f64, sigma2: f64, nu: LevyMeasure) -> Result<Self> {
        if !nu.is_finite_variation() {
            return Err(LabError::domain("drift form needs ∫_{|x|≤1}|x| ν(dx) < ∞"));
        }
        let small: f64 = nu.integrate(|x| x, &Interval::unit_ball())?;
        Self::new(drift + small, sigma2, nu)
    }

    /// `X_t = rate·t`.
    pub fn deterministic(rate: f64) -> Self {
        Self::new(rate, 0.0, LevyMeasure::Empty).expect("finite drift")
    }

    /// `X_t = σ·W_t`.
    pub fn brownian(sigma2: f64) -> Self {
        Self::new(0.0, sigma2, LevyMeasure::Empty).expect("valid variance")
    }

    /// Compound Poisson process without drift; `jumps` holds `(location, probability)`.
    pub fn compound_poisson(rate: f64, jumps: &[(f64, f64)]) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(LabError::domain("compound Poisson rate must be positive"));
        }
        let total: f64 = jumps.iter().map(|j| j.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::domain(format!("jump probabilities sum to {total}, not 1")));
        }
        let nu = LevyMeasure::atoms(jumps.iter().map(|&(x, p)| (x, rate * p)))?;
        Self::from_drift(0.0, 0.0, nu)
    }

    /// Poisson process with unit jumps.
    pub fn poisson(rate: f64) -> Self {
        Self::compound_poisson(rate, &[(1.0, 1.0)]).expect("valid Poisson rate")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nu(&self) -> &LevyMeasure {
        &self.nu
    }

    /// Drift `γ⁰ = γ − ∫_{|x|≤1} x ν(dx)` for finite-variation triplets.
    pub fn drift(&self) -> Option<f64> {
        if !self.nu.is_finite_variation() {
            return None;
        }
        self.nu
            .integrate(|x| x, &Interval::unit_ball())
            .ok()
            .map(|s: f64| self.gamma - s)
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma2 == 0.0 && self.nu.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.is_deterministic() && self.gamma == 0.0
    }

    /// Nondecreasing paths: no Gaussian part, no negative jumps, finite
    /// variation and nonnegative drift.
    pub fn is_subordinator(&self) -> bool {
        self.sigma2 == 0.0
            && self.nu.is_nonnegative_support()
            && self.drift().is_some_and(|d| d >= 0.0)
    }

    /// Triplet of `−X`.
    pub fn negate(&self) -> LevyTriplet {
        LevyTriplet {
            gamma: -self.gamma,
            sigma2: self.sigma2,
            nu: self.nu.negate(),
        }
    }

    /// Triplet of `c·X`, `c ≠ 0`.
    pub fn scale(&self, c: f64) -> Result<LevyTriplet> {
        if c == 0.0 || !c.is_finite() {
            return Err(LabError::domain("scale factor must be finite and non-zero"));
        }
        let nu = self.nu.scale(c);
        // c·(compensated part on |x|≤1) becomes compensation on |y|≤|c|.
        let shift: f64 = self.nu.integrate(
            |x| {
                let y = c * x;
                let inner = if x.abs() <= 1.0 { y } else { 0.0 };
                let outer = if y.abs() <= 1.0 { y } else { 0.0 };
                outer - inner
            },
            &Interval::real_line(),
        )?;
        LevyTriplet::new(c * self.gamma + shift, c * c * self.sigma2, nu)
    }

    /// `ψ(u)`; exactly 0 at `u = 0` and exactly conjugate-symmetric.
    pub fn exponent(&self, u: f64) -> Result<Complex64> {
        if !u.is_finite() {
            return Err(LabError::domain("exponent argument must be finite"));
        }
        if u == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let v = u.abs();
        let mut psi = Complex64::new(-0.5 * self.sigma2 * v * v, self.gamma * v);
        psi += match &self.nu {
            LevyMeasure::Empty => Complex64::new(0.0, 0.0),
            LevyMeasure::Atoms(atoms) => atoms
                .iter()
                .map(|a| a.mass * lk_integrand(v, a.location))
                .sum(),
            nu @ LevyMeasure::Density(_) => nu.integrate(|x| lk_integrand(v, x), &Interval::real_line())?,
        };
        Ok(if u < 0.0 { psi.conj() } else { psi })
    }

    /// `log E e^{−s X₁}`; `None` when the exponential moment is infinite.
    pub fn laplace_exponent(&self, s: f64) -> Result<Option<f64>> {
        if s == 0.0 {
            return Ok(Some(0.0));
        }
        let base = -s * self.gamma + 0.5 * s * s * self.sigma2;
        let integrand = |x: f64| {
            let t = -s * x;
            t.exp_m1() - if x.abs() <= 1.0 { t } else { 0.0 }
        };
        let value = match &self.nu {
            LevyMeasure::Empty => 0.0,
            LevyMeasure::Atoms(a) => a.iter().map(|a| a.mass * integrand(a.location)).sum(),
            nu @ LevyMeasure::Density(_) => match nu.integrate(integrand, &Interval::real_line()) {
                Ok(v) => v,
                Err(LabError::Quadrature { .. }) | Err(LabError::Numerical(_)) => return Ok(None),
                Err(e) => return Err(e),
            },
        };
        let total = base + value;
        Ok(total.is_finite().then_some(total))
    }

    /// `E X₁ = γ + ∫_{|x|>1} x ν(dx)` with infinite and undefined cases flagged.
    pub fn mean(&self) -> MeanValue {
        let [neg, pos] = Interval::outside_unit_ball();
        let upper = self.nu.integrate(|x| x, &pos).ok().filter(|v: &f64| v.is_finite());
        let lower = self.nu.integrate(|x| x, &neg).ok().filter(|v: &f64| v.is_finite());
        match (lower, upper) {
            (Some(l), Some(u)) => MeanValue::Finite(self.gamma + l + u),
            (Some(_), None) => MeanValue::PlusInfinity,
            (None, Some(_)) => MeanValue::MinusInfinity,
            (None, None) => MeanValue::Undefined,
        }
    }

    /// Total variance `σ² + ∫ x² ν(dx)` when finite.
    pub fn variance(&self) -> Option<f64> {
        self.nu
            .integrate(|x| x * x, &Interval::real_line())
            .ok()
            .filter(|v: &f64| v.is_finite())
            .map(|v| v + self.sigma2)
    }
}

/// `e^{iux} − 1 − iux·1_{|x|≤1}` with the small-argument cancellation handled.
#[inline]
pub(crate) fn lk_integrand(u: f64, x: f64) -> Complex64 {
    let t = u * x;
    let half = (0.5 * t).sin();
    let re = -2.0 * half * half;
    let im = if x.abs() <= 1.0 {
        if t.abs() < 1e-3 {
            let t2 = t * t;
            -t * t2 / 6.0 * (1.0 - t2 / 20.0)
        } else {
            t.sin() - t
        }
    } else {
        t.sin()
    };
    Complex64::new(re, im)
}

/// `ψ(u)` of a triplet.
pub fn eval_exponent(triplet: &LevyTriplet, u: f64) -> Result<Complex64> {
    triplet.exponent(u)
}

/// Jump structure of a bivariate `(U, L)` pair.
#[derive(Debug, Clone)]
pub enum UlJumps {
    /// `ν_{U,L}` concentrated on the axes: `U` and `L` never jump together.
    Independent { nu_u: LevyMeasure, nu_l: LevyMeasure },
    /// Joint atoms `((z₁, z₂), mass)`.
    Joint(Vec<((f64, f64), f64)>),
}

/// A bivariate Lévy process `(U, L)` driving `dV = V₋ dU + dL`.
#[derive(Debug, Clone)]
pub struct UlSpec {
    pub gamma_u: f64,
    pub gamma_l: f64,
    pub sigma_u2: f64,
    pub sigma_ul: f64,
    pub sigma_l2: f64,
    pub jumps: UlJumps,
}

impl UlSpec {
    pub fn new(
        gamma_u: f64,
        gamma_l: f64,
        sigma_u2: f64,
        sigma_ul: f64,
        sigma_l2: f64,
        jumps: UlJumps,
    ) -> Result<Self> {
        if !(sigma_u2 >= 0.0 && sigma_l2 >= 0.0) {
            return Err(LabError::domain("Gaussian variances must be ≥ 0"));
        }
        if sigma_ul * sigma_ul > sigma_u2 * sigma_l2 * (1.0 + 1e-12) {
            return Err(LabError::domain("Gaussian covariance matrix is not positive semidefinite"));
        }
        if let UlJumps::Joint(atoms) = &jumps {
            for &((z1, z2), m) in atoms {
                if !(m > 0.0 && m.is_finite()) || (z1 == 0.0 && z2 == 0.0) || !z1.is_finite() || !z2.is_finite() {
                    return Err(LabError::domain("joint atoms need finite non-zero locations and positive mass"));
                }
            }
        }
        Ok(UlSpec { gamma_u, gamma_l, sigma_u2, sigma_ul, sigma_l2, jumps })
    }

    pub fn u_independent_of_l(&self) -> bool {
        self.sigma_ul == 0.0 && matches!(self.jumps, UlJumps::Independent { .. })
    }

    /// Marginal triplets of `U` and `L`.
    pub fn marginals(&self) -> Result<(LevyTriplet, LevyTriplet)> {
        match &self.jumps {
            UlJumps::Independent { nu_u, nu_l } => Ok((
                LevyTriplet::new(self.gamma_u, self.sigma_u2, nu_u.clone())?,
                LevyTriplet::new(self.gamma_l, self.sigma_l2, nu_l.clone())?,
            )),
            UlJumps::Joint(atoms) => {
                // Re-express the compensators with the marginal truncation |z_k| ≤ 1.
                let mut gu = self.gamma_u;
                let mut gl = self.gamma_l;
                let mut mu = Vec::new();
                let mut ml = Vec::new();
                for &((z1, z2), m) in atoms {
                    let joint_small = z1.hypot(z2) <= 1.0;
                    let corr = |z: f64| -> f64 {
                        let marginal_small = z.abs() <= 1.0;
                        m * z * ((marginal_small as u8 as f64) - (joint_small as u8 as f64))
                    };
                    gu += corr(z1);
                    gl += corr(z2);
                    if z1 != 0.0 {
                        mu.push((z1, m));
                    }
                    if z2 != 0.0 {
                        ml.push((z2, m));
                    }
                }
                Ok((
                    LevyTriplet::new(gu, self.sigma_u2, LevyMeasure::atoms(mu)?)?,
                    LevyTriplet::new(gl, self.sigma_l2, LevyMeasure::atoms(ml)?)?,
                ))
            }
        }
    }

    /// True when no jump of `U` lies in `(−∞, −1]`.
    pub fn in_bijection_domain(&self) -> bool {
        match &self.jumps {
            UlJumps::Independent { nu_u, .. } => match nu_u {
                LevyMeasure::Empty => true,
                LevyMeasure::Atoms(a) => a.iter().all(|a| a.location > -1.0),
                LevyMeasure::Density(d) => d.support.lo >= -1.0,
            },
            UlJumps::Joint(atoms) => atoms.iter().all(|((z1, _), _)| *z1 > -1.0),
        }
    }

    /// True when `ν_U({−1}) = 0`.
    pub fn no_jump_to_zero(&self) -> bool {
        match &self.jumps {
            UlJumps::Independent { nu_u, .. } => match nu_u {
                LevyMeasure::Atoms(a) => a.iter().all(|a| a.location != -1.0),
                _ => true,
            },
            UlJumps::Joint(atoms) => atoms.iter().all(|((z1, _), _)| *z1 != -1.0),
        }
    }
}

/// Law of one joint jump `(Δχ, Δη)` of a bivariate compound Poisson process.
#[derive(Debug, Clone)]
pub enum JointJumpLaw {
    /// `((Δχ, Δη), probability)`; probabilities sum to 1.
    Atoms(Vec<((f64, f64), f64)>),
    /// `Δχ = xi_jump` and `Δη ~ η_T` with `T ~ Exp(clock_rate)` independent of `η`.
    EtaAtExpTime {
        xi_jump: f64,
        eta: LevyTriplet,
        clock_rate: f64,
    },
}

/// Bivariate compound Poisson process `(χ, η)` without drift.
#[derive(Debug, Clone)]
pub struct JointCompoundPoisson {
    pub rate: f64,
    pub jumps: JointJumpLaw,
}

impl JointCompoundPoisson {
    pub fn new(rate: f64, jumps: JointJumpLaw) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(LabError::domain("joint compound Poisson rate must be positive"));
        }
        match &jumps {
            JointJumpLaw::Atoms(a) => {
                if a.is_empty() {
                    return Err(LabError::domain("joint jump law needs at least one atom"));
                }
                let total: f64 = a.iter().map(|(_, p)| *p).sum();
                if (total - 1.0).abs() > 1e-12 || a.iter().any(|(_, p)| !(*p >= 0.0)) {
                    return Err(LabError::domain(format!("joint jump probabilities sum to {total}, not 1")));
                }
            }
            JointJumpLaw::EtaAtExpTime { clock_rate, xi_jump, .. } => {
                if !(*clock_rate > 0.0) || !xi_jump.is_finite() {
                    return Err(LabError::domain("clock rate must be positive and χ jump finite"));
                }
            }
        }
        Ok(JointCompoundPoisson { rate, jumps })
    }

    /// `E Δχ`.
    pub fn mean_xi_jump(&self) -> f64 {
        match &self.jumps {
            JointJumpLaw::Atoms(a) => a.iter().map(|((x, _), p)| x * p).sum(),
            JointJumpLaw::EtaAtExpTime { xi_jump, .. } => *xi_jump,
        }
    }

    /// Law of `χ` alone.
    pub fn xi_marginal(&self) -> Result<LevyTriplet> {
        let atoms: Vec<(f64, f64)> = match &self.jumps {
            JointJumpLaw::Atoms(a) => a.iter().filter(|((x, _), _)| *x != 0.0).map(|((x, _), p)| (*x, self.rate * p)).collect(),
            JointJumpLaw::EtaAtExpTime { xi_jump, .. } => vec![(*xi_jump, self.rate)],
        };
        LevyTriplet::from_drift(0.0, 0.0, LevyMeasure::atoms(atoms)?)
    }
}

/// A bivariate driving pair for the exponential functional.
#[derive(Debug, Clone)]
pub enum DrivingSpec {
    IndependentXiEta { xi: LevyTriplet, eta: LevyTriplet },
    UlForm(UlSpec),
    JointCompoundPoisson(JointCompoundPoisson),
}

impl DrivingSpec {
    pub fn independent(xi: LevyTriplet, eta: LevyTriplet) -> Self {
        DrivingSpec::IndependentXiEta { xi, eta }
    }

    pub fn check_convergence(&self) -> Result<ConditionReport> {
        match self {
            DrivingSpec::IndependentXiEta { xi, eta } => Ok(check_convergence(xi, eta)),
            DrivingSpec::UlForm(ul) => {
                let (xi, eta, _) = ul_to_xi_eta(ul)?;
                Ok(check_convergence(&xi, &eta))
            }
            DrivingSpec::JointCompoundPoisson(j) => {
                let m = j.rate * j.mean_xi_jump();
                let (finite, note) = match &j.jumps {
                    JointJumpLaw::Atoms(_) => (true, None),
                    JointJumpLaw::EtaAtExpTime { eta, .. } => {
                        let ok = log_moment_finite(eta.nu());
                        (ok, (!ok).then(|| "log-moment of η at the jump clock is not finite".to_string()))
                    }
                };
                let mut notes: Vec<String> = note.into_iter().collect();
                if m <= 0.0 {
                    notes.push("Eξ₁ ≤ 0".into());
                }
                Ok(ConditionReport {
                    converges_sufficient: m > 0.0 && finite,
                    e_xi1: MeanValue::Finite(m),
                    e_logplus_eta1_finite: finite,
                    notes,
                })
            }
        }
    }

    /// The `(U, L)` form of this spec.
    pub fn to_ul(&self) -> Result<UlSpec> {
        match self {
            DrivingSpec::IndependentXiEta { xi, eta } => xi_eta_to_ul(xi, eta, 0.0),
            DrivingSpec::UlForm(ul) => Ok(ul.clone()),
            DrivingSpec::JointCompoundPoisson(j) => match &j.jumps {
                JointJumpLaw::Atoms(a) => {
                    let mut atoms = Vec::new();
                    let (mut gu, mut gl) = (0.0, 0.0);
                    for &((dx, dy), p) in a {
                        let z1 = (-dx).exp_m1();
                        let z2 = (-dx).exp() * dy;
                        let m = j.rate * p;
                        if z1 == 0.0 && z2 == 0.0 {
                            continue;
                        }
                        if z1.hypot(z2) <= 1.0 {
                            gu += m * z1;
                            gl += m * z2;
                        }
                        atoms.push(((z1, z2), m));
                    }
                    UlSpec::new(gu, gl, 0.0, 0.0, 0.0, UlJumps::Joint(atoms))
                }
                JointJumpLaw::EtaAtExpTime { .. } => Err(LabError::domain(
                    "sampled joint jump laws have no closed (U, L) form",
                )),
            },
        }
    }
}

/// Output of [`check_convergence`]. The condition is sufficient only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub converges_sufficient: bool,
    pub e_xi1: MeanValue,
    pub e_logplus_eta1_finite: bool,
    pub notes: Vec<String>,
}

fn log_moment_finite(nu: &LevyMeasure) -> bool {
    nu.integrate_regions(|x: f64| x.abs().ln(), &Interval::outside_unit_ball())
        .map(|v: f64| v.is_finite())
        .unwrap_or(false)
}

/// Sufficient condition `Eξ₁ > 0` and `E log⁺|η₁| < ∞` for a.s. convergence.
pub fn check_convergence(xi: &LevyTriplet, eta: &LevyTriplet) -> ConditionReport {
    let e_xi1 = xi.mean();
    let log_ok = log_moment_finite(eta.nu());
    let mut notes = Vec::new();
    match e_xi1 {
        MeanValue::Finite(m) if m <= 0.0 => notes.push("Eξ₁ ≤ 0".to_string()),
        MeanValue::Undefined => notes.push("Eξ₁ undefined: both tails of ν_ξ have infinite first moment".into()),
        MeanValue::MinusInfinity => notes.push("Eξ₁ = −∞".into()),
        _ => {}
    }
    if !log_ok {
        notes.push("∫_{|x|>1} log|x| ν_η(dx) did not converge; log⁺-moment of η₁ treated as infinite".into());
    }
    ConditionReport {
        converges_sufficient: e_xi1.is_positive() && log_ok,
        e_xi1,
        e_logplus_eta1_finite: log_ok,
        notes,
    }
}

/// `(ξ, η) ↦ (U, L)`: `U` has jumps `e^{−Δξ} − 1`, `σ_U² = σ_ξ²`, and
/// `L = η − t·σ_{ξ,η}` (jumps of ξ and η are taken to be non-simultaneous).
pub fn xi_eta_to_ul(xi: &LevyTriplet, eta: &LevyTriplet, sigma_xieta: f64) -> Result<UlSpec> {
    if sigma_xieta * sigma_xieta > xi.sigma2 * eta.sigma2 * (1.0 + 1e-12) {
        return Err(LabError::domain("|σ_ξη| exceeds √(σ_ξ² σ_η²)"));
    }
    let correction: f64 = xi.nu.integrate_split(
        |y| {
            let z = (-y).exp_m1();
            let big = if z.abs() <= 1.0 { z } else { 0.0 };
            let small = if y.abs() <= 1.0 { y } else { 0.0 };
            big + small
        },
        &Interval::real_line(),
        &[-std::f64::consts::LN_2],
        &QuadConfig::default(),
    )?;
    let gamma_u = -xi.gamma + 0.5 * xi.sigma2 + correction;
    UlSpec::new(
        gamma_u,
        eta.gamma - sigma_xieta,
        xi.sigma2,
        -sigma_xieta,
        eta.sigma2,
        UlJumps::Independent {
            nu_u: xi.nu.push_to_u(),
            nu_l: eta.nu.clone(),
        },
    )
}

/// Inverse of [`xi_eta_to_ul`]; returns `(ξ, η, σ_{ξ,η})`.
pub fn ul_to_xi_eta(spec: &UlSpec) -> Result<(LevyTriplet, LevyTriplet, f64)> {
    let (nu_u, nu_l) = match &spec.jumps {
        UlJumps::Independent { nu_u, nu_l } => (nu_u.clone(), nu_l.clone()),
        UlJumps::Joint(atoms) => {
            if atoms.iter().any(|((z1, z2), _)| *z1 != 0.0 && *z2 != 0.0) {
                return Err(LabError::domain(
                    "(U, L) with simultaneous jumps has no independent (ξ, η) marginal form",
                ));
            }
            let (u, l) = spec.marginals()?;
            (u.nu.clone(), l.nu.clone())
        }
    };
    if !spec.in_bijection_domain() {
        return Err(LabError::domain("ν_U charges (−∞, −1], outside the bijection domain"));
    }
    let (gamma_u, gamma_l) = match &spec.jumps {
        UlJumps::Independent { .. } => (spec.gamma_u, spec.gamma_l),
        UlJumps::Joint(_) => {
            let (u, l) = spec.marginals()?;
            (u.gamma, l.gamma)
        }
    };
    let nu_xi = nu_u.push_to_xi()?;
    let correction: f64 = nu_u.integrate_split(
        |z| {
            let y = -z.ln_1p();
            let big = if z.abs() <= 1.0 { z } else { 0.0 };
            let small = if y.abs() <= 1.0 { y } else { 0.0 };
            big + small
        },
        &Interval::real_line(),
        &[(-1f64).exp_m1(), 1f64.exp_m1()],
        &QuadConfig::default(),
    )?;
    let gamma_xi = -gamma_u + 0.5 * spec.sigma_u2 + correction;
    let sigma_xieta = -spec.sigma_ul;
    let xi = LevyTriplet::new(gamma_xi, spec.sigma_u2, nu_xi)?;
    let eta = LevyTriplet::new(gamma_l + sigma_xieta, spec.sigma_l2, nu_l)?;
    Ok((xi, eta, sigma_xieta))
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureJson {
    Empty,
    Atoms { atoms: Vec<[f64; 2]> },
    Density(DensityFamily),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Alternative to `gamma` for finite-variation triplets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default = "empty_measure")]
    pub nu: MeasureJson,
}

fn empty_measure() -> MeasureJson {
    MeasureJson::Empty
}

impl TryFrom<&MeasureJson> for LevyMeasure {
    type Error = LabError;
    fn try_from(m: &MeasureJson) -> Result<Self> {
        match m {
            MeasureJson::Empty => Ok(LevyMeasure::Empty),
            MeasureJson::Atoms { atoms } => LevyMeasure::atoms(atoms.iter().map(|a| (a[0], a[1]))),
            MeasureJson::Density(f) => LevyMeasure::from_family(*f),
        }
    }
}

impl TryFrom<&LevyMeasure> for MeasureJson {
    type Error = LabError;
    fn try_from(m: &LevyMeasure) -> Result<Self> {
        match m {
            LevyMeasure::Empty => Ok(MeasureJson::Empty),
            LevyMeasure::Atoms(a) => Ok(MeasureJson::Atoms {
                atoms: a.iter().map(|a| [a.location, a.mass]).collect(),
            }),
            LevyMeasure::Density(d) => d
                .family
                .map(MeasureJson::Density)
                .ok_or_else(|| LabError::domain(format!("density `{}` has no JSON form", d.label))),
        }
    }
}

impl TryFrom<&TripletJson> for LevyTriplet {
    type Error = LabError;
    fn try_from(t: &TripletJson) -> Result<Self> {
        let nu = LevyMeasure::try_from(&t.nu)?;
        match (t.gamma, t.drift) {
            (Some(g), None) => LevyTriplet::new(g, t.sigma2, nu),
            (None, Some(d)) => LevyTriplet::from_drift(d, t.sigma2, nu),
            (None, None) => LevyTriplet::new(0.0, t.sigma2, nu),
            (Some(_), Some(_)) => Err(LabError::config("gamma", "give either `gamma` or `drift`, not both")),
        }
    }
}

impl TryFrom<&LevyTriplet> for TripletJson {
    type Error = LabError;
    fn try_from(t: &LevyTriplet) -> Result<Self> {
        Ok(TripletJson {
            gamma: Some(t.gamma),
            drift: None,
            sigma2: t.sigma2,
            nu: MeasureJson::try_from(&t.nu)?,
        })
    }
}

/// Bivariate specs on the wire. Without a `kind` tag the object is read as
/// an independent-or-Gaussian-correlated `(ξ, η)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DrivingSpecJson {
    Tagged(TaggedSpecJson),
    XiEta {
        xi: TripletJson,
        eta: TripletJson,
        #[serde(default)]
        sigma_cross: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaggedSpecJson {
    Ul {
        gamma_u: f64,
        gamma_l: f64,
        #[serde(default)]
        sigma_u2: f64,
        #[serde(default)]
        sigma_ul: f64,
        #[serde(default)]
        sigma_l2: f64,
        #[serde(default = "empty_measure")]
        nu_u: MeasureJson,
        #[serde(default = "empty_measure")]
        nu_l: MeasureJson,
    },
    JointCpp {
        rate: f64,
        /// `[Δχ, Δη, probability]` triples.
        jumps: Vec<[f64; 3]>,
    },
}

impl TryFrom<&DrivingSpecJson> for DrivingSpec {
    type Error = LabError;
    fn try_from(s: &DrivingSpecJson) -> Result<Self> {
        match s {
            DrivingSpecJson::XiEta { xi, eta, sigma_cross } => {
                let xi = LevyTriplet::try_from(xi)?;
                let eta = LevyTriplet::try_from(eta)?;
                if *sigma_cross == 0.0 {
                    Ok(DrivingSpec::independent(xi, eta))
                } else {
                    Ok(DrivingSpec::UlForm(xi_eta_to_ul(&xi, &eta, *sigma_cross)?))
                }
            }
            DrivingSpecJson::Tagged(TaggedSpecJson::Ul {
                gamma_u,
                gamma_l,
                sigma_u2,
                sigma_ul,
                sigma_l2,
                nu_u,
                nu_l,
            }) => Ok(DrivingSpec::UlForm(UlSpec::new(
                *gamma_u,
                *gamma_l,
                *sigma_u2,
                *sigma_ul,
                *sigma_l2,
                UlJumps::Independent {
                    nu_u: LevyMeasure::try_from(nu_u)?,
                    nu_l: LevyMeasure::try_from(nu_l)?,
                },
            )?)),
            DrivingSpecJson::Tagged(TaggedSpecJson::JointCpp { rate, jumps }) => {
                let atoms = jumps.iter().map(|j| ((j[0], j[1]), j[2])).collect();
                Ok(DrivingSpec::JointCompoundPoisson(JointCompoundPoisson::new(
                    *rate,
                    JointJumpLaw::Atoms(atoms),
                )?))
            }
        }
    }
}

impl TryFrom<&DrivingSpec> for DrivingSpecJson {
    type Error = LabError;
    fn try_from(s: &DrivingSpec) -> Result<Self> {
        match s {
            DrivingSpec::IndependentXiEta { xi, eta } => Ok(DrivingSpecJson::XiEta {
                xi: xi.try_into()?,
                eta: eta.try_into()?,
                sigma_cross: 0.0,
            }),
            DrivingSpec::UlForm(ul) => match &ul.jumps {
                UlJumps::Independent { nu_u, nu_l } => Ok(DrivingSpecJson::Tagged(TaggedSpecJson::Ul {
                    gamma_u: ul.gamma_u,
                    gamma_l: ul.gamma_l,
                    sigma_u2: ul.sigma_u2,
                    sigma_ul: ul.sigma_ul,
                    sigma_l2: ul.sigma_l2,
                    nu_u: nu_u.try_into()?,
                    nu_l: nu_l.try_into()?,
                })),
                UlJumps::Joint(_) => Err(LabError::domain("joint (U, L) atoms have no JSON form")),
            },
            DrivingSpec::JointCompoundPoisson(j) => match &j.jumps {
                JointJumpLaw::Atoms(a) => Ok(DrivingSpecJson::Tagged(TaggedSpecJson::JointCpp {
                    rate: j.rate,
                    jumps: a.iter().map(|((x, y), p)| [*x, *y, *p]).collect(),
                })),
                JointJumpLaw::EtaAtExpTime { .. } => Err(LabError::domain("sampled joint jump laws have no JSON form")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn jump_diffusion() -> (LevyTriplet, LevyTriplet) {
        let xi = LevyTriplet::new(
            1.0,
            0.25,
            LevyMeasure::atoms([(0.5, 0.5), (-0.3, 0.3), (1.7, 0.2)]).unwrap(),
        )
        .unwrap();
        let eta = LevyTriplet::new(0.2, 1.0, LevyMeasure::atoms([(1.0, 0.5), (-2.0, 0.5)]).unwrap()).unwrap();
        (xi, eta)
    }

    #[test]
    fn standard_normal_exponent() {
        let psi = LevyTriplet::brownian(1.0).exponent(2.0).unwrap();
        assert_eq!(psi, Complex64::new(-2.0, 0.0));
    }

    #[test]
    fn poisson_exponent_at_pi() {
        let psi = LevyTriplet::poisson(1.0).exponent(PI).unwrap();
        assert!((psi - Complex64::new(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn deterministic_drift_exponent() {
        let t = LevyTriplet::from_drift(2.0, 0.0, LevyMeasure::Empty).unwrap();
        assert_eq!(t.exponent(3.0).unwrap(), Complex64::new(0.0, 6.0));
    }

    #[test]
    fn exponent_at_zero_is_exactly_zero_and_symmetric() {
        let (xi, _) = jump_diffusion();
        assert_eq!(xi.exponent(0.0).unwrap(), Complex64::new(0.0, 0.0));
        let a = xi.exponent(1.3).unwrap();
        let b = xi.exponent(-1.3).unwrap();
        assert_eq!(a.conj(), b);
    }

    #[test]
    fn density_exponent_matches_closed_form() {
        // Exponential jumps of rate 2, mass 1: ∫(e^{iux}−1)ν(dx) = iu/(2−iu).
        let nu = LevyMeasure::from_family(DensityFamily::Exponential { mass: 1.0, rate: 2.0 }).unwrap();
        let t = LevyTriplet::from_drift(0.0, 0.0, nu).unwrap();
        let u = 1.5;
        let i = Complex64::new(0.0, 1.0);
        let expected = i * u / (2.0 - i * u);
        assert!((t.exponent(u).unwrap() - expected).norm() < 1e-9);
    }

    #[test]
    fn measure_integral_atoms_second_moment() {
        let nu = LevyMeasure::atoms([(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert_eq!(measure_integral(&nu, |x| x * x, &Interval::real_line()).unwrap(), 1.0);
    }

    #[test]
    fn measure_integral_example_tail() {
        let n = 4.0f64;
        let big = n.powf(n);
        let nu = LevyMeasure::atoms([
            (1.0, (1.0 - 1.0 / n) * 0.5),
            (-1.0, (1.0 - 1.0 / n) * 0.5),
            (big, 0.5 / n),
            (-big, 0.5 / n),
        ])
        .unwrap();
        let v = measure_integral(&nu, f64::ln, &Interval::open(1.0, f64::INFINITY)).unwrap();
        assert!((v - 0.5 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn measure_integral_density_against_riemann_sum() {
        let nu = LevyMeasure::density(|x: f64| (-x).exp(), Interval::open(0.0, f64::INFINITY), -1.0, "exp").unwrap();
        let v = measure_integral(&nu, |x| x.max(1.0).ln(), &Interval::open(1.0, f64::INFINITY)).unwrap();
        // Brute-force midpoint sum on (1, 41); the neglected tail is below 1e-16.
        let m = 1_000_000;
        let h = 40.0 / m as f64;
        let brute: f64 = (0..m)
            .map(|k| {
                let x = 1.0 + (k as f64 + 0.5) * h;
                x.ln() * (-x).exp() * h
            })
            .sum();
        assert!((v - brute).abs() < 1e-8, "{v} vs {brute}");
    }

    #[test]
    fn atoms_merge_and_drop_zero_mass() {
        let nu = LevyMeasure::atoms([(1.0, 0.0), (-1.0, 0.0), (1.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert_eq!(
            nu.as_atoms().unwrap(),
            &[Atom { location: -1.0, mass: 0.5 }, Atom { location: 1.0, mass: 0.5 }]
        );
        assert!(LevyMeasure::atoms([(0.0, 1.0)]).is_err());
        assert!(LevyMeasure::atoms([(1.0, -1.0)]).is_err());
    }

    #[test]
    fn drift_round_trip_is_consistent() {
        let nu = LevyMeasure::from_family(DensityFamily::TemperedStable { c: 1.0, alpha: 0.5, lambda: 1.0 }).unwrap();
        let t = LevyTriplet::from_drift(0.3, 0.0, nu).unwrap();
        assert!((t.drift().unwrap() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn deterministic_xi_to_ul() {
        let eta = LevyTriplet::brownian(2.0);
        let ul = xi_eta_to_ul(&LevyTriplet::deterministic(1.0), &eta, 0.0).unwrap();
        assert_eq!(ul.gamma_u, -1.0);
        assert_eq!(ul.sigma_u2, 0.0);
        assert_eq!(ul.gamma_l, eta.gamma());
        assert_eq!(ul.sigma_l2, eta.sigma2());
        match &ul.jumps {
            UlJumps::Independent { nu_u, nu_l } => {
                assert!(nu_u.is_empty());
                assert!(nu_l.is_empty());
            }
            _ => panic!("expected independent jumps"),
        }
        let (xi, eta2, s) = ul_to_xi_eta(&ul).unwrap();
        assert_eq!(xi.gamma(), 1.0);
        assert_eq!(eta2.sigma2(), 2.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn poisson_xi_gives_single_u_atom() {
        let ul = xi_eta_to_ul(&LevyTriplet::poisson(1.0), &LevyTriplet::deterministic(1.0), 0.0).unwrap();
        let UlJumps::Independent { nu_u, .. } = &ul.jumps else { panic!() };
        let atoms = nu_u.as_atoms().unwrap();
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].location - ((-1f64).exp() - 1.0)).abs() < 1e-16);
        assert_eq!(atoms[0].mass, 1.0);
        // U is pure jump without drift: γ_U equals the compensated atom.
        assert!((ul.gamma_u - atoms[0].location).abs() < 1e-15);
        let (xi, _, _) = ul_to_xi_eta(&ul).unwrap();
        let back = xi.nu().as_atoms().unwrap();
        assert!((back[0].location - 1.0).abs() < 1e-15);
        assert!((xi.gamma() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bijection_round_trip_atoms() {
        let (xi, eta) = jump_diffusion();
        let ul = xi_eta_to_ul(&xi, &eta, 0.2).unwrap();
        let (xi2, eta2, s) = ul_to_xi_eta(&ul).unwrap();
        assert!((xi2.gamma() - xi.gamma()).abs() < 1e-14);
        assert_eq!(xi2.sigma2(), xi.sigma2());
        assert!((eta2.gamma() - eta.gamma()).abs() < 1e-14);
        assert_eq!(s, 0.2);
        for (a, b) in xi.nu().as_atoms().unwrap().iter().zip(xi2.nu().as_atoms().unwrap()) {
            assert!((a.location - b.location).abs() < 1e-14);
            assert_eq!(a.mass, b.mass);
        }
    }

    #[test]
    fn bijection_round_trip_density() {
        let nu = LevyMeasure::from_family(DensityFamily::TwoSidedExponential { mass: 2.0, rate: 3.0 }).unwrap();
        let xi = LevyTriplet::new(0.7, 0.1, nu).unwrap();
        let ul = xi_eta_to_ul(&xi, &LevyTriplet::brownian(1.0), 0.0).unwrap();
        let (xi2, _, _) = ul_to_xi_eta(&ul).unwrap();
        assert!((xi2.gamma() - xi.gamma()).abs() < 1e-8);
        for u in [-2.0, 0.5, 3.0] {
            let a = xi.exponent(u).unwrap();
            let b = xi2.exponent(u).unwrap();
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn ul_to_xi_rejects_jumps_below_minus_one() {
        let ul = UlSpec::new(
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            UlJumps::Independent {
                nu_u: LevyMeasure::atoms([(-1.5, 1.0)]).unwrap(),
                nu_l: LevyMeasure::Empty,
            },
        )
        .unwrap();
        assert!(ul_to_xi_eta(&ul).is_err());
    }

    #[test]
    fn convergence_conditions() {
        let r = check_convergence(&LevyTriplet::deterministic(1.0), &LevyTriplet::brownian(1.0));
        assert!(r.converges_sufficient);
        assert_eq!(r.e_xi1, MeanValue::Finite(1.0));

        let r = check_convergence(&LevyTriplet::deterministic(-1.0), &LevyTriplet::brownian(1.0));
        assert!(!r.converges_sufficient);
        assert!(r.notes.iter().any(|n| n.contains("Eξ₁ ≤ 0")));

        let heavy = LevyMeasure::from_family(DensityFamily::LogTail { c: 1.0, lower: std::f64::consts::E }).unwrap();
        let eta = LevyTriplet::from_drift(0.0, 0.0, heavy).unwrap();
        let r = check_convergence(&LevyTriplet::poisson(1.0), &eta);
        assert!(!r.converges_sufficient);
        assert!(!r.e_logplus_eta1_finite);
    }

    #[test]
    fn poisson_mean_and_laplace_exponent() {
        let p = LevyTriplet::poisson(2.0);
        assert_eq!(p.mean(), MeanValue::Finite(2.0));
        let l = p.laplace_exponent(1.0).unwrap().unwrap();
        assert!((l - 2.0 * ((-1f64).exp() - 1.0)).abs() < 1e-15);
        assert!(p.is_subordinator());
        assert!(!LevyTriplet::brownian(1.0).is_subordinator());
    }

    #[test]
    fn scaling_matches_exponent() {
        let (_, eta) = jump_diffusion();
        let c = -2.5;
        let s = eta.scale(c).unwrap();
        for u in [0.3, 1.1, -0.7] {
            assert!((s.exponent(u).unwrap() - eta.exponent(c * u).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn triplet_json_round_trip() {
        let (xi, _) = jump_diffusion();
        let j = TripletJson::try_from(&xi).unwrap();
        let text = serde_json::to_string(&j).unwrap();
        let back: TripletJson = serde_json::from_str(&text).unwrap();
        let xi2 = LevyTriplet::try_from(&back).unwrap();
        assert_eq!(xi2.gamma(), xi.gamma());
        assert_eq!(xi2.nu().as_atoms(), xi.nu().as_atoms());

        let spec: DrivingSpecJson = serde_json::from_str(
            r#"{"xi": {"gamma": 1.0, "sigma2": 0.0, "nu": {"type": "empty"}},
                "eta": {"gamma": 0.0, "sigma2": 2.0, "nu": {"type": "density", "family": "exponential", "mass": 1.0, "rate": 1.0}},
                "sigma_cross": 0.0}"#,
        )
        .unwrap();
        let spec = DrivingSpec::try_from(&spec).unwrap();
        assert!(matches!(spec, DrivingSpec::IndependentXiEta { .. }));
    }
}
