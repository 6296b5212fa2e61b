//! Monte Carlo draws of `V∞ = ∫₀^∞ e^{−ξ_{s−}} dη_s` and paths of the
//! generalized Ornstein–Uhlenbeck process
//! `V_t = e^{−ξ_t}(V₀ + ∫₀^t e^{ξ_{s−}} dη_s)`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charstats::hill_tail_index;
use crate::error::{LabError, Result};
use crate::levy_spec::{
    ul_to_xi_eta, DrivingSpec, JointCompoundPoisson, JointJumpLaw, LevyMeasure, LevyTriplet, UlJumps, UlSpec,
};
use crate::pathsim::{BivariateSampler, FixedStep, JumpDist, LevySampler, PathGrid, RngStream, Scheme, SeriesKind};

/// How a sample was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Euler { scheme: Scheme },
    CppSeries { tol: f64 },
    FixedPoint { b: f64, terms: usize },
    /// Draws supplied from outside (an analytic sampler or a file).
    External,
}

/// Diagnostics for the truncation of the infinite horizon or series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruncationReport {
    /// Estimated bound on `|E[neglected tail]|`.
    pub tail_bound: f64,
    /// Shift of the (pilot) sample mean when the horizon doubles.
    pub doubling_delta: f64,
}

/// Draws of `V∞` with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFunSample {
    pub values: Vec<f64>,
    pub estimator: Estimator,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    pub bias_report: TruncationReport,
    pub warnings: Vec<String>,
}

impl ExpFunSample {
    /// Wraps externally produced draws; rejects non-finite values.
    pub fn from_values(values: Vec<f64>, seed: u64) -> Result<Self> {
        check_finite(&values)?;
        Ok(ExpFunSample {
            values,
            estimator: Estimator::External,
            horizon: f64::INFINITY,
            step: 0.0,
            seed,
            bias_report: TruncationReport::default(),
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard error of the sample mean.
    pub fn mean_se(&self) -> f64 {
        let n = self.values.len() as f64;
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// Every draw multiplied by `c`.
    pub fn scaled(&self, c: f64) -> ExpFunSample {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= c);
        s
    }

    /// Single-column CSV with `#`-prefixed metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# estimator: {}", serde_json::to_string(&self.estimator)?)?;
        writeln!(w, "# horizon: {}", self.horizon)?;
        writeln!(w, "# step: {}", self.step)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# tail_bound: {}", self.bias_report.tail_bound)?;
        writeln!(w, "# doubling_delta: {}", self.bias_report.doubling_delta)?;
        writeln!(w, "# n: {}", self.values.len())?;
        writeln!(w, "v")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    /// Reads the format of [`write_csv`]; unknown or absent metadata is
    /// tolerated so that plain one-column files also load.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut s = ExpFunSample::from_values(Vec::new(), 0)?;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(meta) = t.strip_prefix('#') {
                let Some((key, value)) = meta.split_once(':') else { continue };
                let value = value.trim();
                let num = || value.parse::<f64>().ok();
                match key.trim() {
                    "estimator" => s.estimator = serde_json::from_str(value).unwrap_or(Estimator::External),
                    "horizon" => s.horizon = num().unwrap_or(s.horizon),
                    "step" => s.step = num().unwrap_or(s.step),
                    "seed" => s.seed = value.parse().unwrap_or(0),
                    "tail_bound" => s.bias_report.tail_bound = num().unwrap_or(0.0),
                    "doubling_delta" => s.bias_report.doubling_delta = num().unwrap_or(0.0),
                    _ => {}
                }
                continue;
            }
            if t == "v" {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| LabError::config("sample", format!("line {}: `{t}` is not a number", lineno + 1)))?;
            s.values.push(v);
        }
        check_finite(&s.values)?;
        Ok(s)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LabError::numerical(format!("draw {i} is not finite ({})", values[i]))),
        None => Ok(()),
    }
}

/// Options of [`estimate_euler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerOptions {
    /// `None` picks the smallest `T` with `E e^{−ξ_T} < 1e−4`.
    pub horizon: Option<f64>,
    pub step: f64,
    /// Proceed (with a warning) when the sufficient convergence condition fails.
    pub allow_unverified: bool,
    /// `None` chooses event-driven simulation when both drivers are drift
    /// plus finitely many jumps, the grid otherwise. `EventDriven` may also be
    /// requested when only ξ is drift plus jumps and η's Gaussian part is
    /// independent of it; segment integrals are then sampled exactly.
    pub scheme: Option<Scheme>,
    /// Paths in the horizon-doubling pilot.
    pub pilot_draws: usize,
}

impl Default for EulerOptions {
    fn default() -> Self {
        EulerOptions {
            horizon: None,
            step: 1e-3,
            allow_unverified: false,
            scheme: None,
            pilot_draws: 2000,
        }
    }
}

const HORIZON_TARGET: f64 = 1e-4;
const MAX_PILOT_HORIZON: f64 = 16384.0;

/// `(ξ, η)` sampler plus the Laplace exponent `log E e^{−ξ₁}` when known.
struct Drivers {
    pair: BivariateSampler,
    kappa: Option<f64>,
}

fn joint_dist(j: &JointCompoundPoisson) -> Result<JumpDist> {
    match &j.jumps {
        JointJumpLaw::Atoms(a) => JumpDist::joint_atoms(a),
        JointJumpLaw::EtaAtExpTime { xi_jump, eta, clock_rate } => {
            let s = LevySampler::new(eta)?;
            let (x, c) = (*xi_jump, *clock_rate);
            Ok(JumpDist::joint_fn(move |rng: &mut ChaCha8Rng| {
                let e: f64 = Exp1.sample(rng);
                (x, s.increment(e / c, rng))
            }))
        }
    }
}

fn drivers(spec: &DrivingSpec) -> Result<Drivers> {
    match spec {
        DrivingSpec::IndependentXiEta { xi, eta } => Ok(Drivers {
            pair: BivariateSampler::new(xi, eta, 0.0, None)?,
            kappa: xi.laplace_exponent(1.0)?,
        }),
        DrivingSpec::UlForm(ul) => {
            let (xi, eta, cov) = ul_to_xi_eta(ul)?;
            Ok(Drivers {
                pair: BivariateSampler::new(&xi, &eta, cov, None)?,
                kappa: xi.laplace_exponent(1.0)?,
            })
        }
        DrivingSpec::JointCompoundPoisson(j) => {
            let zero = LevyTriplet::deterministic(0.0);
            let kappa = match &j.jumps {
                JointJumpLaw::Atoms(a) => j.rate * a.iter().map(|((x, _), p)| p * (-x).exp_m1()).sum::<f64>(),
                JointJumpLaw::EtaAtExpTime { xi_jump, .. } => j.rate * (-xi_jump).exp_m1(),
            };
            Ok(Drivers {
                pair: BivariateSampler::new(&zero, &zero, 0.0, Some((j.rate, joint_dist(j)?)))?,
                kappa: Some(kappa).filter(|k| k.is_finite()),
            })
        }
    }
}

#[inline]
fn drift_integral(a: f64, h: f64) -> f64 {
    // ∫₀^h e^{−a s} ds
    let x = a * h;
    if x.abs() < 1e-8 {
        h * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / a
    }
}

/// Partial functional `∫₀^t e^{−ξ_{s−}} dη_s` along one path.
struct FunctionalPath<'a> {
    pair: &'a BivariateSampler,
    fixed: &'a FixedStep<'a>,
    scheme: Scheme,
    step: f64,
    /// Gaussian variance rate of η used between events.
    eta_var: f64,
    rng: ChaCha8Rng,
    steps_done: u64,
    t: f64,
    xi: f64,
    v: f64,
    next_event: f64,
}

impl<'a> FunctionalPath<'a> {
    fn new(pair: &'a BivariateSampler, fixed: &'a FixedStep<'a>, scheme: Scheme, step: f64, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let next_event = match scheme {
            Scheme::EventDriven => pair_wait(pair, &mut rng),
            Scheme::GridEuler => f64::INFINITY,
        };
        let eta_var = pair.marginals().1.gauss_var();
        FunctionalPath { pair, fixed, scheme, step, eta_var, rng, steps_done: 0, t: 0.0, xi: 0.0, v: 0.0, next_event }
    }

    fn advance_to(&mut self, horizon: f64) {
        match self.scheme {
            Scheme::GridEuler => {
                let target = (horizon / self.step).round() as u64;
                if self.fixed.first_is_deterministic() {
                    // e^{−ξ} evolves by a constant factor per step.
                    let c = self.fixed.first_drift();
                    let factor = (-c).exp();
                    let mut w = (-self.xi).exp();
                    let start = self.steps_done;
                    while self.steps_done < target {
                        let (_, deta) = self.fixed.increment(&mut self.rng);
                        self.v += w * deta;
                        w *= factor;
                        self.steps_done += 1;
                    }
                    self.xi += c * (target.saturating_sub(start)) as f64;
                } else {
                    while self.steps_done < target {
                        let (dxi, deta) = self.fixed.increment(&mut self.rng);
                        // Left-point evaluation of the integrand.
                        self.v += (-self.xi).exp() * deta;
                        self.xi += dxi;
                        self.steps_done += 1;
                    }
                }
                self.t = target as f64 * self.step;
            }
            Scheme::EventDriven => {
                let (a, b) = self.pair.drifts();
                loop {
                    let stop = self.next_event.min(horizon);
                    let h = stop - self.t;
                    if h > 0.0 {
                        let w = (-self.xi).exp();
                        if b != 0.0 {
                            self.v += b * w * drift_integral(a, h);
                        }
                        if self.eta_var > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut self.rng);
                            self.v += w * (self.eta_var * drift_integral(2.0 * a, h)).sqrt() * z;
                        }
                        self.xi += a * h;
                        self.t = stop;
                    }
                    if self.next_event > horizon {
                        break;
                    }
                    let (dxi, deta) = self.pair.sample_event(&mut self.rng);
                    self.v += (-self.xi).exp() * deta;
                    self.xi += dxi;
                    self.next_event = self.t + pair_wait(self.pair, &mut self.rng);
                }
            }
        }
    }
}

fn pair_wait<R: Rng + ?Sized>(pair: &BivariateSampler, rng: &mut R) -> f64 {
    let r = pair.event_rate();
    if r == 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = Exp1.sample(rng);
    e / r
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn pilot_stream(stream: RngStream) -> RngStream {
    stream.substream(u64::MAX)
}

/// Horizon-truncated left-point estimator of `V∞`.
///
/// Finite-activity drivers without Gaussian parts are simulated exactly
/// between jumps unless `force_grid` is set; the report then records
/// [`Scheme::EventDriven`].
pub fn estimate_euler(spec: &DrivingSpec, opts: &EulerOptions, n: usize, stream: RngStream) -> Result<ExpFunSample> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(LabError::domain(format!("step must be positive, got {}", opts.step)));
    }
    if n == 0 {
        return Err(LabError::domain("n must be positive"));
    }
    let mut warnings = Vec::new();
    let report = spec.check_convergence()?;
    if !report.converges_sufficient {
        let msg = format!("sufficient convergence condition fails: {}", report.notes.join("; "));
        if !opts.allow_unverified {
            return Err(LabError::precondition(msg));
        }
        warnings.push(msg);
    }
    let d = drivers(spec)?;
    let scheme = match opts.scheme {
        None if d.pair.is_drift_plus_jumps() => Scheme::EventDriven,
        None | Some(Scheme::GridEuler) => Scheme::GridEuler,
        Some(Scheme::EventDriven) => {
            if !d.pair.first_is_drift_plus_jumps() {
                return Err(LabError::precondition(
                    "event-driven simulation needs ξ to be drift plus finitely many jumps, uncorrelated with η",
                ));
            }
            Scheme::EventDriven
        }
    };
    let fixed = FixedStep::new(&d.pair, opts.step);
    let pilot_n = opts.pilot_draws.max(2);
    let mut pilot: Vec<FunctionalPath> = (0..pilot_n as u64)
        .map(|i| FunctionalPath::new(&d.pair, &fixed, scheme, opts.step, pilot_stream(stream).substream(i)))
        .collect();

    let horizon = match (opts.horizon, d.kappa) {
        (Some(h), _) => h,
        (None, Some(k)) if k < 0.0 => HORIZON_TARGET.ln() / k,
        (None, _) => {
            // Doubling search on the pilot paths.
            let mut t = 1.0;
            loop {
                pilot.par_iter_mut().for_each(|p| p.advance_to(t));
                let m = mean(&pilot.iter().map(|p| (-p.xi).exp()).collect::<Vec<_>>());
                if m < HORIZON_TARGET {
                    break t;
                }
                t *= 2.0;
                if t > MAX_PILOT_HORIZON {
                    return Err(LabError::numerical(format!(
                        "no horizon up to {MAX_PILOT_HORIZON} brings the pilot mean of e^(−ξ_T) below {HORIZON_TARGET}"
                    )));
                }
            }
        }
    };
    if !(horizon > opts.step || scheme == Scheme::EventDriven) || !horizon.is_finite() {
        return Err(LabError::domain(format!("horizon {horizon} must be finite and exceed the step {}", opts.step)));
    }

    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut p = FunctionalPath::new(&d.pair, &fixed, scheme, opts.step, stream.substream(i));
            p.advance_to(horizon);
            p.v
        })
        .collect();
    check_finite(&values)?;

    pilot.par_iter_mut().for_each(|p| p.advance_to(horizon));
    let decay = mean(&pilot.iter().map(|p| (-p.xi).exp()).collect::<Vec<_>>());
    let at_t: Vec<f64> = pilot.iter().map(|p| p.v).collect();
    pilot.par_iter_mut().for_each(|p| p.advance_to(2.0 * horizon));
    let at_2t: Vec<f64> = pilot.iter().map(|p| p.v).collect();
    let abs_mean = mean(&at_2t.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let bias_report = TruncationReport {
        tail_bound: finite_or_max(decay * abs_mean),
        doubling_delta: finite_or_max((mean(&at_2t) - mean(&at_t)).abs()),
    };
    let mut sample = ExpFunSample {
        values,
        estimator: Estimator::Euler { scheme },
        horizon,
        step: opts.step,
        seed: stream.seed,
        bias_report,
        warnings,
    };
    if n > 1 {
        let se = sample.mean_se();
        if bias_report.doubling_delta > 3.0 * se && se > 0.0 {
            sample.warnings.push(format!(
                "horizon-doubling shift {:.3e} exceeds 3 SE of the mean ({:.3e}); consider a longer horizon",
                bias_report.doubling_delta, se
            ));
        }
    }
    Ok(sample)
}

fn finite_or_max(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

const MAX_SERIES_TERMS: u64 = 10_000_000;

/// Exact-in-time series over the jump times of a compound Poisson `ξ`:
/// `V∞ = Σ_i (∏_{k≤i} e^{−Δξ_{T_k}}) (η_{T_{i+1}} − η_{T_i})`, truncated when
/// the running product drops below `tol` (after one term when `tol ≥ 1`).
pub fn estimate_cpp_series(
    xi: &LevyTriplet,
    eta: &LevyTriplet,
    tol: f64,
    n: usize,
    stream: RngStream,
) -> Result<ExpFunSample> {
    let atoms = match (xi.sigma2(), xi.nu()) {
        (0.0, LevyMeasure::Atoms(a)) => a.clone(),
        _ => return Err(LabError::precondition("series estimator needs ξ compound Poisson with atomic jumps")),
    };
    if xi.drift().is_none_or(|d| d.abs() > 1e-12) {
        return Err(LabError::precondition("series estimator needs ξ without drift"));
    }
    if !(tol > 0.0) {
        return Err(LabError::domain("tol must be positive"));
    }
    let rate: f64 = atoms.iter().map(|a| a.mass).sum();
    let mean_jump: f64 = atoms.iter().map(|a| a.location * a.mass).sum::<f64>() / rate;
    if mean_jump <= 0.0 {
        return Err(LabError::precondition(format!(
            "mean jump of ξ is {mean_jump} ≤ 0; the series need not contract"
        )));
    }
    let jumps = JumpDist::atoms(&atoms.iter().map(|a| (a.location, a.mass / rate)).collect::<Vec<_>>())?;
    let eta_s = LevySampler::new(eta)?;
    let mut warnings = Vec::new();
    if eta_s.epsilon() > 0.0 {
        warnings.push(format!(
            "η increments over exponential times use the small-jump Gaussian substitute (ε = {:.3e})",
            eta_s.epsilon()
        ));
    }
    let tol2 = if tol >= 1.0 { tol } else { tol * tol };

    struct Draw {
        v: f64,
        v_fine: f64,
        product: f64,
        time: f64,
    }
    let draws: Vec<Result<Draw>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(i).rng();
            let (mut p, mut v, mut t) = (1.0f64, 0.0f64, 0.0f64);
            let mut first: Option<(f64, f64, f64)> = None;
            for term in 1..=MAX_SERIES_TERMS {
                let e: f64 = Exp1.sample(&mut rng);
                let tau = e / rate;
                t += tau;
                v += p * eta_s.increment(tau, &mut rng);
                let (dx, _) = jumps.sample(&mut rng);
                p *= (-dx).exp();
                if first.is_none() && (p < tol || tol >= 1.0) {
                    first = Some((v, p, t));
                }
                if let Some((v0, p0, t0)) = first {
                    if p < tol2 || tol >= 1.0 {
                        return Ok(Draw { v: v0, v_fine: v, product: p0, time: t0 });
                    }
                }
                if term == MAX_SERIES_TERMS {
                    break;
                }
            }
            Err(LabError::numerical(format!("series did not reach tol after {MAX_SERIES_TERMS} terms")))
        })
        .collect();
    let draws: Vec<Draw> = draws.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = draws.iter().map(|d| d.v).collect();
    check_finite(&values)?;
    let fine: Vec<f64> = draws.iter().map(|d| d.v_fine).collect();
    let abs_mean = mean(&values.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let bias_report = TruncationReport {
        tail_bound: finite_or_max(mean(&draws.iter().map(|d| d.product).collect::<Vec<_>>()) * abs_mean),
        doubling_delta: finite_or_max((mean(&fine) - mean(&values)).abs()),
    };
    Ok(ExpFunSample {
        values,
        estimator: Estimator::CppSeries { tol },
        horizon: mean(&draws.iter().map(|d| d.time).collect::<Vec<_>>()),
        step: 0.0,
        seed: stream.seed,
        bias_report,
        warnings,
    })
}

/// Scalar sampler handle used by the fixed-point construction.
pub type ScalarSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;

/// Draws of `Σ_{k<terms} b^k Z_k` with i.i.d. `Z_k`.
pub fn fixed_point_series(z: &ScalarSampler, b: f64, n: usize, terms: usize, stream: RngStream) -> Result<ExpFunSample> {
    if !(b > 0.0 && b < 1.0) {
        return Err(LabError::domain(format!("b must lie in (0, 1), got {b}")));
    }
    if terms == 0 {
        return Err(LabError::domain("terms must be ≥ 1"));
    }
    let mut warnings = Vec::new();
    // Screen E log⁺|Z| on a pilot sample.
    let mut prng = pilot_stream(stream).rng();
    let logs: Vec<f64> = (0..10_000).map(|_| z(&mut prng).abs().ln().max(0.0)).collect();
    if let Some(alpha) = hill_tail_index(&logs) {
        if alpha < 2.0 {
            warnings.push(format!(
                "log⁺|Z| has Hill tail index {alpha:.3}; E log⁺|Z| may be infinite and the series may not converge"
            ));
        }
    }
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(i).rng();
            let (mut w, mut bk) = (0.0, 1.0);
            for _ in 0..terms {
                w += bk * z(&mut rng);
                bk *= b;
            }
            w
        })
        .collect();
    check_finite(&values)?;
    let tail = b.powi(terms.min(i32::MAX as usize) as i32) / (1.0 - b);
    let zmean = mean(&logs.iter().map(|l| l.exp()).collect::<Vec<_>>());
    Ok(ExpFunSample {
        values,
        estimator: Estimator::FixedPoint { b, terms },
        horizon: terms as f64,
        step: 1.0,
        seed: stream.seed,
        bias_report: TruncationReport { tail_bound: finite_or_max(tail * zmean), doubling_delta: 0.0 },
        warnings,
    })
}

/// Which recursion a GOU path follows.
enum GouDynamics {
    /// `V ← e^{−Δξ}(V + Δη)`, exact between events when possible.
    XiEta(BivariateSampler),
    /// `V ← V + V ΔU + ΔL`.
    Ul(BivariateSampler),
}

fn gou_dynamics(spec: &DrivingSpec) -> Result<GouDynamics> {
    match spec {
        DrivingSpec::UlForm(ul) => {
            if !ul.no_jump_to_zero() {
                return Err(LabError::precondition("ν_U({−1}) > 0: the GOU form needs ν_U({−1}) = 0"));
            }
            Ok(GouDynamics::Ul(ul_sampler(ul)?))
        }
        other => Ok(GouDynamics::XiEta(drivers(other)?.pair)),
    }
}

fn ul_sampler(ul: &UlSpec) -> Result<BivariateSampler> {
    match &ul.jumps {
        UlJumps::Independent { nu_u, nu_l } => BivariateSampler::new(
            &LevyTriplet::new(ul.gamma_u, ul.sigma_u2, nu_u.clone())?,
            &LevyTriplet::new(ul.gamma_l, ul.sigma_l2, nu_l.clone())?,
            ul.sigma_ul,
            None,
        ),
        UlJumps::Joint(atoms) => {
            let rate: f64 = atoms.iter().map(|a| a.1).sum();
            let (mut cu, mut cl) = (0.0, 0.0);
            for &((z1, z2), m) in atoms {
                if z1.hypot(z2) <= 1.0 {
                    cu += z1 * m;
                    cl += z2 * m;
                }
            }
            let law = JumpDist::joint_atoms(&atoms.iter().map(|&(z, m)| (z, m / rate)).collect::<Vec<_>>())?;
            BivariateSampler::new(
                &LevyTriplet::new(ul.gamma_u - cu, ul.sigma_u2, LevyMeasure::Empty)?,
                &LevyTriplet::new(ul.gamma_l - cl, ul.sigma_l2, LevyMeasure::Empty)?,
                ul.sigma_ul,
                if rate > 0.0 { Some((rate, law)) } else { None },
            )
        }
    }
}

struct GouState<'a> {
    dynamics: &'a GouDynamics,
    exact: bool,
    step: f64,
    rng: ChaCha8Rng,
    t: f64,
    steps_done: u64,
    v: f64,
    next_event: f64,
}

impl<'a> GouState<'a> {
    fn new(dynamics: &'a GouDynamics, x0: f64, step: f64, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let exact = matches!(dynamics, GouDynamics::XiEta(p) if p.is_drift_plus_jumps());
        let next_event = match dynamics {
            GouDynamics::XiEta(p) if exact => pair_wait(p, &mut rng),
            _ => f64::INFINITY,
        };
        GouState { dynamics, exact, step, rng, t: 0.0, steps_done: 0, v: x0, next_event }
    }

    fn advance_to(&mut self, horizon: f64) {
        match self.dynamics {
            GouDynamics::XiEta(p) if self.exact => {
                let (a, b) = p.drifts();
                loop {
                    let stop = self.next_event.min(horizon);
                    let h = stop - self.t;
                    if h > 0.0 {
                        self.v = self.v * (-a * h).exp() + b * drift_integral(a, h);
                        self.t = stop;
                    }
                    if self.next_event > horizon {
                        break;
                    }
                    let (dxi, deta) = p.sample_event(&mut self.rng);
                    self.v = (-dxi).exp() * (self.v + deta);
                    self.next_event = self.t + pair_wait(p, &mut self.rng);
                }
            }
            GouDynamics::XiEta(p) => {
                let target = (horizon / self.step).round() as u64;
                while self.steps_done < target {
                    let (dxi, deta) = p.increment(self.step, &mut self.rng);
                    self.v = (-dxi).exp() * (self.v + deta);
                    self.steps_done += 1;
                }
                self.t = target as f64 * self.step;
            }
            GouDynamics::Ul(p) => {
                let target = (horizon / self.step).round() as u64;
                while self.steps_done < target {
                    let (du, dl) = p.increment(self.step, &mut self.rng);
                    self.v += self.v * du + dl;
                    self.steps_done += 1;
                }
                self.t = target as f64 * self.step;
            }
        }
    }
}

/// GOU path started at `x0`, recorded on the grid `0, step, …, horizon`.
pub fn gou_path(spec: &DrivingSpec, x0: f64, horizon: f64, step: f64, stream: RngStream) -> Result<PathGrid> {
    if !(step > 0.0 && horizon >= 0.0 && horizon.is_finite()) {
        return Err(LabError::domain("need step > 0 and a finite horizon ≥ 0"));
    }
    let dynamics = gou_dynamics(spec)?;
    let steps = (horizon / step).round() as usize;
    let mut state = GouState::new(&dynamics, x0, step, stream);
    let mut times = Vec::with_capacity(steps + 1);
    let mut levels = Vec::with_capacity(steps + 1);
    times.push(0.0);
    levels.push(x0);
    for k in 1..=steps {
        let t = k as f64 * step;
        state.advance_to(t);
        if !state.v.is_finite() {
            return Err(LabError::numerical(format!("GOU path overflowed at t = {t}")));
        }
        times.push(t);
        levels.push(state.v);
    }
    Ok(PathGrid {
        times,
        series: vec![levels],
        kind: SeriesKind::Levels,
        horizon,
        seed: stream.seed,
        stream_id: stream.stream_id,
        scheme: if state.exact { Scheme::EventDriven } else { Scheme::GridEuler },
    })
}

/// Reusable GOU simulator returning only terminal values `V_t^x`.
pub struct GouSimulator {
    dynamics: GouDynamics,
    step: f64,
}

impl GouSimulator {
    pub fn new(spec: &DrivingSpec, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(LabError::domain("step must be positive"));
        }
        Ok(GouSimulator { dynamics: gou_dynamics(spec)?, step })
    }

    pub fn terminal(&self, x0: f64, t: f64, stream: RngStream) -> f64 {
        let mut s = GouState::new(&self.dynamics, x0, self.step, stream);
        s.advance_to(t);
        s.v
    }

    /// Terminal values from many starting points, draw `i` on `stream.substream(i)`.
    pub fn terminals(&self, x0: &[f64], t: f64, stream: RngStream) -> Vec<f64> {
        x0.par_iter()
            .enumerate()
            .map(|(i, &x)| self.terminal(x, t, stream.substream(i as u64)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_eta_gives_zero_draws() {
        let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::deterministic(0.0));
        let s = estimate_euler(&spec, &EulerOptions { horizon: Some(5.0), ..Default::default() }, 50, RngStream::new(1)).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_gou_paths() {
        let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::deterministic(0.0));
        let p = gou_path(&spec, 3.0, 2.0, 0.1, RngStream::new(0)).unwrap();
        for (t, v) in p.times.iter().zip(p.levels(0)) {
            assert!((v - 3.0 * (-t).exp()).abs() < 1e-13);
        }
        let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::deterministic(1.0));
        let p = gou_path(&spec, 0.0, 2.0, 0.1, RngStream::new(0)).unwrap();
        for (t, v) in p.times.iter().zip(p.levels(0)) {
            assert!((v - (1.0 - (-t).exp())).abs() < 1e-13);
        }
    }

    #[test]
    fn nonconvergent_spec_needs_override() {
        let spec = DrivingSpec::independent(LevyTriplet::deterministic(-1.0), LevyTriplet::brownian(1.0));
        let opts = EulerOptions { horizon: Some(1.0), step: 0.01, ..Default::default() };
        assert!(matches!(estimate_euler(&spec, &opts, 10, RngStream::new(0)), Err(LabError::Precondition(_))));
        let opts = EulerOptions { allow_unverified: true, pilot_draws: 10, ..opts };
        let s = estimate_euler(&spec, &opts, 10, RngStream::new(0)).unwrap();
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn series_tol_one_is_first_term() {
        let xi = LevyTriplet::poisson(1.0);
        let eta = LevyTriplet::deterministic(1.0);
        let s = estimate_cpp_series(&xi, &eta, 1.0, 2000, RngStream::new(3)).unwrap();
        // η_{T₁} = T₁ ~ Exp(1).
        assert!((s.mean() - 1.0).abs() < 5.0 * s.mean_se());
        assert!(s.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn series_rejects_nonpositive_mean_jump() {
        let xi = LevyTriplet::compound_poisson(1.0, &[(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert!(estimate_cpp_series(&xi, &LevyTriplet::deterministic(1.0), 1e-8, 10, RngStream::new(0)).is_err());
    }

    #[test]
    fn fixed_point_constant() {
        let one: ScalarSampler = Arc::new(|_| 1.0);
        let b = (-1f64).exp();
        let s = fixed_point_series(&one, b, 3, 200, RngStream::new(0)).unwrap();
        let e = std::f64::consts::E;
        assert!(s.values.iter().all(|v| (v - e / (e - 1.0)).abs() < 1e-14));
        let s = fixed_point_series(&one, b, 3, 1, RngStream::new(0)).unwrap();
        assert!(s.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let s = ExpFunSample::from_values(vec![0.5, -1.25, 3.0e-7], 9).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ExpFunSample::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.seed, 9);
        assert_eq!(back.estimator, Estimator::External);
    }
}
