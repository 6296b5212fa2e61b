use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charstats::ks_distance_two_sample;
use crate::error::{LabError, Result};
use crate::expfun::{estimate_euler, EulerOptions};
use crate::levy_spec::{DrivingSpec, Interval, LevyMeasure, LevyTriplet, MeanValue};
use crate::oracles::continuity_counterexample_spec;
use crate::pathsim::{LevySampler, RngStream, Scheme};

/// A finite family `η⁽ⁿ⁾` with its declared limit.
#[derive(Debug, Clone)]
pub struct ContinuityFamily {
    pub label: String,
    pub members: Vec<(u32, LevyTriplet)>,
    pub limit: LevyTriplet,
}

impl ContinuityFamily {
    /// Compound Poisson members with atoms at ±1 and ±nⁿ.
    pub fn discont(ns: &[u32]) -> Result<Self> {
        Ok(ContinuityFamily {
            label: "discont".into(),
            members: ns.iter().map(|&n| Ok((n, continuity_counterexample_spec(n)?))).collect::<Result<_>>()?,
            limit: continuity_counterexample_spec(0)?,
        })
    }

    /// `η⁽ⁿ⁾_t = t/n + σW_t` converging to `σW`.
    pub fn drift_brownian(ns: &[u32], sigma2: f64) -> Result<Self> {
        let members = ns
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(LabError::domain("family indices start at 1"));
                }
                Ok((n, LevyTriplet::from_drift(1.0 / n as f64, sigma2, LevyMeasure::Empty)?))
            })
            .collect::<Result<_>>()?;
        Ok(ContinuityFamily { label: "drift-brownian".into(), members, limit: LevyTriplet::brownian(sigma2) })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub n: u32,
    pub cond_contcond6: f64,
    pub cond_contcond1: f64,
    pub e_xi: f64,
    pub ks_to_limit: f64,
    /// `E log|A₀| = −Eξ₁`.
    pub e_log_abs_a: f64,
    /// Empirical `E log⁺|B₀|` with `B₀ = ∫₀¹ e^{−ξ_{s−}} dη_s`, and its SE.
    pub e_logplus_b: f64,
    pub e_logplus_b_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuitySuiteReport {
    pub family: String,
    pub delta: f64,
    pub n_mc: usize,
    pub rows: Vec<ContinuityRow>,
    pub limit_e_logplus_b: f64,
    pub limit_e_logplus_b_se: f64,
    /// Conditions whose values across members trend to divergence.
    pub divergent: Vec<String>,
    pub verdict: String,
    pub notes: Vec<String>,
}

impl ContinuitySuiteReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,cond_contcond6,cond_contcond1,e_xi,ks_to_limit,e_log_abs_a,e_logplus_b,e_logplus_b_se")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.cond_contcond6,
                r.cond_contcond1,
                r.e_xi,
                r.ks_to_limit,
                r.e_log_abs_a,
                r.e_logplus_b,
                r.e_logplus_b_se
            )?;
        }
        Ok(())
    }
}

/// `∫_{|x|>1} (log|x|)^p ν(dx)`, `+∞` when it diverges.
pub fn log_tail_moment(nu: &LevyMeasure, p: f64) -> f64 {
    match nu.integrate_regions(|x: f64| x.abs().ln().powf(p), &Interval::outside_unit_ball()) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// `E|X₁|^p`: closed form without a Gaussian or jump part, Monte Carlo
/// otherwise; `+∞` when the big-jump moment diverges.
pub fn abs_moment(x: &LevyTriplet, p: f64, n_mc: usize, stream: RngStream) -> Result<f64> {
    let big = x.nu().integrate_regions(|y: f64| y.abs().powf(p), &Interval::outside_unit_ball());
    if !matches!(big, Ok(v) if v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    if x.is_deterministic() {
        return Ok(x.gamma().abs().powf(p));
    }
    let s = LevySampler::new(x)?;
    let total: f64 = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| s.increment(1.0, &mut stream.substream(i).rng()).abs().powf(p))
        .sum();
    Ok(total / n_mc as f64)
}

fn mean_value(m: MeanValue) -> f64 {
    match m {
        MeanValue::Finite(v) => v,
        MeanValue::PlusInfinity => f64::INFINITY,
        MeanValue::MinusInfinity => f64::NEG_INFINITY,
        MeanValue::Undefined => f64::NAN,
    }
}

/// Strictly increasing with an overall growth beyond 10×, or infinite.
pub fn diverges(values: &[f64]) -> bool {
    if values.iter().any(|v| v.is_infinite() || v.is_nan()) {
        return true;
    }
    let (Some(&first), Some(&last)) = (values.first(), values.last()) else {
        return false;
    };
    values.len() >= 2 && values.windows(2).all(|w| w[1] > w[0]) && last > 10.0 * first.max(0.0) && last > 0.0
}

fn logplus_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let l: Vec<f64> = values.iter().map(|v| v.abs().ln().max(0.0)).collect();
    let m = l.iter().sum::<f64>() / n;
    let var = l.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Horizon covering the largest atom of every member: `e^{−κT}·max|y| ≤ 1e−4`.
fn family_horizon(family: &ContinuityFamily, xi: &LevyTriplet) -> Result<Option<f64>> {
    let Some(kappa) = xi.laplace_exponent(1.0)? else { return Ok(None) };
    if kappa >= 0.0 {
        return Ok(None);
    }
    let biggest = family
        .members
        .iter()
        .map(|(_, t)| t)
        .chain([&family.limit])
        .filter_map(|t| t.nu().as_atoms())
        .flatten()
        .map(|a| a.location.abs().ln().max(0.0))
        .fold(0.0, f64::max);
    Ok(Some((1e4f64.ln() + biggest) / -kappa))
}

/// Evaluates the continuity conditions over a finite family and compares
/// simulated exponential functionals with the limit member's.
///
/// Every member is simulated with the same per-draw substreams, so KS
/// differences across the family track the law change.
pub fn continuity_suite(
    family: &ContinuityFamily,
    xi: &LevyTriplet,
    delta: f64,
    n_mc: usize,
    stream: RngStream,
) -> Result<ContinuitySuiteReport> {
    if !(delta > 0.0) {
        return Err(LabError::domain("δ must be positive"));
    }
    if family.members.is_empty() {
        return Err(LabError::domain("the family has no members"));
    }
    let mut members = family.members.clone();
    members.sort_by_key(|(n, _)| *n);
    let p = 1.0 + delta;
    let scheme = LevySampler::new(xi)?.is_drift_plus_jumps().then_some(Scheme::EventDriven);
    let opts = EulerOptions { horizon: family_horizon(family, xi)?, scheme, ..Default::default() };
    let b_opts = EulerOptions { horizon: Some(1.0), scheme, allow_unverified: true, ..Default::default() };
    let [v_stream, b_stream, m_stream] = [0, 1, 2].map(|k| stream.substream(k));

    let e_xi = mean_value(xi.mean());
    let cond1 = abs_moment(xi, p, n_mc, m_stream)?;
    // Without Eξ₁ > 0 the functional need not converge; only B₀ is simulated.
    let converges = e_xi > 0.0;
    let limit_spec = DrivingSpec::independent(xi.clone(), family.limit.clone());
    let limit_v = if converges { Some(estimate_euler(&limit_spec, &opts, n_mc, v_stream)?) } else { None };
    let (limit_b, limit_b_se) = logplus_mean_se(&estimate_euler(&limit_spec, &b_opts, n_mc, b_stream)?.values);

    let mut rows = Vec::with_capacity(members.len());
    let mut notes = Vec::new();
    for (n, eta) in &members {
        let spec = DrivingSpec::independent(xi.clone(), eta.clone());
        let ks = match &limit_v {
            Some(limit_v) => {
                let v = estimate_euler(&spec, &opts, n_mc, v_stream)?;
                notes.extend(v.warnings.iter().map(|w| format!("n = {n}: {w}")));
                ks_distance_two_sample(&v.values, &limit_v.values)?
            }
            None => f64::NAN,
        };
        let (b, b_se) = logplus_mean_se(&estimate_euler(&spec, &b_opts, n_mc, b_stream)?.values);
        rows.push(ContinuityRow {
            n: *n,
            cond_contcond6: log_tail_moment(eta.nu(), p),
            cond_contcond1: cond1,
            e_xi,
            ks_to_limit: ks,
            e_log_abs_a: -e_xi,
            e_logplus_b: b,
            e_logplus_b_se: b_se,
        });
    }

    let mut divergent = Vec::new();
    if diverges(&rows.iter().map(|r| r.cond_contcond6).collect::<Vec<_>>()) {
        divergent.push("contcond6".to_string());
    }
    if diverges(&rows.iter().map(|r| r.cond_contcond1).collect::<Vec<_>>()) {
        divergent.push("contcond1".to_string());
    }
    if !converges {
        divergent.push("contcond3".to_string());
    }
    let ks_decreasing = rows.windows(2).all(|w| w[1].ks_to_limit <= w[0].ks_to_limit);
    let verdict = if !divergent.is_empty() {
        format!("condition-violated: {}", divergent.join(", "))
    } else if ks_decreasing {
        "consistent-with-continuity".to_string()
    } else {
        "inconclusive: ks-not-decreasing".to_string()
    };
    notes.push("conditions are finite sups over the listed members; a trend, not a proof".into());
    Ok(ContinuitySuiteReport {
        family: family.label.clone(),
        delta,
        n_mc,
        rows,
        limit_e_logplus_b: limit_b,
        limit_e_logplus_b_se: limit_b_se,
        divergent,
        verdict,
        notes,
    })
}
