//! Empirical characteristic functions, weighted moment transforms,
//! zero masking and Kolmogorov–Smirnov distances.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// What a [`CFGrid`] estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "power", rename_all = "kebab-case")]
pub enum CfKind {
    /// `E e^{iuV}`
    Plain,
    /// `E V^k e^{iuV}`
    Weighted(i32),
    /// `E e^{iu log|V|}`
    LogAbs,
    /// `E V^k e^{iu log|V|}`
    WeightedLog(i32),
    /// A residual of some identity, should vanish.
    Residual,
}

impl fmt::Display for CfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CfKind::Plain => write!(f, "plain"),
            CfKind::Weighted(k) => write!(f, "weighted({k})"),
            CfKind::LogAbs => write!(f, "log-abs"),
            CfKind::WeightedLog(k) => write!(f, "weighted-log({k})"),
            CfKind::Residual => write!(f, "residual"),
        }
    }
}

/// Complex estimates on a grid of `u` values with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFGrid {
    pub u: Vec<f64>,
    pub estimate: Vec<Complex64>,
    pub stderr: Vec<f64>,
    pub valid_mask: Vec<bool>,
    pub kind: CfKind,
    pub warnings: Vec<String>,
}

impl CFGrid {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `|estimate| / stderr` per point (`0` where both vanish, `∞` where only SE does).
    pub fn z_scores(&self) -> Vec<f64> {
        self.estimate
            .iter()
            .zip(&self.stderr)
            .map(|(e, s)| {
                let m = e.norm();
                if m == 0.0 {
                    0.0
                } else if *s == 0.0 {
                    f64::INFINITY
                } else {
                    m / s
                }
            })
            .collect()
    }

    /// Fraction of valid points with `|estimate| < k·stderr` (or exactly 0).
    pub fn fraction_within(&self, k: f64) -> f64 {
        let z = self.z_scores();
        let (mut hit, mut total) = (0usize, 0usize);
        for (zi, ok) in z.iter().zip(&self.valid_mask) {
            if *ok {
                total += 1;
                if *zi < k {
                    hit += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    /// CSV with columns `u, re, im, stderr, valid, kind`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "u,re,im,stderr,valid,kind")?;
        for i in 0..self.u.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.u[i],
                self.estimate[i].re,
                self.estimate[i].im,
                self.stderr[i],
                self.valid_mask[i] as u8,
                self.kind
            )?;
        }
        Ok(())
    }
}

/// `n` points evenly spaced on `[lo, hi]`; symmetric ranges contain 0 exactly
/// and are exactly symmetric.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| {
            if lo == -hi {
                // Mirror so that u(−k) = −u(k) bit for bit.
                let c = (n - 1) as f64 / 2.0;
                (k as f64 - c) * step
            } else {
                lo + k as f64 * step
            }
        })
        .collect()
}

/// The default inversion grid: 41 points on `[−5, 5]`.
pub fn default_grid() -> Vec<f64> {
    linear_grid(-5.0, 5.0, 41)
}

/// Mean and standard error of complex terms; the SE is
/// `√((Var Re + Var Im)/n)`.
pub fn complex_mean_se<I: IntoIterator<Item = Complex64>>(terms: I) -> (Complex64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, Complex64::new(0.0, 0.0), 0.0f64);
    for z in terms {
        n += 1;
        let d = z - mean;
        mean += d / n as f64;
        let d2 = z - mean;
        m2 += d.re * d2.re + d.im * d2.im;
    }
    if n < 2 {
        return (mean, if n == 1 { f64::INFINITY } else { f64::NAN });
    }
    (mean, (m2 / (n - 1) as f64 / n as f64).sqrt())
}

/// Delta-method ratio `mean(a)/mean(b)` with standard error from the
/// influence terms `(a_i − R b_i)/mean(b)`.
pub fn ratio_mean_se(a: &[Complex64], b: &[Complex64]) -> (Complex64, f64) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma: Complex64 = a.iter().sum::<Complex64>() / n;
    let mb: Complex64 = b.iter().sum::<Complex64>() / n;
    let r = ma / mb;
    let (_, se) = complex_mean_se(a.iter().zip(b).map(|(x, y)| (x - r * y) / mb));
    (r, se)
}

fn nonempty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(LabError::precondition("sample is empty"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(LabError::precondition(format!("sample contains a non-finite draw {v}")));
    }
    Ok(())
}

/// Generic grid evaluator: `E[w(v)·e^{iu·t(v)}]`, computed at `|u|` and
/// conjugated for `u < 0` so Hermitian symmetry is exact.
fn transform_grid<W, T>(values: &[f64], grid: &[f64], weight: W, arg: T, kind: CfKind) -> CFGrid
where
    W: Fn(f64) -> f64 + Sync,
    T: Fn(f64) -> f64 + Sync,
{
    let pre: Vec<(f64, f64)> = values.iter().map(|&v| (weight(v), arg(v))).collect();
    let rows: Vec<(Complex64, f64)> = grid
        .par_iter()
        .map(|&u| {
            let a = u.abs();
            let (m, se) = complex_mean_se(pre.iter().map(|&(w, t)| {
                let (s, c) = (a * t).sin_cos();
                Complex64::new(w * c, w * s)
            }));
            if u < 0.0 {
                (m.conj(), se)
            } else {
                (m, se)
            }
        })
        .collect();
    let (estimate, stderr): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    CFGrid {
        u: grid.to_vec(),
        valid_mask: vec![true; grid.len()],
        estimate,
        stderr,
        kind,
        warnings: Vec::new(),
    }
}

/// `φ̂(u) = mean e^{iuV}`; exactly `1` with SE `0` at `u = 0`.
pub fn empirical_cf(values: &[f64], grid: &[f64]) -> Result<CFGrid> {
    nonempty(values)?;
    let mut g = transform_grid(values, grid, |_| 1.0, |v| v, CfKind::Plain);
    for (i, &u) in grid.iter().enumerate() {
        if u == 0.0 {
            g.estimate[i] = Complex64::new(1.0, 0.0);
            g.stderr[i] = 0.0;
        }
    }
    Ok(g)
}

/// `mean e^{iu log|V|}`. Errors on a zero draw (the law of `V∞` has no atom at 0).
pub fn log_abs_cf(values: &[f64], grid: &[f64]) -> Result<CFGrid> {
    nonempty(values)?;
    reject_zero(values)?;
    let mut g = transform_grid(values, grid, |_| 1.0, |v| v.abs().ln(), CfKind::LogAbs);
    for (i, &u) in grid.iter().enumerate() {
        if u == 0.0 {
            g.estimate[i] = Complex64::new(1.0, 0.0);
            g.stderr[i] = 0.0;
        }
    }
    Ok(g)
}

fn reject_zero(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| *v == 0.0) {
        return Err(LabError::precondition(format!(
            "draw {i} is exactly 0; the stationary law is continuous, so log|V| moments need non-zero draws"
        )));
    }
    Ok(())
}

/// `mean V^k e^{iuV}` (`log_mode = false`) or `mean V^k e^{iu log|V|}`.
///
/// A Hill-type screen attaches a warning when the `|k|`-th moment looks
/// infinite; it never fails the call.
pub fn weighted_moment_cf(values: &[f64], grid: &[f64], k: i32, log_mode: bool) -> Result<CFGrid> {
    nonempty(values)?;
    if k < 0 || log_mode {
        if log_mode {
            reject_zero(values)?;
        } else if values.contains(&0.0) {
            return Err(LabError::precondition("negative power of a zero draw"));
        }
    }
    let kind = if log_mode { CfKind::WeightedLog(k) } else { CfKind::Weighted(k) };
    let weight = move |v: f64| v.powi(k);
    let mut g = if log_mode {
        transform_grid(values, grid, weight, |v| v.abs().ln(), kind)
    } else {
        transform_grid(values, grid, weight, |v| v, kind)
    };
    if let Some(w) = moment_screen(values, k) {
        g.warnings.push(w);
    }
    Ok(g)
}

/// Warning text when the Hill estimate suggests `E|V|^k = ∞`.
pub fn moment_screen(values: &[f64], k: i32) -> Option<String> {
    if k == 0 {
        return None;
    }
    let transformed: Vec<f64> = if k > 0 {
        values.iter().map(|v| v.abs()).collect()
    } else {
        values.iter().filter(|v| **v != 0.0).map(|v| 1.0 / v.abs()).collect()
    };
    let need = k.unsigned_abs() as f64;
    match hill_tail_index(&transformed) {
        Some(alpha) if alpha < 2.0 * need => Some(format!(
            "moment screen: Hill tail index {alpha:.3} of |V|^{} is below the conservative cutoff {:.1}; E|V|^{k} may be infinite",
            k.signum(),
            2.0 * need
        )),
        _ => None,
    }
}

/// Hill estimator of the tail index of positive data using the top `⌊√n⌋`
/// order statistics (at least 10). `None` for samples too small or light
/// enough that the estimate is meaningless; `∞` when the top values tie.
pub fn hill_tail_index(values: &[f64]) -> Option<f64> {
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.len() < 50 {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let m = ((pos.len() as f64).sqrt() as usize).max(10);
    let threshold = pos[m];
    if threshold <= 0.0 {
        return None;
    }
    let mean_log: f64 = pos[..m].iter().map(|x| (x / threshold).ln()).sum::<f64>() / m as f64;
    if mean_log <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(1.0 / mean_log)
    }
}

/// Marks points with `|estimate| ≤ multiplier·stderr` invalid; `u = 0` is
/// always valid and an infinite multiplier keeps only `u = 0`.
pub fn zero_mask(cf: &CFGrid, threshold_multiplier: f64) -> CFGrid {
    let mut out = cf.clone();
    for i in 0..cf.u.len() {
        out.valid_mask[i] = if cf.u[i] == 0.0 {
            true
        } else if threshold_multiplier.is_infinite() {
            false
        } else {
            cf.valid_mask[i] && cf.estimate[i].norm() > threshold_multiplier * cf.stderr[i]
        };
    }
    out
}

/// Default multiplier for [`zero_mask`].
pub const DEFAULT_MASK_MULTIPLIER: f64 = 5.0;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup_x |F_n(x) − F(x)|` against a continuous reference CDF.
pub fn ks_distance_cdf<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<f64> {
    nonempty(values)?;
    let s = sorted(values);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(d)
}

/// Two-sample KS statistic; ties are handled exactly.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    nonempty(a)?;
    nonempty(b)?;
    let (x, y) = (sorted(a), sorted(b));
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < x.len() && x[i] == t {
            i += 1;
        }
        while j < y.len() && y[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample KS critical value `c(α)·√((n+m)/(nm))`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sample_has_unit_cf() {
        let g = empirical_cf(&[0.0; 10], &default_grid()).unwrap();
        assert!(g.estimate.iter().all(|e| *e == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn symmetric_grid_is_exact() {
        let g = default_grid();
        for k in 0..g.len() {
            assert_eq!(g[k], -g[g.len() - 1 - k]);
        }
        assert_eq!(g[20], 0.0);
    }

    #[test]
    fn conj_symmetry_is_exact() {
        let v = [0.3, -1.2, 2.5, 0.7];
        let g = empirical_cf(&v, &default_grid()).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.estimate[k], g.estimate[g.len() - 1 - k].conj());
        }
    }

    #[test]
    fn ks_self_is_zero_and_critical_value() {
        let v = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(ks_distance_two_sample(&v, &v).unwrap(), 0.0);
        let c = ks_critical_value(100_000, 100_000, 0.01);
        assert!((c - 1.627_624 * (2e-5f64).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn infinite_multiplier_keeps_only_origin() {
        let g = empirical_cf(&[0.0; 4], &default_grid()).unwrap();
        let m = zero_mask(&g, f64::INFINITY);
        assert_eq!(m.valid_mask.iter().filter(|b| **b).count(), 1);
        let all = zero_mask(&g, DEFAULT_MASK_MULTIPLIER);
        assert!(all.valid_mask.iter().all(|b| *b));
    }

    #[test]
    fn log_mode_rejects_zero() {
        assert!(weighted_moment_cf(&[1.0, 0.0], &[1.0], -1, true).is_err());
        assert!(log_abs_cf(&[1.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn ratio_se_of_constant_ratio_is_zero() {
        let a: Vec<Complex64> = (1..20).map(|k| Complex64::new(2.0 * k as f64, 0.0)).collect();
        let b: Vec<Complex64> = (1..20).map(|k| Complex64::new(k as f64, 0.0)).collect();
        let (r, se) = ratio_mean_se(&a, &b);
        assert!((r - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(se < 1e-14);
    }
}
