//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Every `∫ · ν(dx)` term in the crate funnels through [`integrate`]. Infinite
//! endpoints are mapped onto the unit interval with `x = c ± t/(1-t)`, and
//! caller-supplied breakpoints (typically `0` and `±1`) seed the initial
//! partition so that kinks and integrable singularities sit on panel edges.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{LabError, Result};

/// Half-width of the transformed range for finite segments; the endpoint
/// distance at `±DE_RANGE` is about `1e-275` of the segment length.
const DE_RANGE: f64 = 6.0;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values that can be integrated: `f64` and `Complex64`.
pub trait QuadValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of bisections applied to any initial panel.
    pub max_depth: u32,
    pub max_panels: usize,
    /// When the panel or depth budget runs out, return the current estimate
    /// instead of failing if its error bound is at most this.
    pub accept_residual: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_depth: 40,
            max_panels: 4000,
            accept_residual: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Maps the integration variable of one initial segment onto a finite panel.
#[derive(Debug, Clone, Copy)]
enum Segment {
    /// Double-exponential map of `(a, b)` onto `s ∈ [-S, S]`; endpoint
    /// singularities become harmless.
    Finite(f64, f64),
    /// `x = c + t/(1-t)`, `t ∈ [0,1)`.
    Upper(f64),
    /// `x = c - t/(1-t)`, `t ∈ [0,1)`.
    Lower(f64),
}

impl Segment {
    #[inline]
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Segment::Finite(a, b) => {
                let y = FRAC_PI_2 * t.sinh();
                let w = b - a;
                // Distance to the nearer endpoint, computed without cancellation.
                let near = w / (1.0 + (2.0 * y.abs()).exp());
                let far = w - near;
                let jac = PI * t.cosh() * near * far / w;
                let x = if t < 0.0 { a + near } else { b - near };
                if near == 0.0 || x == a || x == b {
                    return (x, 0.0);
                }
                (x, jac)
            }
            Segment::Upper(c) => {
                let s = 1.0 - t;
                (c + t / s, 1.0 / (s * s))
            }
            Segment::Lower(c) => {
                let s = 1.0 - t;
                (c - t / s, 1.0 / (s * s))
            }
        }
    }
}

struct Panel<T> {
    a: f64,
    b: f64,
    depth: u32,
    segment: Segment,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<T: QuadValue, F: Fn(f64) -> T>(
    f: &F,
    segment: Segment,
    a: f64,
    b: f64,
) -> Result<(T, f64)> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> Result<T> {
        let (x, jac) = segment.map(t);
        if jac == 0.0 {
            return Ok(T::default());
        }
        let v = f(x) * jac;
        if v.is_finite_value() {
            Ok(v)
        } else {
            Err(LabError::numerical(format!(
                "integrand is not finite at x = {x:e}"
            )))
        }
    };
    let fc = eval(centre)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    for (j, (&xk, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * xk;
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        let pair = f1 + f2;
        res_k = res_k + pair * wk;
        if j % 2 == 1 {
            res_g = res_g + pair * WG[j / 2];
        }
    }
    let value = res_k * half;
    let error = ((res_k - res_g) * half).magnitude();
    Ok((value, error))
}

/// Integrates `f` over `(a, b)`; `a` and `b` may be infinite.
///
/// `breakpoints` strictly inside `(a, b)` split the initial partition.
pub fn integrate<T, F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if a.is_nan() || b.is_nan() {
        return Err(LabError::domain("integration bounds must not be NaN"));
    }
    if a >= b {
        return Ok(QuadResult {
            value: T::default(),
            abs_error: 0.0,
            evaluations: 0,
        });
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|c| c.is_finite() && *c > a && *c < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0usize;
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (segment, ta, tb) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (Segment::Finite(lo, hi), -DE_RANGE, DE_RANGE),
            (true, false) => (Segment::Upper(lo), 0.0, 1.0),
            (false, true) => (Segment::Lower(hi), 0.0, 1.0),
            // Both infinite only when no breakpoint was given; split at 0.
            (false, false) => {
                for (seg, lo_t, hi_t) in [(Segment::Lower(0.0), 0.0, 1.0), (Segment::Upper(0.0), 0.0, 1.0)] {
                    let (value, error) = kronrod(&f, seg, lo_t, hi_t)?;
                    evaluations += 15;
                    heap.push(Panel { a: lo_t, b: hi_t, depth: 0, segment: seg, value, error });
                }
                continue;
            }
        };
        let (value, error) = kronrod(&f, segment, ta, tb)?;
        evaluations += 15;
        heap.push(Panel { a: ta, b: tb, depth: 0, segment, value, error });
    }

    let mut frozen: Vec<Panel<T>> = Vec::new();
    let mut total: T = heap.iter().fold(T::default(), |acc, p| acc + p.value);
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    // Re-sum to shed the drift of the running totals.
    let resum = |heap: &BinaryHeap<Panel<T>>, frozen: &[Panel<T>]| {
        heap.iter().chain(frozen.iter()).fold(T::default(), |acc, p| acc + p.value)
    };
    loop {
        let target = cfg.abs_tol.max(cfg.rel_tol * total.magnitude());
        if err <= target {
            return Ok(QuadResult { value: resum(&heap, &frozen), abs_error: err, evaluations });
        }
        let panels = heap.len() + frozen.len();
        let worst = match heap.pop() {
            Some(p) if panels < cfg.max_panels => p,
            other => {
                if let Some(p) = other {
                    heap.push(p);
                }
                if err <= cfg.accept_residual {
                    return Ok(QuadResult { value: resum(&heap, &frozen), abs_error: err, evaluations });
                }
                return Err(LabError::Quadrature {
                    partial: total.magnitude(),
                    residual: err,
                    context: format!("{panels} panels, depth limit {}", cfg.max_depth),
                });
            }
        };
        if worst.depth >= cfg.max_depth {
            frozen.push(worst);
            if heap.is_empty() {
                if err <= cfg.accept_residual {
                    return Ok(QuadResult { value: resum(&heap, &frozen), abs_error: err, evaluations });
                }
                return Err(LabError::Quadrature {
                    partial: total.magnitude(),
                    residual: err,
                    context: format!("depth limit {} reached", cfg.max_depth),
                });
            }
            continue;
        }
        total = total - worst.value;
        err -= worst.error;
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod(&f, worst.segment, lo, hi)?;
            evaluations += 15;
            total = total + value;
            err += error;
            heap.push(Panel {
                a: lo,
                b: hi,
                depth: worst.depth + 1,
                segment: worst.segment,
                value,
                error,
            });
        }
        err = err.max(0.0);
    }
}

/// Nodes and weights of a composite 15-point Kronrod rule on `[a, b]` with
/// `panels` equal panels. Used where an integrand must be sampled at fixed
/// nodes (per-draw sample averages).
pub fn composite_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels * 15);
    if !(b > a) || panels == 0 {
        return out;
    }
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let centre = lo + 0.5 * width;
        let half = 0.5 * width;
        out.push((centre, WGK[7] * half));
        for (&xk, &wk) in XGK.iter().zip(WGK.iter()).take(7) {
            out.push((centre - half * xk, wk * half));
            out.push((centre + half * xk, wk * half));
        }
    }
    out
}

/// Composite nodes on a geometrically graded grid `[a, b]`, `0 < a < b`.
pub fn geometric_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels * 15);
    if !(a > 0.0 && b > a) || panels == 0 {
        return out;
    }
    let ratio = (b / a).powf(1.0 / panels as f64);
    let mut lo = a;
    for _ in 0..panels {
        let hi = lo * ratio;
        out.extend(composite_nodes(lo, hi, 1));
        lo = hi;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x: f64| x * x * x + 2.0 * x, 0.0, 2.0, &[], &cfg()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn semi_infinite_exponential() {
        let r = integrate(|x: f64| (-x).exp(), 0.0, f64::INFINITY, &[], &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn whole_line_gaussian() {
        let r = integrate(
            |x: f64| (-0.5 * x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &[-1.0, 1.0],
            &cfg(),
        )
        .unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let r = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, &[], &cfg()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn complex_integrand() {
        let r = integrate(
            |x: f64| Complex64::new(0.0, x).exp(),
            0.0,
            std::f64::consts::PI,
            &[],
            &cfg(),
        )
        .unwrap();
        assert!((r.value - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn divergent_integral_reports_failure() {
        let err = integrate(|x: f64| 1.0 / x, 1.0, f64::INFINITY, &[], &cfg()).unwrap_err();
        assert!(matches!(err, LabError::Quadrature { .. }));
    }

    #[test]
    fn composite_nodes_integrate_cubic() {
        let s: f64 = composite_nodes(-1.0, 3.0, 4)
            .iter()
            .map(|(x, w)| w * x * x * x)
            .sum();
        assert!((s - 20.0).abs() < 1e-12);
        let g: f64 = geometric_nodes(1e-3, 1.0, 20)
            .iter()
            .map(|(x, w)| w / x)
            .sum();
        assert!((g - 1e3f64.ln()).abs() < 1e-10);
    }
}
