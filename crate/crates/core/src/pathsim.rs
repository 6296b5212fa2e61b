//! Reproducible sampling of Lévy increments and compound Poisson paths.
//!
//! Every random quantity is drawn from an [`RngStream`]. Parallel code gives
//! draw `i` the stream `base.substream(i)`, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::levy_spec::{DensityFamily, Interval, LevyMeasure, LevyTriplet};
use crate::quad;

/// A seed plus a stream index; two different ids give independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Child stream `i`. Children of different parents never collide in
    /// practice since the child seed mixes both parent fields.
    pub fn substream(&self, i: u64) -> RngStream {
        RngStream {
            seed: splitmix(self.seed ^ splitmix(self.stream_id ^ 0xA076_1D64_78BD_642F)),
            stream_id: i,
        }
    }

    /// Deterministic split into `k` children.
    pub fn split(&self, k: usize) -> Vec<RngStream> {
        (0..k as u64).map(|i| self.substream(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    GridEuler,
    EventDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// `series[p][i]` is the increment of process `p` over `(times[i], times[i+1]]`.
    Increments,
    /// `series[p][i]` is the value of process `p` at `times[i]`.
    Levels,
}

/// Sampled path data on a time grid or on jump times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub series: Vec<Vec<f64>>,
    pub kind: SeriesKind,
    pub horizon: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub scheme: Scheme,
}

impl PathGrid {
    pub fn n_intervals(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn increments(&self, p: usize) -> &[f64] {
        assert_eq!(self.kind, SeriesKind::Increments, "path holds levels, not increments");
        &self.series[p]
    }

    pub fn levels(&self, p: usize) -> &[f64] {
        assert_eq!(self.kind, SeriesKind::Levels, "path holds increments, not levels");
        &self.series[p]
    }
}

const CELLS_PER_SIDE: usize = 4000;
const TAIL_FRACTION: f64 = 1e-12;
const SMALL_JUMP_SHARE: f64 = 1e-4;

#[derive(Clone)]
enum JumpTable {
    None,
    /// Cumulative probabilities and jump sizes.
    Discrete { cum: Vec<f64>, loc: Vec<f64> },
    /// Cells `[lo, hi]` with cumulative probabilities; sampled log-uniformly
    /// inside a cell when it does not straddle 0.
    Cells { cum: Vec<f64>, cells: Vec<(f64, f64)> },
    /// `ν((x, ∞)) = c / log x` above `lower`; inverse in closed form.
    LogTail { log_lower: f64 },
}

/// Sampler for increments of one Lévy process.
///
/// Jumps with `|x| ≤ ε` are replaced by a Gaussian with the same variance;
/// `ε = 0` whenever `ν` has finite mass.
#[derive(Clone)]
pub struct LevySampler {
    drift: f64,
    /// Brownian variance of the triplet itself.
    sigma2: f64,
    /// Variance of the small-jump Gaussian substitute.
    small_var: f64,
    gauss_var: f64,
    rate: f64,
    epsilon: f64,
    table: JumpTable,
}

impl fmt::Debug for LevySampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevySampler")
            .field("drift", &self.drift)
            .field("gauss_var", &self.gauss_var)
            .field("rate", &self.rate)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

impl LevySampler {
    pub fn new(triplet: &LevyTriplet) -> Result<Self> {
        let nu = triplet.nu();
        match nu {
            LevyMeasure::Empty => Ok(LevySampler {
                drift: triplet.gamma(),
                sigma2: triplet.sigma2(),
                small_var: 0.0,
                gauss_var: triplet.sigma2(),
                rate: 0.0,
                epsilon: 0.0,
                table: JumpTable::None,
            }),
            LevyMeasure::Atoms(atoms) => {
                let rate: f64 = atoms.iter().map(|a| a.mass).sum();
                let comp: f64 = atoms.iter().filter(|a| a.location.abs() <= 1.0).map(|a| a.location * a.mass).sum();
                let mut acc = 0.0;
                let mut cum = Vec::with_capacity(atoms.len());
                for a in atoms {
                    acc += a.mass / rate;
                    cum.push(acc);
                }
                *cum.last_mut().unwrap() = 1.0;
                Ok(LevySampler {
                    drift: triplet.gamma() - comp,
                    sigma2: triplet.sigma2(),
                    small_var: 0.0,
                    gauss_var: triplet.sigma2(),
                    rate,
                    epsilon: 0.0,
                    table: JumpTable::Discrete { cum, loc: atoms.iter().map(|a| a.location).collect() },
                })
            }
            LevyMeasure::Density(d) => {
                if let Some(DensityFamily::LogTail { c, lower }) = d.family() {
                    return Ok(LevySampler {
                        drift: triplet.gamma(),
                        sigma2: triplet.sigma2(),
                        small_var: 0.0,
                        gauss_var: triplet.sigma2(),
                        rate: c / lower.ln(),
                        epsilon: 0.0,
                        table: JumpTable::LogTail { log_lower: lower.ln() },
                    });
                }
                let epsilon = if nu.total_mass().is_some() {
                    0.0
                } else {
                    choose_epsilon(triplet)?
                };
                // Subordinators keep monotone paths: their small jumps are
                // replaced by their mean (already in the drift) instead of noise.
                let monotone = triplet.sigma2() == 0.0 && nu.is_nonnegative_support() && nu.is_finite_variation();
                let small_var: f64 = if epsilon > 0.0 && !monotone {
                    nu.integrate(|x| x * x, &Interval::closed(-epsilon, epsilon))?
                } else {
                    0.0
                };
                let mid = |lo: f64, hi: f64| -> Result<f64> {
                    if lo >= hi {
                        return Ok(0.0);
                    }
                    nu.integrate(|x| x, &Interval { lo, hi, lo_closed: false, hi_closed: true })
                };
                let comp = if epsilon > 0.0 {
                    mid(epsilon, 1.0)? + nu.integrate(|x| x, &Interval { lo: -1.0, hi: -epsilon, lo_closed: true, hi_closed: false })?
                } else {
                    nu.integrate(|x| x, &Interval::unit_ball())?
                };
                let mut cells = Vec::new();
                let mut masses = Vec::new();
                let support = d.support();
                for side in [-1.0f64, 1.0] {
                    let (lo, hi) = if side > 0.0 {
                        (support.lo.max(epsilon), support.hi)
                    } else {
                        (support.lo, support.hi.min(-epsilon))
                    };
                    if lo >= hi {
                        continue;
                    }
                    // Work with |x| on this side.
                    let (a, b) = if side > 0.0 { (lo, hi) } else { (-hi, -lo) };
                    let density = |r: f64| d.eval(side * r);
                    build_side_cells(&density, a, b, side, &mut cells, &mut masses)?;
                }
                let rate: f64 = masses.iter().sum();
                if !(rate.is_finite()) {
                    return Err(LabError::numerical("jump rate beyond ε is not finite"));
                }
                let mut cum = Vec::with_capacity(masses.len());
                let mut acc = 0.0;
                for m in &masses {
                    acc += m / rate;
                    cum.push(acc);
                }
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                Ok(LevySampler {
                    drift: triplet.gamma() - comp,
                    sigma2: triplet.sigma2(),
                    small_var,
                    gauss_var: triplet.sigma2() + small_var,
                    rate,
                    epsilon,
                    table: if cells.is_empty() { JumpTable::None } else { JumpTable::Cells { cum, cells } },
                })
            }
        }
    }

    /// Drift of the simulated process between jumps (after compensation).
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Brownian variance of the triplet.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Gaussian variance per unit time, including the small-jump substitute.
    pub fn gauss_var(&self) -> f64 {
        self.gauss_var
    }

    /// Rate of simulated jumps (those with `|x| > ε`).
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// True when paths are exactly piecewise linear between jumps.
    pub fn is_drift_plus_jumps(&self) -> bool {
        self.gauss_var == 0.0 && self.epsilon == 0.0
    }

    pub fn is_deterministic(&self) -> bool {
        self.gauss_var == 0.0 && self.rate == 0.0
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.table {
            JumpTable::None => 0.0,
            JumpTable::Discrete { cum, loc } => {
                let u: f64 = rng.random();
                let k = cum.partition_point(|&c| c <= u).min(loc.len() - 1);
                loc[k]
            }
            JumpTable::Cells { cum, cells } => {
                let u: f64 = rng.random();
                let k = cum.partition_point(|&c| c <= u).min(cells.len() - 1);
                let (lo, hi) = cells[k];
                let v: f64 = rng.random();
                if lo > 0.0 {
                    lo * (hi / lo).powf(v)
                } else if hi < 0.0 {
                    hi * (lo / hi).powf(v)
                } else {
                    lo + (hi - lo) * v
                }
            }
            JumpTable::LogTail { log_lower } => {
                // ν((x,∞))/ν((lower,∞)) = log(lower)/log(x).
                let u: f64 = 1.0 - rng.random::<f64>();
                (log_lower / u).exp().min(f64::MAX)
            }
        }
    }

    /// Number of jumps and their sum over a window of length `dt`.
    pub fn jump_sum<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        if self.rate == 0.0 || dt == 0.0 {
            return 0.0;
        }
        let n = poisson(self.rate * dt, rng);
        (0..n).map(|_| self.sample_jump(rng)).sum()
    }

    /// One increment over a window of length `dt`.
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut x = self.drift * dt;
        if self.gauss_var > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            x += (self.gauss_var * dt).sqrt() * z;
        }
        x + self.jump_sum(dt, rng)
    }

    /// Increment whose Brownian part is driven by the given standard normal
    /// `z`; the small-jump substitute uses fresh noise.
    pub fn increment_with_normal<R: Rng + ?Sized>(&self, dt: f64, z: f64, rng: &mut R) -> f64 {
        let mut x = self.drift * dt + (self.sigma2 * dt).sqrt() * z;
        if self.small_var > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            x += (self.small_var * dt).sqrt() * w;
        }
        x + self.jump_sum(dt, rng)
    }

    /// Continuous part of an increment over `dt` (drift and Gaussian).
    pub fn continuous_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut x = self.drift * dt;
        if self.gauss_var > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            x += (self.gauss_var * dt).sqrt() * z;
        }
        x
    }

    /// Exponential waiting time to the next simulated jump (`∞` if none).
    pub fn next_jump_wait<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.rate == 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(rng);
        e / self.rate
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

/// Tabulates one side of a density as cells on `(a, b) ⊂ [0, ∞]`, measured in |x|.
fn build_side_cells(
    density: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    side: f64,
    cells: &mut Vec<(f64, f64)>,
    masses: &mut Vec<f64>,
) -> Result<()> {
    let cfg = quad::QuadConfig { abs_tol: 1e-14, rel_tol: 1e-10, ..Default::default() };
    let tail = |x: f64| -> Result<f64> { Ok(quad::integrate(density, x, b, &[1.0], &cfg)?.value) };
    let total = tail(a)?;
    if !total.is_finite() {
        return Err(LabError::numerical("jump rate beyond ε is not finitely computable"));
    }
    if total == 0.0 {
        return Ok(());
    }
    let mut top = if b.is_finite() { b } else { a.max(1.0) };
    if !b.is_finite() {
        while tail(top)? > TAIL_FRACTION * total {
            top *= 2.0;
            if top > 1e15 {
                return Err(LabError::numerical(
                    "jump rate beyond ε is not finitely computable: tail does not decay",
                ));
            }
        }
    }
    let mut edges = Vec::with_capacity(CELLS_PER_SIDE + 2);
    let start = if a > 0.0 { a } else { (1e-9f64).min(top * 1e-9) };
    if a == 0.0 {
        edges.push(0.0);
    }
    let ratio = (top / start).ln() / CELLS_PER_SIDE as f64;
    for k in 0..=CELLS_PER_SIDE {
        edges.push(start * (ratio * k as f64).exp());
    }
    *edges.last_mut().unwrap() = top;
    // Simpson per cell is ample at this resolution.
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let m = if lo == 0.0 {
            // Cell at the origin of a bounded density.
            let mid = 0.5 * hi;
            density(mid) * hi
        } else {
            let mid = (lo * hi).sqrt();
            // Simpson in log space: ∫ f(x) dx = ∫ f(e^s) e^s ds.
            let h = (hi / lo).ln();
            h / 6.0 * (density(lo) * lo + 4.0 * density(mid) * mid + density(hi) * hi)
        };
        if m > 0.0 && m.is_finite() {
            if side > 0.0 {
                cells.push((lo, hi));
            } else {
                cells.push((-hi, -lo));
            }
            masses.push(m);
        }
    }
    Ok(())
}

/// Picks `ε` with `∫_{|x|≤ε} x² ν(dx) ≤ 1e−4·(σ² + ∫_{|x|≤1} x² ν + ν(|x|>1))`.
fn choose_epsilon(triplet: &LevyTriplet) -> Result<f64> {
    let nu = triplet.nu();
    let small = |e: f64| -> Result<f64> { nu.integrate(|x| x * x, &Interval::closed(-e, e)) };
    let [l, r] = Interval::outside_unit_ball();
    let big: f64 = nu.integrate_regions(|_| 1.0, &[l, r])?;
    let scale = triplet.sigma2() + small(1.0)? + big;
    let target = SMALL_JUMP_SHARE * scale;
    if small(1.0)? <= target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (-30.0f64, 0.0f64);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if small(mid.exp())? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}

/// Joint sampler for a pair `(A, B)` of Lévy processes: independent
/// marginal jump parts, correlated Brownian parts and optional simultaneous
/// jumps at a finite rate.
#[derive(Clone, Debug)]
pub struct BivariateSampler {
    a: LevySampler,
    b: LevySampler,
    rho: f64,
    joint_rate: f64,
    joint: Option<JumpDist>,
}

impl BivariateSampler {
    /// `cov` is the covariance of the Brownian parts; `joint` adds
    /// simultaneous jumps `(rate, law)` with no compensation.
    pub fn new(a: &LevyTriplet, b: &LevyTriplet, cov: f64, joint: Option<(f64, JumpDist)>) -> Result<Self> {
        let sa = LevySampler::new(a)?;
        let sb = LevySampler::new(b)?;
        let denom = (sa.sigma2 * sb.sigma2).sqrt();
        let rho = if cov == 0.0 {
            0.0
        } else if denom > 0.0 {
            (cov / denom).clamp(-1.0, 1.0)
        } else {
            return Err(LabError::domain("Brownian covariance without Brownian parts"));
        };
        let (joint_rate, joint) = match joint {
            Some((r, d)) => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(LabError::domain("joint jump rate must be positive"));
                }
                (r, Some(d))
            }
            None => (0.0, None),
        };
        Ok(BivariateSampler { a: sa, b: sb, rho, joint_rate, joint })
    }

    pub fn marginals(&self) -> (&LevySampler, &LevySampler) {
        (&self.a, &self.b)
    }

    pub fn increment(&self, dt: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = if self.a.sigma2 > 0.0 || self.rho != 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        let z2: f64 = if self.b.sigma2 > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * w
        } else {
            0.0
        };
        let mut da = self.a.increment_with_normal(dt, z1, rng);
        let mut db = self.b.increment_with_normal(dt, z2, rng);
        if let Some(j) = &self.joint {
            for _ in 0..poisson(self.joint_rate * dt, rng) {
                let (x, y) = j.sample(rng);
                da += x;
                db += y;
            }
        }
        (da, db)
    }

    /// Exact event-driven simulation is possible.
    pub fn is_drift_plus_jumps(&self) -> bool {
        self.a.is_drift_plus_jumps() && self.b.is_drift_plus_jumps()
    }

    /// The first coordinate is drift plus finitely many jumps and the
    /// second has no Brownian correlation with it; integrals of functions of
    /// the first against the second are then exactly Gaussian between events.
    pub fn first_is_drift_plus_jumps(&self) -> bool {
        self.a.is_drift_plus_jumps() && self.rho == 0.0
    }

    pub fn drifts(&self) -> (f64, f64) {
        (self.a.drift, self.b.drift)
    }

    pub fn event_rate(&self) -> f64 {
        self.a.rate + self.b.rate + self.joint_rate
    }

    /// Jump pair at an event of the superposed clock.
    pub fn sample_event(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let u = rng.random::<f64>() * self.event_rate();
        if u < self.a.rate {
            (self.a.sample_jump(rng), 0.0)
        } else if u < self.a.rate + self.b.rate {
            (0.0, self.b.sample_jump(rng))
        } else {
            self.joint.as_ref().map_or((0.0, 0.0), |j| j.sample(rng))
        }
    }
}

/// [`BivariateSampler::increment`] with the step length fixed in advance so
/// per-step constants are computed once. Draw order is identical.
#[derive(Clone, Debug)]
pub struct FixedStep<'a> {
    pair: &'a BivariateSampler,
    drift: (f64, f64),
    sd: (f64, f64),
    sd_small: (f64, f64),
    rho_c: f64,
    need_z1: bool,
    poisson: [Option<Poisson<f64>>; 3],
}

impl<'a> FixedStep<'a> {
    pub fn new(pair: &'a BivariateSampler, h: f64) -> Self {
        let (a, b) = (&pair.a, &pair.b);
        let pois = |r: f64| (r > 0.0 && h > 0.0).then(|| Poisson::new(r * h).expect("finite positive mean"));
        FixedStep {
            pair,
            drift: (a.drift * h, b.drift * h),
            sd: ((a.sigma2 * h).sqrt(), (b.sigma2 * h).sqrt()),
            sd_small: ((a.small_var * h).sqrt(), (b.small_var * h).sqrt()),
            rho_c: (1.0 - pair.rho * pair.rho).sqrt(),
            need_z1: a.sigma2 > 0.0 || pair.rho != 0.0,
            poisson: [pois(a.rate), pois(b.rate), pair.joint.as_ref().and_then(|_| pois(pair.joint_rate))],
        }
    }

    /// True when the first coordinate moves deterministically.
    pub fn first_is_deterministic(&self) -> bool {
        !self.need_z1 && self.sd_small.0 == 0.0 && self.poisson[0].is_none() && self.poisson[2].is_none()
    }

    pub fn first_drift(&self) -> f64 {
        self.drift.0
    }

    #[inline]
    pub fn increment(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = if self.need_z1 { StandardNormal.sample(rng) } else { 0.0 };
        let z2: f64 = if self.pair.b.sigma2 > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            self.pair.rho * z1 + self.rho_c * w
        } else {
            0.0
        };
        let mut da = self.drift.0 + self.sd.0 * z1;
        if self.sd_small.0 > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            da += self.sd_small.0 * w;
        }
        if let Some(p) = &self.poisson[0] {
            for _ in 0..p.sample(rng) as u64 {
                da += self.pair.a.sample_jump(rng);
            }
        }
        let mut db = self.drift.1 + self.sd.1 * z2;
        if self.sd_small.1 > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            db += self.sd_small.1 * w;
        }
        if let Some(p) = &self.poisson[1] {
            for _ in 0..p.sample(rng) as u64 {
                db += self.pair.b.sample_jump(rng);
            }
        }
        if let (Some(p), Some(j)) = (&self.poisson[2], &self.pair.joint) {
            for _ in 0..p.sample(rng) as u64 {
                let (x, y) = j.sample(rng);
                da += x;
                db += y;
            }
        }
        (da, db)
    }
}

/// `n_steps` increments of `triplet` over steps of length `dt`.
pub fn sample_increments(triplet: &LevyTriplet, dt: f64, n_steps: usize, stream: RngStream) -> Result<PathGrid> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LabError::domain(format!("step must be positive, got {dt}")));
    }
    let sampler = LevySampler::new(triplet)?;
    let mut rng = stream.rng();
    let inc: Vec<f64> = (0..n_steps).map(|_| sampler.increment(dt, &mut rng)).collect();
    Ok(PathGrid {
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        series: vec![inc],
        kind: SeriesKind::Increments,
        horizon: n_steps as f64 * dt,
        seed: stream.seed,
        stream_id: stream.stream_id,
        scheme: Scheme::GridEuler,
    })
}

type PairSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> (f64, f64) + Send + Sync>;

/// Law of a single compound Poisson jump, univariate or joint.
#[derive(Clone)]
pub enum JumpDist {
    Atoms { loc: Vec<f64>, cum: Vec<f64> },
    JointAtoms { loc: Vec<(f64, f64)>, cum: Vec<f64> },
    /// Arbitrary joint sampler.
    Joint(PairSampler),
}

impl fmt::Debug for JumpDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpDist::Atoms { loc, .. } => write!(f, "JumpDist::Atoms({} atoms)", loc.len()),
            JumpDist::JointAtoms { loc, .. } => write!(f, "JumpDist::JointAtoms({} atoms)", loc.len()),
            JumpDist::Joint(_) => write!(f, "JumpDist::Joint(<sampler>)"),
        }
    }
}

fn cumulative(p: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut cum = Vec::new();
    for q in p {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(LabError::domain(format!("jump probability {q} is invalid")));
        }
        acc += q;
        cum.push(acc);
    }
    if cum.is_empty() || (acc - 1.0).abs() > 1e-9 {
        return Err(LabError::domain(format!("jump probabilities sum to {acc}, not 1")));
    }
    *cum.last_mut().unwrap() = 1.0;
    Ok(cum)
}

impl JumpDist {
    /// `(location, probability)` pairs.
    pub fn atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        Ok(JumpDist::Atoms {
            cum: cumulative(atoms.iter().map(|a| a.1))?,
            loc: atoms.iter().map(|a| a.0).collect(),
        })
    }

    /// `((x, y), probability)` triples.
    pub fn joint_atoms(atoms: &[((f64, f64), f64)]) -> Result<Self> {
        Ok(JumpDist::JointAtoms {
            cum: cumulative(atoms.iter().map(|a| a.1))?,
            loc: atoms.iter().map(|a| a.0).collect(),
        })
    }

    pub fn joint_fn<F>(f: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> (f64, f64) + Send + Sync + 'static,
    {
        JumpDist::Joint(Arc::new(f))
    }

    pub fn dimension(&self) -> usize {
        match self {
            JumpDist::Atoms { .. } => 1,
            _ => 2,
        }
    }

    /// One jump; the second coordinate is 0 for univariate laws.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match self {
            JumpDist::Atoms { loc, cum } => {
                let u: f64 = rng.random();
                (loc[cum.partition_point(|&c| c <= u).min(loc.len() - 1)], 0.0)
            }
            JumpDist::JointAtoms { loc, cum } => {
                let u: f64 = rng.random();
                loc[cum.partition_point(|&c| c <= u).min(loc.len() - 1)]
            }
            JumpDist::Joint(f) => f(rng),
        }
    }
}

/// Event-driven compound Poisson path on `[0, horizon]`: `times` holds 0 and
/// the jump times, `series[p][i]` the jump of coordinate `p` at `times[i+1]`.
pub fn sample_cpp_path(rate: f64, jumps: &JumpDist, horizon: f64, stream: RngStream) -> Result<PathGrid> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(LabError::domain("compound Poisson rate must be positive"));
    }
    if !(horizon >= 0.0) {
        return Err(LabError::domain("horizon must be ≥ 0"));
    }
    let mut rng = stream.rng();
    let mut times = vec![0.0];
    let mut series = vec![Vec::new(); jumps.dimension()];
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / rate;
        if t > horizon {
            break;
        }
        let (x, y) = jumps.sample(&mut rng);
        times.push(t);
        series[0].push(x);
        if series.len() > 1 {
            series[1].push(y);
        }
    }
    Ok(PathGrid {
        times,
        series,
        kind: SeriesKind::Increments,
        horizon,
        seed: stream.seed,
        stream_id: stream.stream_id,
        scheme: Scheme::EventDriven,
    })
}
