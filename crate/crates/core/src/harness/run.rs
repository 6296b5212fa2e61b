use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Command, EstimatorChoice, ExperimentConfig, FamilyKind, ResolvedSpec, SCHEMA_VERSION};
use super::continuity::{continuity_suite, ContinuityFamily};
use crate::charstats::{empirical_cf, ks_critical_value, ks_distance_cdf, ks_distance_two_sample, linear_grid, CFGrid};
use crate::error::{LabError, Result};
use crate::expfun::{estimate_cpp_series, estimate_euler, EulerOptions, ExpFunSample};
use crate::generator::{apply_generator, apply_generator_ul, stationarity_residual, TestFunction};
use crate::levy_spec::{DrivingSpec, LevyTriplet};
use crate::oracles::{lookup, OracleCase, StationaryLaw};
use crate::pathsim::RngStream;
use crate::relations::{invert_eta, invert_xi, laplace_residual, residual_compact, ExponentGrid};

pub const THREADS_ENV: &str = "EXPFUN_THREADS";

/// Command-line overrides of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub data_files: Vec<PathBuf>,
    pub report_path: PathBuf,
    pub report: Value,
}

/// Loads a config file, applies overrides and runs it under the
/// `EXPFUN_THREADS` worker cap.
pub fn run_config(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(c) = opts.command {
        if c != cfg.command {
            return Err(LabError::config(
                "command",
                format!("command line says `{}`, config says `{}`", c.as_str(), cfg.command.as_str()),
            ));
        }
    }
    if opts.seed.is_some() {
        cfg.seed = opts.seed;
    }
    let out = opts.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    with_thread_cap(|| run_experiment(&cfg, &out))
}

fn with_thread_cap<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return f() };
    let k: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|k| *k > 0)
        .ok_or_else(|| LabError::config(THREADS_ENV, format!("expected a positive integer, got {raw:?}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build()
        .map_err(|e| LabError::numerical(format!("thread pool: {e}")))?;
    pool.install(f)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    preamble: String,
    stream: RngStream,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn write_data(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        w.write_all(self.preamble.as_bytes())?;
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn oracle(&self, name: &str) -> Result<OracleCase> {
        let params = self.cfg.oracle.clone().unwrap_or_default();
        let eta = ExperimentConfig::triplet("oracle.eta", &params.eta)?;
        lookup(name, &params.params(), eta)
    }

    /// The driving spec plus the oracle behind it, if any.
    fn spec(&self) -> Result<(DrivingSpec, Option<OracleCase>)> {
        match self.cfg.resolved_spec()? {
            Some(ResolvedSpec::Inline(s)) => Ok((s, None)),
            Some(ResolvedSpec::Oracle(name)) => {
                let case = self.oracle(&name)?;
                Ok((case.spec.clone(), Some(case)))
            }
            None => {
                let xi = ExperimentConfig::triplet("xi", &self.cfg.xi)?;
                let eta = ExperimentConfig::triplet("eta", &self.cfg.eta)?;
                match (xi, eta) {
                    (Some(xi), Some(eta)) => Ok((DrivingSpec::independent(xi, eta), None)),
                    _ => Err(LabError::config("spec", "a driving spec is required")),
                }
            }
        }
    }

    fn spec_opt(&self) -> Result<Option<(DrivingSpec, Option<OracleCase>)>> {
        if self.cfg.spec.is_none() && (self.cfg.xi.is_none() || self.cfg.eta.is_none()) {
            return Ok(None);
        }
        self.spec().map(Some)
    }

    /// ξ from the `xi` field, else from an independent spec.
    fn xi(&self) -> Result<Option<LevyTriplet>> {
        if let Some(t) = ExperimentConfig::triplet("xi", &self.cfg.xi)? {
            return Ok(Some(t));
        }
        Ok(match self.spec_opt()? {
            Some((DrivingSpec::IndependentXiEta { xi, .. }, _)) => Some(xi),
            _ => None,
        })
    }

    fn eta(&self) -> Result<Option<LevyTriplet>> {
        if let Some(t) = ExperimentConfig::triplet("eta", &self.cfg.eta)? {
            return Ok(Some(t));
        }
        Ok(match self.spec_opt()? {
            Some((DrivingSpec::IndependentXiEta { eta, .. }, _)) => Some(eta),
            _ => None,
        })
    }

    fn euler_options(&self) -> EulerOptions {
        let d = EulerOptions::default();
        EulerOptions { horizon: self.cfg.horizon, step: self.cfg.step.unwrap_or(d.step), ..d }
    }

    fn simulate(&self, spec: &DrivingSpec, case: Option<&OracleCase>, stream: RngStream) -> Result<ExpFunSample> {
        let n = self.cfg.n;
        match self.cfg.estimator {
            EstimatorChoice::Euler => estimate_euler(spec, &self.euler_options(), n, stream),
            EstimatorChoice::Series => match spec {
                DrivingSpec::IndependentXiEta { xi, eta } => {
                    estimate_cpp_series(xi, eta, self.cfg.tol.unwrap_or(1e-12), n, stream)
                }
                _ => Err(LabError::precondition("the series estimator needs independent ξ and η")),
            },
            EstimatorChoice::Exact => case
                .and_then(|c| c.exact_sample(n, stream))
                .ok_or_else(|| LabError::precondition("no exact sampler for this spec")),
        }
    }

    /// The sample file when given, a fresh simulation otherwise.
    fn sample(&self) -> Result<ExpFunSample> {
        if let Some(p) = &self.cfg.sample {
            return ExpFunSample::read_csv(BufReader::new(File::open(p)?));
        }
        let (spec, case) = self.spec()?;
        self.simulate(&spec, case.as_ref(), self.stream)
    }
}

/// Runs a validated config, writing data CSVs and `report.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let seed = cfg.seed.unwrap_or(0);
    let hash = cfg.hash()?;
    let mut ctx = Ctx {
        cfg,
        out,
        preamble: format!("# run: schema={SCHEMA_VERSION} seed={seed} config_sha256={hash}\n"),
        stream: RngStream::new(seed),
        files: Vec::new(),
    };
    let results = match cfg.command {
        Command::Simulate => cmd_simulate(&mut ctx)?,
        Command::Cf => cmd_cf(&mut ctx)?,
        Command::CheckIdentity => cmd_check_identity(&mut ctx)?,
        Command::InvertEta => cmd_invert(&mut ctx, true)?,
        Command::InvertXi => cmd_invert(&mut ctx, false)?,
        Command::Laplace => cmd_laplace(&mut ctx)?,
        Command::Oracle => cmd_oracle(&mut ctx)?,
        Command::Continuity => cmd_continuity(&mut ctx)?,
        Command::GeneratorProbe => cmd_generator(&mut ctx)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command.as_str(),
        "config_sha256": hash,
        "seed": seed,
        "config": cfg,
        "data_files": ctx.files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "results": results,
    });
    let report_path = out.join("report.json");
    let mut w = BufWriter::new(File::create(&report_path)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(RunSummary { out_dir: out.to_path_buf(), data_files: ctx.files, report_path, report })
}

fn sample_summary(s: &ExpFunSample) -> Value {
    json!({
        "n": s.len(),
        "mean": finite_or_null(s.mean()),
        "mean_se": finite_or_null(s.mean_se()),
        "estimator": s.estimator,
        "horizon": s.horizon,
        "step": s.step,
        "tail_bound": finite_or_null(s.bias_report.tail_bound),
        "doubling_delta": finite_or_null(s.bias_report.doubling_delta),
        "warnings": s.warnings,
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn grid_summary(g: &CFGrid) -> Value {
    let z = g.z_scores();
    json!({
        "points": g.len(),
        "fraction_within_4se": g.fraction_within(4.0),
        "max_z": z.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max),
        "warnings": g.warnings,
    })
}

fn cmd_simulate(ctx: &mut Ctx) -> Result<Value> {
    let s = ctx.sample()?;
    ctx.write_data("sample.csv", |w| s.write_csv(w))?;
    Ok(sample_summary(&s))
}

fn cmd_cf(ctx: &mut Ctx) -> Result<Value> {
    let s = ctx.sample()?;
    let cf = empirical_cf(&s.values, &ctx.cfg.grid_points()?)?;
    ctx.write_data("cf.csv", |w| cf.write_csv(w))?;
    Ok(json!({ "sample": sample_summary(&s), "cf": grid_summary(&cf) }))
}

fn cmd_check_identity(ctx: &mut Ctx) -> Result<Value> {
    let (spec, _) = ctx.spec()?;
    let ul = spec.to_ul()?;
    let s = ctx.sample()?;
    let r = residual_compact(&ul, &s, &ctx.cfg.grid_points()?)?;
    ctx.write_data("residual.csv", |w| r.write_csv(w))?;
    Ok(json!({ "sample": sample_summary(&s), "residual": grid_summary(&r) }))
}

fn exponent_summary(g: &ExponentGrid, truth: Option<&dyn Fn(f64) -> Result<Complex64>>) -> Result<Value> {
    let mut v = json!({
        "points": g.len(),
        "valid_points": g.valid_points().count(),
        "warnings": g.warnings,
    });
    if let Some(t) = truth {
        let mut within = 0usize;
        let mut total = 0usize;
        for (u, p, se) in g.valid_points() {
            total += 1;
            if (p - t(u)?).norm() <= 4.0 * se {
                within += 1;
            }
        }
        v["fraction_within_4se_of_truth"] = json!(if total == 0 { 0.0 } else { within as f64 / total as f64 });
    }
    Ok(v)
}

fn cmd_invert(ctx: &mut Ctx, eta_side: bool) -> Result<Value> {
    let grid = ctx.cfg.grid_points()?;
    let s = ctx.sample()?;
    let (g, truth) = if eta_side {
        let xi = ctx.xi()?.ok_or_else(|| LabError::config("xi", "invert-eta needs ξ"))?;
        (invert_eta(&xi, &s, &grid)?, ctx.eta()?)
    } else {
        let eta = ctx.eta()?.ok_or_else(|| LabError::config("eta", "invert-xi needs η"))?;
        (invert_xi(&eta, &s, &grid)?, ctx.xi()?.map(|x| x.negate()))
    };
    ctx.write_data("exponent.csv", |w| g.write_csv(w))?;
    let f = truth.map(|t| move |u: f64| t.exponent(u));
    let summary = match &f {
        Some(f) => exponent_summary(&g, Some(f as &dyn Fn(f64) -> Result<Complex64>))?,
        None => exponent_summary(&g, None)?,
    };
    Ok(json!({ "sample": sample_summary(&s), "exponent": summary }))
}

fn cmd_laplace(ctx: &mut Ctx) -> Result<Value> {
    let xi = ctx.xi()?.ok_or_else(|| LabError::config("xi", "laplace needs ξ"))?;
    let eta = ctx.eta()?.ok_or_else(|| LabError::config("eta", "laplace needs η"))?;
    let grid = match &ctx.cfg.grid {
        Some(g) => g.points()?,
        None => linear_grid(0.0, 5.0, 21),
    };
    let s = ctx.sample()?;
    let r = laplace_residual(&xi, &eta, &s, &grid)?;
    ctx.write_data("residual.csv", |w| r.write_csv(w))?;
    Ok(json!({ "sample": sample_summary(&s), "residual": grid_summary(&r) }))
}

fn cmd_oracle(ctx: &mut Ctx) -> Result<Value> {
    let Some(ResolvedSpec::Oracle(name)) = ctx.cfg.resolved_spec()? else {
        return Err(LabError::config("spec", "the oracle command needs an oracle name"));
    };
    let case = ctx.oracle(&name)?;
    let s = ctx.simulate(&case.spec, Some(&case), ctx.stream.substream(0))?;
    ctx.write_data("sample.csv", |w| s.write_csv(w))?;
    let n = s.len();
    let mut out = json!({ "oracle": case.name, "notes": case.notes, "sample": sample_summary(&s) });
    match &case.stationary_law {
        StationaryLaw::Analytic { label, cdf, .. } => {
            out["law"] = json!(label);
            out["ks_to_law"] = json!(ks_distance_cdf(&s.values, |x| cdf(x))?);
            out["ks_critical_99"] = json!(ks_critical_value(n, usize::MAX / 2, 0.01));
        }
        StationaryLaw::ProductCf(phi) => {
            let grid = ctx.cfg.grid_points()?;
            let cf = empirical_cf(&s.values, &grid)?;
            let mut max_z: f64 = 0.0;
            for (i, &u) in grid.iter().enumerate() {
                if cf.stderr[i] > 0.0 {
                    max_z = max_z.max((cf.estimate[i] - phi(u)).norm() / cf.stderr[i]);
                }
            }
            out["law"] = json!("product characteristic function");
            out["max_cf_z"] = json!(max_z);
        }
        StationaryLaw::None => {}
    }
    if let Some(comp) = &case.companion {
        let opts = ctx.euler_options();
        let t = estimate_euler(comp, &opts, n, ctx.stream.substream(1))?;
        ctx.write_data("companion.csv", |w| t.write_csv(w))?;
        out["ks_to_companion"] = json!(ks_distance_two_sample(&s.values, &t.values)?);
        out["ks_critical_99"] = json!(ks_critical_value(n, t.len(), 0.01));
    }
    Ok(out)
}

fn cmd_continuity(ctx: &mut Ctx) -> Result<Value> {
    let c = ctx.cfg.continuity.as_ref().ok_or_else(|| LabError::config("continuity", "section missing"))?;
    let default_members: &[u32] = match c.family {
        FamilyKind::Discont => &[2, 4, 8, 16],
        FamilyKind::DriftBrownian => &[2, 4, 8, 16, 32, 64],
        FamilyKind::Custom => &[],
    };
    let ns = if c.members.is_empty() { default_members.to_vec() } else { c.members.clone() };
    let family = match c.family {
        FamilyKind::Discont => ContinuityFamily::discont(&ns)?,
        FamilyKind::DriftBrownian => ContinuityFamily::drift_brownian(&ns, c.sigma2)?,
        FamilyKind::Custom => {
            let limit = ExperimentConfig::triplet("continuity.custom_limit", &c.custom_limit)?
                .ok_or_else(|| LabError::config("continuity.custom_limit", "custom families need a limit"))?;
            let members = c
                .custom_members
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((i as u32 + 1, LevyTriplet::try_from(t)?)))
                .collect::<Result<_>>()?;
            ContinuityFamily { label: "custom".into(), members, limit }
        }
    };
    let xi = ExperimentConfig::triplet("continuity.xi", &c.xi)?.unwrap_or_else(|| LevyTriplet::deterministic(1.0));
    let report = continuity_suite(&family, &xi, c.delta, ctx.cfg.n, ctx.stream)?;
    ctx.write_data("continuity.csv", |w| report.write_csv(w))?;
    Ok(serde_json::to_value(&report)?)
}

fn cmd_generator(ctx: &mut Ctx) -> Result<Value> {
    let (spec, case) = ctx.spec()?;
    let battery = TestFunction::battery();
    let functions: Vec<TestFunction> = match &ctx.cfg.functions {
        None => battery,
        Some(names) => names
            .iter()
            .map(|n| {
                battery
                    .iter()
                    .find(|f| f.name() == n)
                    .cloned()
                    .ok_or_else(|| LabError::config("functions", format!("unknown test function {n:?}")))
            })
            .collect::<Result<_>>()?,
    };
    let xs = match &ctx.cfg.grid {
        Some(g) => g.points()?,
        None => linear_grid(-3.0, 3.0, 21),
    };
    let ul = match &spec {
        DrivingSpec::IndependentXiEta { .. } => spec.to_ul().ok(),
        _ => None,
    };
    let mut rows = Vec::new();
    let mut max_form_gap: Option<f64> = None;
    for f in &functions {
        for &x in &xs {
            let a = apply_generator(&spec, f, x)?;
            if let Some(ul) = &ul {
                let b = apply_generator_ul(ul, f, x)?;
                let gap = (a - b).norm() / a.norm().max(1.0);
                max_form_gap = Some(max_form_gap.map_or(gap, |g: f64| g.max(gap)));
            }
            rows.push((f.name().to_string(), x, a));
        }
    }
    ctx.write_data("generator.csv", |w| {
        writeln!(w, "function,x,re,im")?;
        for (name, x, a) in &rows {
            writeln!(w, "{name},{x},{},{}", a.re, a.im)?;
        }
        Ok(())
    })?;
    let mut out = json!({ "functions": functions.iter().map(|f| f.name()).collect::<Vec<_>>(), "points": xs.len() });
    if let Some(g) = max_form_gap {
        out["max_form_gap"] = json!(g);
    }
    // Stationarity residuals need a sample of the stationary law.
    if ctx.cfg.sample.is_some() || case.is_some() {
        let s = match (&ctx.cfg.sample, &case) {
            (None, Some(c)) => ctx.simulate(&spec, Some(c), ctx.stream)?,
            _ => ctx.sample()?,
        };
        let mut res = Vec::new();
        for f in &functions {
            let (r, se) = stationarity_residual(&spec, f, &s)?;
            res.push(json!({
                "function": f.name(),
                "re": r.re,
                "im": r.im,
                "stderr": se,
                "z": if se > 0.0 { r.norm() / se } else { 0.0 },
            }));
        }
        out["stationarity"] = Value::Array(res);
        out["sample"] = sample_summary(&s);
    }
    Ok(out)
}
