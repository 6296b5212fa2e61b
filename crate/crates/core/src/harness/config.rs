use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::charstats::{default_grid, linear_grid};
use crate::error::{LabError, Result};
use crate::levy_spec::{DrivingSpec, DrivingSpecJson, LevyTriplet, TripletJson};
use crate::oracles::{OracleParams, ORACLE_NAMES};

pub const SCHEMA_VERSION: &str = "v1";
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Cf,
    CheckIdentity,
    InvertEta,
    InvertXi,
    Laplace,
    Oracle,
    Continuity,
    GeneratorProbe,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Cf => "cf",
            Command::CheckIdentity => "check-identity",
            Command::InvertEta => "invert-eta",
            Command::InvertXi => "invert-xi",
            Command::Laplace => "laplace",
            Command::Oracle => "oracle",
            Command::Continuity => "continuity",
            Command::GeneratorProbe => "generator-probe",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| LabError::config("command", format!("unknown command {s:?}")))
    }
}

/// `spec` is either a registered oracle name or an inline driving spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecField {
    Oracle(String),
    Inline(DrivingSpecJson),
}

/// An evenly spaced grid or an explicit list of points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Linear { lo: f64, hi: f64, points: usize },
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let g = match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Linear { lo, hi, points } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) || *points < 2 {
                    return Err(LabError::config("grid", "need finite lo < hi and at least 2 points"));
                }
                linear_grid(*lo, *hi, *points)
            }
        };
        if g.is_empty() || g.iter().any(|u| !u.is_finite()) {
            return Err(LabError::config("grid", "grid points must be finite and non-empty"));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    #[default]
    Euler,
    Series,
    /// Exact sampler of an oracle's stationary law.
    Exact,
}

/// Overrides of [`OracleParams`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParamsJson {
    pub gamma_xi: Option<f64>,
    pub v: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub n: Option<u32>,
    /// Replaces the default `η_t = t` of `poisson-product` and `dep-pair`.
    pub eta: Option<TripletJson>,
}

impl OracleParamsJson {
    pub fn params(&self) -> OracleParams {
        let d = OracleParams::default();
        OracleParams {
            gamma_xi: self.gamma_xi.unwrap_or(d.gamma_xi),
            v: self.v.unwrap_or(d.v),
            mu: self.mu.unwrap_or(d.mu),
            lambda: self.lambda.unwrap_or(d.lambda),
            n: self.n.unwrap_or(d.n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Compound Poisson `η⁽ⁿ⁾` with atoms at ±1 and ±nⁿ; limit atoms ±1.
    Discont,
    /// Brownian `η⁽ⁿ⁾` with drift `1/n`; limit without drift.
    DriftBrownian,
    /// Members and limit given explicitly.
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityJson {
    pub family: FamilyKind,
    #[serde(default)]
    pub members: Vec<u32>,
    pub delta: f64,
    /// Variance of the Brownian family.
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default)]
    pub custom_members: Vec<TripletJson>,
    pub custom_limit: Option<TripletJson>,
    /// Defaults to `ξ_t = t`.
    pub xi: Option<TripletJson>,
}

fn one() -> f64 {
    1.0
}

fn default_n() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub spec: Option<SpecField>,
    /// Stand-alone ξ or η for the inversion commands when `spec` is absent.
    #[serde(default)]
    pub xi: Option<TripletJson>,
    #[serde(default)]
    pub eta: Option<TripletJson>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    /// Existing sample CSV used instead of simulating.
    #[serde(default)]
    pub sample: Option<PathBuf>,
    #[serde(default)]
    pub oracle: Option<OracleParamsJson>,
    #[serde(default)]
    pub continuity: Option<ContinuityJson>,
    /// Test-function names for `generator-probe`; all by default.
    #[serde(default)]
    pub functions: Option<Vec<String>>,
}

/// The spec after resolving oracle names.
#[derive(Debug, Clone)]
pub enum ResolvedSpec {
    Oracle(String),
    Inline(DrivingSpec),
}

impl ExperimentConfig {
    /// Parses JSON; schema errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path.is_empty() || path == "." { "config".to_string() } else { path };
            LabError::config(field, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_DRAWS {
            return Err(LabError::config("n", format!("n = {} is below the minimum {MIN_DRAWS}", self.n)));
        }
        if let Some(SpecField::Oracle(name)) = &self.spec {
            if !ORACLE_NAMES.contains(&name.as_str()) {
                return Err(LabError::config(
                    "spec",
                    format!("unknown oracle {name:?}; expected one of {}", ORACLE_NAMES.join(", ")),
                ));
            }
        }
        if let Some(g) = &self.grid {
            g.points()?;
        }
        for (field, v) in [("horizon", self.horizon), ("step", self.step), ("tol", self.tol)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(LabError::config(field, "must be positive and finite"));
                }
            }
        }
        if self.command == Command::Continuity && self.continuity.is_none() {
            return Err(LabError::config("continuity", "the continuity command needs a `continuity` section"));
        }
        Ok(())
    }

    pub fn grid_points(&self) -> Result<Vec<f64>> {
        self.grid.as_ref().map(|g| g.points()).unwrap_or_else(|| Ok(default_grid()))
    }

    pub fn resolved_spec(&self) -> Result<Option<ResolvedSpec>> {
        match &self.spec {
            None => Ok(None),
            Some(SpecField::Oracle(name)) => Ok(Some(ResolvedSpec::Oracle(name.clone()))),
            Some(SpecField::Inline(j)) => Ok(Some(ResolvedSpec::Inline(DrivingSpec::try_from(j)?))),
        }
    }

    pub fn triplet(field: &str, t: &Option<TripletJson>) -> Result<Option<LevyTriplet>> {
        t.as_ref()
            .map(|t| {
                LevyTriplet::try_from(t).map_err(|e| match e {
                    LabError::Config { .. } => e,
                    other => LabError::config(field, other.to_string()),
                })
            })
            .transpose()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_example_parses() {
        let c = ExperimentConfig::from_json(r#"{"command":"oracle","spec":"ou-normal","n":100000,"seed":7}"#).unwrap();
        assert_eq!(c.command, Command::Oracle);
        assert!(matches!(c.spec, Some(SpecField::Oracle(ref s)) if s == "ou-normal"));
    }

    #[test]
    fn schema_errors_point_at_the_field() {
        let e = ExperimentConfig::from_json(r#"{"command":"cf","grid":{"lo":"a"}}"#).unwrap_err();
        assert!(e.to_string().contains("grid"), "{e}");
        assert_eq!(e.exit_code(), 1);
        let e = ExperimentConfig::from_json(r#"{"command":"cf","n":10}"#).unwrap_err();
        assert!(e.to_string().contains("`n`"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"command":"oracle","spec":"nope"}"#).unwrap_err();
        assert!(e.to_string().contains("spec"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"command":"cf","grid":{"lo":1,"hi":0,"points":3}}"#).unwrap_err();
        assert!(e.to_string().contains("grid"), "{e}");
    }

    #[test]
    fn inline_spec_parses() {
        let c = ExperimentConfig::from_json(
            r#"{"command":"simulate","spec":{"xi":{"drift":1},"eta":{"sigma2":2}},"n":1000}"#,
        )
        .unwrap();
        assert!(matches!(c.resolved_spec().unwrap(), Some(ResolvedSpec::Inline(DrivingSpec::IndependentXiEta { .. }))));
    }

    #[test]
    fn hash_depends_on_seed() {
        let a = ExperimentConfig::from_json(r#"{"command":"cf","seed":1}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"command":"cf","seed":2}"#).unwrap();
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap(), a.clone().hash().unwrap());
    }
}
