//! Experiment configuration files (TOML).
//!
//! ```toml
//! [model]
//! service = { 1 = 0.5, 2 = 0.5 }
//! beta = 1.0
//!
//! [arrivals]
//! family = "exponential"   # deterministic | exponential | erlang | hyperexponential | uniform
//!
//! [run]
//! mode = "limit"           # finite | limit | event | compare
//! n = [25, 100, 400]
//! samples = 1000000
//! seed = 7
//!
//! [output]
//! directory = "out"
//! ```
//!
//! Parsing happens in two stages: a permissive raw form where every key is
//! optional, then [`ExperimentConfig::from_raw`] which fills defaults and
//! reports the first missing required key by its dotted path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::ArrivalFamily;
use crate::model::{ServiceDistribution, ServiceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Finite,
    Limit,
    Event,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawArrivals {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnalysis {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_multipliers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validate_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

/// File form of a config; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<RawArrivals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RawRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<RawAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub service: ServiceDistribution,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBlock {
    pub mode: Mode,
    pub n: Vec<u64>,
    /// `None` means the per-simulator default.
    pub warmup: Option<u64>,
    pub samples: u64,
    pub spacing: u64,
    pub replications: usize,
    /// 0 lets the pool pick. Not part of the experiment's identity.
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisBlock {
    pub tail_lo: Option<f64>,
    pub tail_hi: Option<f64>,
    /// MGF grid as multiples of `θ*`.
    pub theta_grid: Vec<f64>,
    /// Drift exponents as multiples of `μθ*`.
    pub drift_multipliers: Vec<f64>,
    pub bin_width: f64,
    pub batches: usize,
    pub validate_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub arrivals: ArrivalFamily,
    pub run: RunBlock,
    pub analysis: AnalysisBlock,
    pub output: OutputBlock,
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::MissingKey(key.into()))
}

fn parse_family(raw: &RawArrivals) -> Result<ArrivalFamily, ConfigError> {
    let name = require(raw.family.as_deref(), "arrivals.family")?;
    let family = match name.to_ascii_lowercase().as_str() {
        "deterministic" => ArrivalFamily::Deterministic,
        "exponential" | "poisson" => ArrivalFamily::Exponential,
        "erlang" => ArrivalFamily::Erlang { shape: require(raw.shape, "arrivals.shape")? },
        "hyperexponential" => ArrivalFamily::Hyperexponential { c_a: require(raw.c_a, "arrivals.c_a")? },
        "uniform" => ArrivalFamily::Uniform,
        other => return Err(invalid("arrivals.family", format!("unknown family {other:?}"))),
    };
    family.validate().map_err(|e| invalid("arrivals", e.to_string()))?;
    if let (Some(c), false) = (raw.c_a, matches!(family, ArrivalFamily::Hyperexponential { .. })) {
        if (c - family.c_a()).abs() > 1e-12 {
            return Err(invalid("arrivals.c_a", format!("{name} arrivals have c_a = {}, not {c}", family.c_a())));
        }
    }
    Ok(family)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        Self::from_raw(&raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let model = require(raw.model.as_ref(), "model")?;
        let service = require(model.service.clone(), "model.service")?;
        let service = ServiceDistribution::try_from(ServiceSpec { p: service })
            .map_err(|e| invalid("model.service", e.to_string()))?;
        let beta = require(model.beta, "model.beta")?;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(invalid("model.beta", format!("must be positive, got {beta}")));
        }
        let arrivals = parse_family(require(raw.arrivals.as_ref(), "arrivals")?)?;

        let run = require(raw.run.as_ref(), "run")?;
        let mode = require(run.mode, "run.mode")?;
        let n = match run.n.clone() {
            None => Vec::new(),
            Some(OneOrMany::One(n)) => vec![n],
            Some(OneOrMany::Many(ns)) => ns,
        };
        if n.contains(&0) {
            return Err(invalid("run.n", "server counts must be positive"));
        }
        if mode == Mode::Compare && n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("run.n", "compare mode needs a strictly increasing list"));
        }
        let run = RunBlock {
            mode,
            n,
            warmup: run.warmup,
            samples: run.samples.unwrap_or(100_000),
            spacing: run.spacing.unwrap_or(1).max(1),
            replications: run.replications.unwrap_or(4).max(1),
            workers: run.workers.unwrap_or(0),
            seed: require(run.seed, "run.seed")?,
        };

        let a = raw.analysis.clone().unwrap_or_default();
        let analysis = AnalysisBlock {
            tail_lo: a.tail_lo,
            tail_hi: a.tail_hi,
            theta_grid: a.theta_grid.unwrap_or_else(|| vec![0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5]),
            drift_multipliers: a.drift_multipliers.unwrap_or_else(|| vec![0.5, 1.5]),
            bin_width: a.bin_width.unwrap_or(0.05),
            batches: a.batches.unwrap_or(32),
            validate_steps: a.validate_steps.unwrap_or(20_000),
        };
        if !(analysis.bin_width > 0.0) {
            return Err(invalid("analysis.bin_width", "must be positive"));
        }
        if analysis.batches < 20 {
            return Err(invalid("analysis.batches", "need at least 20"));
        }

        let out = require(raw.output.as_ref(), "output")?;
        let mut formats = out.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Json]);
        formats.sort();
        formats.dedup();
        let output = OutputBlock { directory: require(out.directory.clone(), "output.directory")?, formats };
        Ok(Self { model: ModelBlock { service, beta }, arrivals, run, analysis, output })
    }

    /// Fully populated raw form, omitting the worker count.
    pub fn resolved(&self) -> RawConfig {
        let (family, c_a, shape) = match self.arrivals {
            ArrivalFamily::Deterministic => ("deterministic", None, None),
            ArrivalFamily::Exponential => ("exponential", None, None),
            ArrivalFamily::Erlang { shape } => ("erlang", None, Some(shape)),
            ArrivalFamily::Hyperexponential { c_a } => ("hyperexponential", Some(c_a), None),
            ArrivalFamily::Uniform => ("uniform", None, None),
        };
        let r = &self.run;
        let a = &self.analysis;
        RawConfig {
            model: Some(RawModel {
                service: Some(ServiceSpec::from(self.model.service.clone()).p),
                beta: Some(self.model.beta),
            }),
            arrivals: Some(RawArrivals { family: Some(family.into()), c_a, shape }),
            run: Some(RawRun {
                mode: Some(r.mode),
                n: if r.n.is_empty() { None } else { Some(OneOrMany::Many(r.n.clone())) },
                warmup: r.warmup,
                samples: Some(r.samples),
                spacing: Some(r.spacing),
                replications: Some(r.replications),
                workers: None,
                seed: Some(r.seed),
            }),
            analysis: Some(RawAnalysis {
                tail_lo: a.tail_lo,
                tail_hi: a.tail_hi,
                theta_grid: Some(a.theta_grid.clone()),
                drift_multipliers: Some(a.drift_multipliers.clone()),
                bin_width: Some(a.bin_width),
                batches: Some(a.batches),
                validate_steps: Some(a.validate_steps),
            }),
            output: Some(RawOutput {
                directory: Some(self.output.directory.clone()),
                formats: Some(self.output.formats.clone()),
            }),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.resolved()).expect("resolved config serializes")
    }

    /// The single server count, for modes that run one system.
    pub fn single_n(&self) -> Result<u64, ConfigError> {
        match self.run.n.as_slice() {
            [] => Err(ConfigError::MissingKey("run.n".into())),
            [n] => Ok(*n),
            _ => Err(invalid("run.n", "this command runs one system; give a single n")),
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
service = { 1 = 0.5, 2 = 0.5 }
beta = 1

[arrivals]
family = "exponential"

[run]
mode = "limit"
seed = 11

[output]
directory = "out"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.model.beta, 1.0);
        assert_eq!(c.model.service.p(), &[0.5, 0.5]);
        assert_eq!(c.arrivals, ArrivalFamily::Exponential);
        assert_eq!(c.run.spacing, 1);
        assert_eq!(c.analysis.batches, 32);
        assert!(c.wants(Format::Csv) && c.wants(Format::Json));
        assert!(matches!(c.single_n(), Err(ConfigError::MissingKey(k)) if k == "run.n"));
    }

    #[test]
    fn missing_beta_is_named() {
        let text = BASE.replace("beta = 1\n", "");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(err, ConfigError::MissingKey("model.beta".into()));
        assert!(err.to_string().contains("model.beta"));
    }

    #[test]
    fn family_parameters_are_required() {
        let text = BASE.replace("\"exponential\"", "\"hyperexponential\"");
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap_err(), ConfigError::MissingKey("arrivals.c_a".into()));
        let text = BASE.replace("\"exponential\"", "\"erlang\"\nshape = 4");
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap().arrivals, ArrivalFamily::Erlang { shape: 4 });
        let text = BASE.replace("\"exponential\"", "\"exponential\"\nc_a = 0.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("seed = 11", "seed = 11\nsead = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn resolved_round_trips() {
        let text = BASE.replace("mode = \"limit\"", "mode = \"compare\"\nn = [25, 100]\nworkers = 3");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again.run.workers, 0);
        assert_eq!(ExperimentConfig { run: RunBlock { workers: 0, ..c.run.clone() }, ..c }, again);
    }

    #[test]
    fn compare_needs_increasing_n() {
        let text = BASE.replace("mode = \"limit\"", "mode = \"compare\"\nn = [100, 25]");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Invalid { key, .. }) if key == "run.n"));
    }
}
