//! Experiment configuration files.
//!
//! A config is a JSON object with `experiment`, `seed`, `threads`,
//! `output_dir` and an experiment-specific `parameters` block. Unknown keys
//! are rejected at every level.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::experiments::{dispersion, drift, noise, oracle, regime, sde};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Oracle,
    Sde,
    Drift,
    Born,
    Dispersion,
    NoiseValidate,
    Regime,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Sde => "sde",
            Self::Drift => "drift",
            Self::Born => "born",
            Self::Dispersion => "dispersion",
            Self::NoiseValidate => "noise-validate",
            Self::Regime => "regime",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    seed: u64,
    #[serde(default)]
    threads: usize,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    parameters: Option<Value>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Oracle(oracle::OracleParams),
    Sde(sde::SdeParams),
    Drift(drift::DriftParams),
    Dispersion(dispersion::DispersionParams),
    NoiseValidate(noise::NoiseParams),
    Regime(regime::RegimeParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub parameters: Parameters,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let at = if path == "." { String::new() } else { format!("field `{path}`: ") };
            CliError::Config(format!("{at}{inner}"))
        })?;
        let params = raw.parameters.unwrap_or_else(|| Value::Object(Default::default()));
        let parameters = match raw.experiment {
            Experiment::Oracle => Parameters::Oracle(typed(params)?),
            Experiment::Sde | Experiment::Born => Parameters::Sde(typed(params)?),
            Experiment::Drift => Parameters::Drift(typed(params)?),
            Experiment::Dispersion => Parameters::Dispersion(typed(params)?),
            Experiment::NoiseValidate => Parameters::NoiseValidate(typed(params)?),
            Experiment::Regime => Parameters::Regime(typed(params)?),
        };
        Ok(Self {
            experiment: raw.experiment,
            seed: overrides.seed.unwrap_or(raw.seed),
            threads: overrides.threads.unwrap_or(raw.threads),
            output_dir: overrides.output_dir.clone().unwrap_or(raw.output_dir),
            parameters,
        })
    }

    /// SHA-256 of the canonical effective config. Thread count and output
    /// location do not change results, so they are left out.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "parameters": self.parameters,
        });
        // serde_json maps are ordered by key, so this rendering is canonical.
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn typed<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path == "." { "parameters".to_string() } else { format!("parameters.{path}") };
        CliError::Config(format!("field `{at}`: {inner}"))
    })
}
