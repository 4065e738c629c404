//! Config documents for the non-experiment subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use riskscape::datagen::{generate, GenConfig};
use riskscape::experiments::ConfigFormat;
use riskscape::landscape::{GridSpec, InitLaw, Region};
use riskscape::models::Family;
use riskscape::optim::OptConfig;
use riskscape::oracle::OracleMethod;
use riskscape::{Dataset, ModelSpec, ParamVec};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

/// Reads a TOML or JSON document, chosen by file extension.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let format = ConfigFormat::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
    let parsed = match format {
        ConfigFormat::Toml => toml::from_str(&text).map_err(|e| e.to_string()),
        ConfigFormat::Json => serde_json::from_str(&text).map_err(|e| e.to_string()),
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Where a dataset comes from: a generator config or a saved file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default)]
    pub generate: Option<GenConfig>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Needed for CSV files, which do not record their family.
    #[serde(default)]
    pub family: Option<Family>,
}

impl DataSource {
    pub fn check(&self) -> Result<(), CliError> {
        match (&self.generate, &self.path) {
            (Some(g), None) => g.validate().map_err(|e| CliError::Config(e.to_string())),
            (None, Some(_)) => Ok(()),
            _ => Err(CliError::Config("data needs exactly one of 'generate' or 'path'".into())),
        }
    }

    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let (Some(g), Some(s)) = (self.generate.as_mut(), seed) {
            g.seed = s;
        }
    }

    /// The dataset and, for generated data, the true parameter.
    pub fn load(&self) -> Result<(Dataset, Option<ParamVec>), CliError> {
        if let Some(g) = &self.generate {
            let (data, truth) = generate(g)?;
            return Ok((data, Some(truth)));
        }
        let path = self.path.as_ref().expect("checked");
        Ok((Dataset::load(path, self.family)?, None))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataSource,
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptConfig,
    #[serde(default)]
    pub init: InitLaw,
    #[serde(default = "one")]
    pub inits: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub data: DataSource,
    pub model: ModelSpec,
    /// Defaults to the model's constraint ball.
    #[serde(default)]
    pub region: Option<Region>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also search the population risk of the generating law and pair the
    /// two point sets.
    #[serde(default)]
    pub population: bool,
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
}

fn default_starts() -> usize {
    40
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub epsilon: f64,
    pub eta: f64,
    #[serde(default)]
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub radius: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Generator whose population law is integrated; `n` is ignored.
    pub law: GenConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub method: OracleMethod,
    pub thetas: Vec<Vec<f64>>,
    #[serde(default)]
    pub hessian: bool,
    /// Sample size for an empirical-vs-population gap report over `thetas`.
    #[serde(default)]
    pub gap_n: Option<usize>,
}
