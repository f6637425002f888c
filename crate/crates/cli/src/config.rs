//! TOML run configuration. Every table rejects unknown keys; command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub suite: SuiteSection,
    #[serde(default)]
    pub net: NetSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ClassName {
    Singleton,
    Kmeans,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LossName {
    Squared,
    Absolute,
    Huber,
    PseudoHuber,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub class: Option<ClassName>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<f64>,
    pub vp: Option<f64>,
    pub k: Option<u32>,
    pub d: Option<u32>,
    pub w: Option<f64>,
    pub moment_sum: Option<f64>,
    pub loss: Option<LossName>,
    pub loss_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub input: Option<PathBuf>,
    pub kappa: Option<usize>,
    pub function: Option<String>,
    pub xy: Option<bool>,
    pub w: Option<Vec<f64>>,
    pub loss: Option<LossName>,
    pub loss_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub name: Option<String>,
    pub quick: Option<bool>,
    pub trials: Option<u64>,
    pub draws: Option<u64>,
    pub kappa: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<f64>,
    pub m_list: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub sets: Option<usize>,
    pub candidates: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub w: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<usize>,
    pub audit: Option<usize>,
    pub lattice: Option<bool>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}
