//! Optional JSON config file. Command-line flags override its values, which
//! override the built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use soilspec::dataset::SynthConfig;
use soilspec::evaluation::GridSpec;
use soilspec::hyperparams::HyperparameterSet;
use soilspec::preprocess::PreprocessMode;
use soilspec::ModelKind;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub preprocess: Option<PreprocessMode>,
    #[serde(default)]
    pub hyperparameters: HyperparameterSet,
    /// Inline grid; a `--grid` file takes precedence.
    pub grid: Option<GridSpec>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub n_components: Option<usize>,
    pub resplit_per_seed: Option<bool>,
    pub cv_folds: Option<usize>,
    pub hist_bins: Option<usize>,
    pub jobs: Option<usize>,
    pub synth: Option<SynthConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

pub fn load_grid(path: &Path) -> Result<GridSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read grid {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid grid file {}", path.display()))
}
