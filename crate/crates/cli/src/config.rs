//! Optional TOML settings file given with `--config`.
//!
//! ```toml
//! seed = 17
//! jobs = 4
//!
//! [pitch]
//! floor_hz = 75.0
//!
//! [extract]
//! isolation_gap_s = 0.5
//!
//! [train]
//! epochs = 200
//! latent_dims = [2, 4, 8]
//!
//! [study]
//! instructions = "Listen to the clips and choose two that are the most similar to each other."
//! ```
//!
//! Command-line flags override file values, which override defaults.

use std::path::Path;

use prosody_core::corpus::ExtractConfig;
use prosody_core::pitch::PitchConfig;
use prosody_study::StudyConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub pitch: PitchConfig,
    pub extract: ExtractConfig,
    pub train: TrainSection,
    pub study: Option<StudyConfig>,
}

/// Training settings; unset fields fall back to the trainer defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub margin: Option<f64>,
    pub latent_dims: Option<Vec<usize>>,
    pub folds: Option<usize>,
    pub holdout_frac: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub normalize_latent: Option<bool>,
    pub allow_rank_deficient: Option<bool>,
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
}
