//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! level = 0.05
//!
//! [[score]]
//! label = "twcrps_0"
//! family = "crps"
//! mode = "tw"
//! chaining = { kind = "from_weight", weight = { kind = "above", t = 0.0 } }
//!
//! [simulate]
//! dim = 1
//! weight = "univariate"
//! repetitions = 1000
//! scores = [{ family = "crps", mode = "tw" }]
//! ```

use std::path::Path;

use kernelscore::simstudy::ExperimentConfig;
use kernelscore::verification::VarianceEstimator;
use kernelscore::{ScoreFamily, ScoreRequest, Weighting};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "KERNELSCORE_SEED";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreEntry {
    /// Output label; defaults to `<family>` or `<mode><family>`.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub family: ScoreFamily,
    #[serde(flatten)]
    pub weighting: Weighting,
}

impl ScoreEntry {
    pub fn request(&self) -> ScoreRequest {
        ScoreRequest::new(self.family.clone(), self.weighting.clone())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.family.label().to_string())
    }

    pub fn mode(&self) -> &'static str {
        self.weighting.label()
    }
}

fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub variance: VarianceEstimator,
    #[serde(default, rename = "score")]
    pub scores: Vec<ScoreEntry>,
    #[serde(default)]
    pub simulate: Option<ExperimentConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            level: default_level(),
            variance: VarianceEstimator::default(),
            scores: Vec::new(),
            simulate: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::data(format!("invalid config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Seed precedence: command line, then environment, then config file.
    pub fn resolve_seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be a non-negative integer, got '{v}'")));
        }
        Ok(self.seed.unwrap_or(0))
    }

    /// Score requests, defaulting to the unweighted CRPS (d = 1) or energy score.
    pub fn score_entries(&self, dim: usize) -> Vec<ScoreEntry> {
        if !self.scores.is_empty() {
            return self.scores.clone();
        }
        let family = if dim == 1 { ScoreFamily::Crps } else { ScoreFamily::energy() };
        vec![ScoreEntry { label: None, family, weighting: Weighting::None }]
    }
}
