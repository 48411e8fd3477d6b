//! Run configuration: one TOML file with a section per stage, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chromaqt::experiment::ExperimentConfig;
use chromaqt::explain::ExplainConfig;
use chromaqt::signal::DetectorParams;
use chromaqt::synth::SynthSpec;
use chromaqt::util::sha256_hex;
use chromaqt::{NomogramBoundary, RenderConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Synthesis, fold assignment, training and explanation
    /// seeds all derive from it.
    pub seed: u64,
    /// Boundary CSV; the built-in non-clinical fixture when absent.
    pub boundary: Option<PathBuf>,
    pub synth: SynthSpec,
    pub render: RenderConfig,
    pub detector: DetectorParams,
    pub experiment: ExperimentConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            boundary: None,
            synth: SynthSpec::default(),
            render: RenderConfig::default(),
            detector: DetectorParams::default(),
            experiment: ExperimentConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            UsageError(format!(
                "config {}: {}",
                path.display(),
                one_line(&e.to_string())
            ))
            .into()
        })
    }

    /// Pushes the master seed into every stage section.
    pub fn resolve(mut self) -> Self {
        self.synth.seed = self.seed;
        self.experiment.train.seed = self.seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.to_toml())
    }

    pub fn boundary(&self) -> anyhow::Result<NomogramBoundary> {
        match &self.boundary {
            Some(p) => Ok(NomogramBoundary::load(p).map_err(chromaqt::Error::from)?),
            None => Ok(NomogramBoundary::fixture()),
        }
    }
}

pub fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
