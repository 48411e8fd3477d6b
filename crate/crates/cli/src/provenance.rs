//! `run.json`: one entry per executed stage, enough to replay it.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Command;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub command: Command,
    /// Resolved configuration as TOML.
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub boundary_hash: String,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub stages: Vec<StageRecord>,
}

impl RunRecord {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Adds a stage, replacing an earlier run of the identical command.
    pub fn upsert(&mut self, record: StageRecord) {
        let key = serde_json::to_string(&record.command).expect("command serializes");
        self.stages
            .retain(|s| serde_json::to_string(&s.command).expect("command serializes") != key);
        self.stages.push(record);
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("run record serializes");
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

impl StageRecord {
    pub fn config(&self) -> anyhow::Result<RunConfig> {
        toml::from_str(&self.config).with_context(|| format!("stage {}: stored config", self.stage))
    }
}
