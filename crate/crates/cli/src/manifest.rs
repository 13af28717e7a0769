//! Resolved settings of one invocation, written next to its outputs.

use std::fs;
use std::path::Path;

use harness::{Precision, TrainPlan};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub plan: TrainPlan,
    pub seeds: Vec<u64>,
    /// Tasks of multi-task commands; empty means `plan.task` alone.
    #[serde(default)]
    pub tasks: Vec<taskgen::Task>,
    /// Config names of comparison and timing runs.
    #[serde(default)]
    pub variants: Option<String>,
    /// Trajectory count of `gen` and `eval`.
    #[serde(default)]
    pub count: Option<usize>,
    pub precision: Precision,
    pub version: String,
}

impl Manifest {
    pub fn new(command: &str, plan: &TrainPlan, seeds: &[u64]) -> Self {
        Self {
            command: command.to_string(),
            plan: plan.clone(),
            seeds: seeds.to_vec(),
            tasks: Vec::new(),
            variants: None,
            count: None,
            precision: plan.precision,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}

/// Contents of a `--config` file: a manifest of an earlier run, or a
/// (partial) training plan. A `{model, optimizer}` config is a partial plan.
pub fn load_config(path: &Path) -> anyhow::Result<(TrainPlan, Vec<u64>)> {
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    if v.get("command").is_some() {
        let m: Manifest = serde_json::from_value(v)?;
        return Ok((m.plan, m.seeds));
    }
    Ok((TrainPlan::from_json(&text)?, Vec::new()))
}
