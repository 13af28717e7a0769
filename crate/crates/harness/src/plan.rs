use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use diffcore::AdamConfig;
use model::{Aggregator, Base, ModelConfig};
use serde::{Deserialize, Serialize};
use taskgen::Task;

use crate::error::{HarnessError, Result};
use crate::seeds::SeedLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    Double,
}

impl std::str::FromStr for Precision {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            _ => Err(HarnessError::Plan(format!("precision must be `single` or `double`, got `{s}`"))),
        }
    }
}

/// Everything that determines a training run, apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPlan {
    pub task: Task,
    pub n_train: usize,
    pub eval_sizes: Vec<usize>,
    pub batch_size: usize,
    pub train_steps: usize,
    pub eval_samples: usize,
    pub val_samples: usize,
    /// Validation every this many steps (and after the last one).
    pub val_every: usize,
    pub clip_norm: f64,
    /// Train on one fixed batch instead of fresh data.
    pub overfit: bool,
    pub precision: Precision,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            task: Task::InsertionSort,
            n_train: 8,
            eval_sizes: vec![8, 16],
            batch_size: 32,
            train_steps: 5000,
            eval_samples: 128,
            val_samples: 32,
            val_every: 250,
            clip_norm: 1.0,
            overfit: false,
            precision: Precision::Single,
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task.check_size(self.n_train)?;
        for &n in &self.eval_sizes {
            self.task.check_size(n)?;
            if n < self.n_train {
                return Err(HarnessError::Plan(format!("eval size {n} is below n_train {}", self.n_train)));
            }
        }
        if self.batch_size == 0 || self.val_samples == 0 || self.val_every == 0 {
            return Err(HarnessError::Plan("batch_size, val_samples and val_every must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(HarnessError::Plan("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Column name used in comparison tables.
    pub fn display_name(&self) -> String {
        display_name(&self.model)
    }
}

/// Short human name of an architecture.
pub fn display_name(m: &ModelConfig) -> String {
    let core = match (m.base, m.aggregator) {
        (Base::TripletGmpnn, Aggregator::Lstm) => "RNAR".to_string(),
        (Base::Mpnn, Aggregator::Lstm) => "RNAR-MPNN".to_string(),
        (Base::TripletGmpnn, a) => format!("Triplet-GMPNN-{a}"),
        (Base::Mpnn, a) => format!("MPNN-{a}"),
    };
    let mut name = core;
    if m.aggregator == Aggregator::Lstm && m.janossy_k > 0 {
        name.push_str(&format!("-Janossy-{}", m.janossy_k));
    }
    if !m.use_pos {
        name.push_str("-NoPE");
    }
    name
}

/// Scores on one evaluation size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub size: usize,
    pub samples: usize,
    /// Micro-F1 of every output feature.
    pub features: BTreeMap<String, f64>,
    /// Mean of `features`.
    pub score: f64,
}

/// Outcome of one training run; one NDJSON line per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub plan: TrainPlan,
    pub seed: u64,
    /// Test metrics of the best-by-validation parameters, keyed by size.
    pub metrics: BTreeMap<usize, Metrics>,
    pub best_step: usize,
    pub best_val_score: f64,
    /// `(step, loss)` every 10 steps.
    pub loss_log: Vec<(usize, f64)>,
    /// `(step, cumulative training seconds)` every 50 steps.
    pub time_log: Vec<(usize, f64)>,
    pub seed_ledger: SeedLedger,
    pub checkpoint: Option<String>,
    /// `os/arch`, crate version and precision of the producing binary.
    pub environment: String,
    pub wall_seconds: f64,
}

pub fn environment_stamp(precision: Precision) -> String {
    format!(
        "{}/{} rnar-harness {} {:?}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        env!("CARGO_PKG_VERSION"),
        precision
    )
    .to_lowercase()
}

impl RunRecord {
    pub fn score(&self, size: usize) -> Option<f64> {
        self.metrics.get(&size).map(|m| m.score)
    }
}

pub fn append_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
