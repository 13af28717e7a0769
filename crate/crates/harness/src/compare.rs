//! Multi-seed comparison of architectures: mean and sample standard
//! deviation of test micro-F1 per (task, config, size).

use std::collections::BTreeMap;

use model::{Aggregator, Base, ModelConfig};
use serde::{Deserialize, Serialize};
use taskgen::Task;

use crate::error::{HarnessError, Result};
use crate::plan::{display_name, RunRecord, TrainPlan};
use crate::train::{train, TrainOptions};

pub const MIN_SEEDS: usize = 3;

/// Named architecture matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variants {
    /// RNAR, RNAR-MPNN, RNAR-NoPE.
    Ablation,
    /// RNAR and RNAR-Janossy-k for k = 1, 2, 3.
    Janossy,
    /// Triplet-GMPNN with LSTM against max.
    Aggregators,
}

impl std::str::FromStr for Variants {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ablation" => Ok(Variants::Ablation),
            "janossy" => Ok(Variants::Janossy),
            "aggregators" => Ok(Variants::Aggregators),
            _ => Err(HarnessError::Plan(format!("unknown variant set `{s}` (expected ablation, janossy, aggregators)"))),
        }
    }
}

impl Variants {
    pub fn configs(self, base: &ModelConfig) -> Vec<ModelConfig> {
        let rnar = ModelConfig {
            base: Base::TripletGmpnn,
            aggregator: Aggregator::Lstm,
            janossy_k: 0,
            janossy_exhaustive: false,
            use_pos: true,
            ..base.clone()
        };
        match self {
            Variants::Ablation => vec![
                rnar.clone(),
                ModelConfig {
                    base: Base::Mpnn,
                    ..rnar.clone()
                },
                ModelConfig { use_pos: false, ..rnar },
            ],
            Variants::Janossy => (0..=3).map(|k| ModelConfig { janossy_k: k, ..rnar.clone() }).collect(),
            Variants::Aggregators => vec![
                rnar.clone(),
                ModelConfig {
                    aggregator: Aggregator::Max,
                    ..rnar
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub runs: usize,
}

impl Cell {
    pub fn of(xs: &[f64]) -> Option<Cell> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Cell {
            mean,
            std,
            runs: xs.len(),
        })
    }
}

/// Rows are tasks, columns are config names (in first-seen order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub size: usize,
    pub columns: Vec<String>,
    pub rows: Vec<(Task, Vec<Option<Cell>>)>,
}

impl Table {
    /// Mean over rows of each column's mean, over the rows where it exists.
    pub fn column_averages(&self) -> Vec<Option<f64>> {
        (0..self.columns.len())
            .map(|j| {
                let xs: Vec<f64> = self.rows.iter().filter_map(|(_, r)| r[j].as_ref().map(|c| c.mean)).collect();
                (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
            })
            .collect()
    }
}

/// Groups records into one table per evaluation size.
pub fn summarize(records: &[RunRecord]) -> Vec<Table> {
    let mut columns: Vec<String> = Vec::new();
    let mut tasks: Vec<Task> = Vec::new();
    let mut scores: BTreeMap<(usize, Task, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        if !columns.contains(&r.name) {
            columns.push(r.name.clone());
        }
        if !tasks.contains(&r.plan.task) {
            tasks.push(r.plan.task);
        }
        for (&size, m) in &r.metrics {
            scores.entry((size, r.plan.task, r.name.clone())).or_default().push(m.score);
        }
    }
    tasks.sort();
    let mut sizes: Vec<usize> = scores.keys().map(|k| k.0).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| Table {
            size,
            columns: columns.clone(),
            rows: tasks
                .iter()
                .map(|&t| {
                    let cells = columns
                        .iter()
                        .map(|c| scores.get(&(size, t, c.clone())).and_then(|xs| Cell::of(xs)))
                        .collect();
                    (t, cells)
                })
                .collect(),
        })
        .collect()
}

/// Trains every config with every seed on `plan.task` and tabulates the
/// test scores at `plan.eval_sizes`. Returns the records and the tables.
pub fn compare_aggregators(
    plan: &TrainPlan,
    configs: &[ModelConfig],
    seeds: &[u64],
    opts: &TrainOptions,
) -> Result<(Vec<RunRecord>, Vec<Table>)> {
    if seeds.len() < MIN_SEEDS {
        return Err(HarnessError::Plan(format!("comparison needs at least {MIN_SEEDS} seeds, got {}", seeds.len())));
    }
    if configs.is_empty() {
        return Err(HarnessError::Plan("no configs to compare".into()));
    }
    let mut records = Vec::new();
    for cfg in configs {
        for &seed in seeds {
            let p = TrainPlan {
                model: cfg.clone(),
                ..plan.clone()
            };
            if opts.verbose {
                eprintln!("[compare] {} on {} seed {seed}", display_name(cfg), plan.task);
            }
            records.push(train(&p, seed, opts)?);
        }
    }
    let tables = summarize(&records);
    Ok((records, tables))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let c = Cell::of(&[0.8, 0.9, 1.0]).unwrap();
        assert!((c.mean - 0.9).abs() < 1e-12);
        assert!((c.std - 0.1).abs() < 1e-12);
        assert_eq!(Cell::of(&[0.5]).unwrap().std, 0.0);
        assert!(Cell::of(&[]).is_none());
    }

    #[test]
    fn variant_matrices_have_the_table_columns() {
        let base = ModelConfig::default();
        let names = |v: Variants| v.configs(&base).iter().map(display_name).collect::<Vec<_>>();
        assert_eq!(names(Variants::Ablation), ["RNAR", "RNAR-MPNN", "RNAR-NoPE"]);
        assert_eq!(names(Variants::Janossy), ["RNAR", "RNAR-Janossy-1", "RNAR-Janossy-2", "RNAR-Janossy-3"]);
        assert_eq!(names(Variants::Aggregators), ["RNAR", "Triplet-GMPNN-max"]);
    }

    #[test]
    fn too_few_seeds_is_an_error() {
        let r = compare_aggregators(&TrainPlan::default(), &[ModelConfig::default()], &[1, 2], &TrainOptions::default());
        assert!(matches!(r, Err(HarnessError::Plan(_))));
    }
}
