//! Evaluation protocol: self-feeding predictions on fresh test-stream
//! trajectories, scored per output feature.

use std::collections::BTreeMap;

use diffcore::{ParamStore, Real};
use model::{batch_frame, infer, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgen::{batch, generate, spec_of, Batch, FeatureSpec, Location, Probe, Stage, Task};

use crate::error::{HarnessError, Result};
use crate::metrics::F1Counts;
use crate::plan::Metrics;
use crate::seeds::{trajectory_seed, SeedLedger, Stream};

/// Trajectories per forward batch during evaluation.
pub const EVAL_CHUNK: usize = 16;

/// Produces hard output predictions for a batch, keyed by output feature,
/// in the padded `[B, frame]` layout of [`batch_frame`].
pub trait Predictor {
    fn predict(&mut self, batch: &Batch) -> Result<BTreeMap<String, Vec<f64>>>;
}

/// A trained (or untrained) model, run in self-feeding mode.
pub struct ModelPredictor<'a, R: Real> {
    pub store: &'a ParamStore<R>,
    pub cfg: &'a ModelConfig,
}

impl<R: Real> Predictor for ModelPredictor<'_, R> {
    fn predict(&mut self, batch: &Batch) -> Result<BTreeMap<String, Vec<f64>>> {
        Ok(infer(self.store, self.cfg, batch)?)
    }
}

/// Returns the ground-truth outputs; a test hook for the scoring pipeline.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&mut self, batch: &Batch) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut out = BTreeMap::new();
        for spec in spec_of(batch.task).iter().filter(|s| s.stage == Stage::Output) {
            out.insert(spec.name.to_string(), batch_frame(batch, spec, 0)?);
        }
        Ok(out)
    }
}

/// Uniform guesses among the values each probe can take.
pub struct RandomPredictor {
    rng: ChaCha8Rng,
}

impl RandomPredictor {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn guess(&mut self, spec: &FeatureSpec, batch: &Batch, b: usize) -> Vec<f64> {
        let n = batch.n_max;
        let size = batch.sizes[b];
        let c = match spec.probe {
            Probe::Categorical(c) => c,
            _ => 1,
        };
        let rows = match spec.location {
            Location::Graph => 1,
            Location::Node => n,
            Location::Edge => n * n,
        };
        let mut out = vec![0.0; rows * c];
        match spec.probe {
            Probe::Pointer => {
                for x in out.iter_mut().take(size) {
                    *x = self.rng.gen_range(0..size) as f64;
                }
            }
            Probe::Mask => {
                for x in out.iter_mut().take(size) {
                    *x = if self.rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                }
            }
            Probe::MaskOne => out[self.rng.gen_range(0..size)] = 1.0,
            Probe::Categorical(c) => {
                let live = if spec.location == Location::Graph { 1 } else { size };
                for r in 0..live {
                    out[r * c + self.rng.gen_range(0..c)] = 1.0;
                }
            }
            Probe::Scalar => {
                for x in out.iter_mut() {
                    *x = self.rng.gen::<f64>();
                }
            }
        }
        out
    }
}

impl Predictor for RandomPredictor {
    fn predict(&mut self, batch: &Batch) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut out = BTreeMap::new();
        for spec in spec_of(batch.task).iter().filter(|s| s.stage == Stage::Output) {
            let v: Vec<f64> = (0..batch.len()).flat_map(|b| self.guess(spec, batch, b)).collect();
            out.insert(spec.name.to_string(), v);
        }
        Ok(out)
    }
}

/// Pooled counts of every output feature of one batch.
pub fn score_batch(batch: &Batch, preds: &BTreeMap<String, Vec<f64>>, counts: &mut BTreeMap<String, F1Counts>) -> Result<()> {
    for spec in spec_of(batch.task).iter().filter(|s| s.stage == Stage::Output) {
        let target = batch_frame(batch, spec, 0)?;
        let pred = preds
            .get(spec.name)
            .ok_or_else(|| HarnessError::Plan(format!("predictor returned no `{}`", spec.name)))?;
        let len = target.len() / batch.len();
        if pred.len() != target.len() {
            return Err(HarnessError::Plan(format!("`{}` prediction has {} values, expected {}", spec.name, pred.len(), target.len())));
        }
        let entry = counts.entry(spec.name.to_string()).or_default();
        for b in 0..batch.len() {
            let valid: Vec<bool> = (0..batch.n_max).map(|i| batch.node_valid(b, i)).collect();
            entry.add(spec, &pred[b * len..(b + 1) * len], &target[b * len..(b + 1) * len], &valid);
        }
    }
    Ok(())
}

pub fn metrics_from_counts(task: Task, size: usize, samples: usize, counts: &BTreeMap<String, F1Counts>) -> Result<Metrics> {
    let mut features = BTreeMap::new();
    for spec in spec_of(task).iter().filter(|s| s.stage == Stage::Output) {
        let c = counts.get(spec.name).ok_or(HarnessError::EmptyEvaluation)?;
        features.insert(spec.name.to_string(), c.score(spec)?);
    }
    let score = features.values().sum::<f64>() / features.len() as f64;
    Ok(Metrics {
        size,
        samples,
        features,
        score,
    })
}

/// Index of trajectory `i` at `size` within a stream; sizes get disjoint blocks.
pub fn sized_index(size: usize, i: usize) -> u64 {
    (size as u64) << 28 | i as u64
}

/// Scores `predictor` on `n_samples` trajectories of `stream` at `size`.
pub fn evaluate_on(
    predictor: &mut dyn Predictor,
    task: Task,
    size: usize,
    n_samples: usize,
    stream: Stream,
    run_seed: u64,
    ledger: &mut SeedLedger,
) -> Result<Metrics> {
    task.check_size(size)?;
    if n_samples == 0 {
        return Err(HarnessError::EmptyEvaluation);
    }
    let mut counts = BTreeMap::new();
    let mut start = 0;
    while start < n_samples {
        let end = (start + EVAL_CHUNK).min(n_samples);
        let trajs = (start..end)
            .map(|i| generate(task, size, trajectory_seed(stream, run_seed, sized_index(size, i))))
            .collect::<taskgen::Result<Vec<_>>>()?;
        let b = batch(&trajs)?;
        let preds = predictor.predict(&b)?;
        score_batch(&b, &preds, &mut counts)?;
        start = end;
    }
    let label = match stream {
        Stream::Train => "train",
        Stream::Valid => "validation",
        Stream::Test => "test",
    };
    ledger.record(stream, run_seed, &format!("{label} n={size}"), sized_index(size, 0), n_samples as u64);
    metrics_from_counts(task, size, n_samples, &counts)
}

/// Self-feeding test metrics of a parameter set at one size.
pub fn evaluate<R: Real>(
    store: &ParamStore<R>,
    cfg: &ModelConfig,
    task: Task,
    size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Metrics> {
    let mut p = ModelPredictor { store, cfg };
    evaluate_on(&mut p, task, size, n_samples, Stream::Test, seed, &mut SeedLedger::default())
}
