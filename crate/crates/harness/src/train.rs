//! Online training with teacher forcing, gradient clipping and
//! best-by-validation parameter selection.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use diffcore::{adam_step, DiffError, Graph, ParamStore, Real};
use model::{init_params, run_model, HintMode, ModelError, RunOptions};
use taskgen::{batch, generate, Batch};

use crate::error::{HarnessError, Result};
use crate::eval::{evaluate_on, ModelPredictor};
use crate::plan::{environment_stamp, Precision, RunRecord, TrainPlan};
use crate::seeds::{trajectory_seed, SeedLedger, Stream};

pub const LOSS_EVERY: usize = 10;
pub const TIME_EVERY: usize = 50;

fn mix(seed: u64, step: usize) -> u64 {
    let mut z = seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

fn non_finite(step: usize, e: ModelError) -> HarnessError {
    fn root_is_non_finite(e: &ModelError) -> bool {
        match e {
            ModelError::Diff(DiffError::NonFinite { .. }) => true,
            ModelError::AtFeature { source, .. } => root_is_non_finite(source),
            _ => false,
        }
    }
    match e {
        ModelError::AtFeature { feature, step: t, source } if root_is_non_finite(&source) => HarnessError::NonFinite {
            step,
            feature,
            detail: format!("unroll step {t}: {source}"),
        },
        ModelError::Diff(d @ DiffError::NonFinite { .. }) => HarnessError::NonFinite {
            step,
            feature: "loss".into(),
            detail: d.to_string(),
        },
        other => other.into(),
    }
}

/// Training state of one run; [`Trainer::step`] performs one Adam update.
pub struct Trainer<R: Real> {
    pub plan: TrainPlan,
    pub seed: u64,
    pub store: ParamStore<R>,
    /// Completed updates.
    pub steps_done: usize,
    pub ledger: SeedLedger,
    fixed: Option<Batch>,
}

impl<R: Real> Trainer<R> {
    pub fn new(plan: &TrainPlan, seed: u64) -> Result<Self> {
        plan.validate()?;
        let mut store = ParamStore::new(seed);
        init_params(&mut store, plan.task, &plan.model);
        let mut t = Self {
            plan: plan.clone(),
            seed,
            store,
            steps_done: 0,
            ledger: SeedLedger::default(),
            fixed: None,
        };
        if plan.overfit {
            t.fixed = Some(t.draw(0)?);
        }
        Ok(t)
    }

    /// Fresh training batch `k` of the train stream.
    fn draw(&mut self, k: usize) -> Result<Batch> {
        let bs = self.plan.batch_size;
        let first = (k * bs) as u64;
        let trajs = (0..bs as u64)
            .map(|i| generate(self.plan.task, self.plan.n_train, trajectory_seed(Stream::Train, self.seed, first + i)))
            .collect::<taskgen::Result<Vec<_>>>()?;
        self.ledger.record(Stream::Train, self.seed, "train", first, bs as u64);
        Ok(batch(&trajs)?)
    }

    /// One update; returns the loss before it.
    pub fn step(&mut self) -> Result<f64> {
        let k = self.steps_done;
        let b = match &self.fixed {
            Some(b) => b.clone(),
            None => self.draw(k)?,
        };
        let opts = RunOptions {
            mode: HintMode::TeacherForced(self.plan.model.teacher_forcing_p),
            seed: mix(self.seed, k),
        };
        let mut g = Graph::new();
        let fwd = run_model(&mut g, &self.store, &self.plan.model, &b, &opts).map_err(|e| non_finite(k, e))?;
        let loss = g.value(fwd.loss).data()[0].as_f64();
        if !loss.is_finite() {
            return Err(HarnessError::NonFinite {
                step: k,
                feature: "loss".into(),
                detail: format!("loss = {loss}"),
            });
        }
        self.store.zero_grad();
        g.backward(fwd.loss, &mut self.store).map_err(|e| match e {
            DiffError::NonFinite { op } => HarnessError::NonFinite {
                step: k,
                feature: "backward".into(),
                detail: format!("gradient of {op}"),
            },
            other => other.into(),
        })?;
        let norm = self.store.clip_grad_norm(self.plan.clip_norm);
        if !norm.is_finite() {
            return Err(HarnessError::NonFinite {
                step: k,
                feature: "gradient".into(),
                detail: format!("global norm {norm}"),
            });
        }
        adam_step(&mut self.store, &self.plan.optimizer, k as u64 + 1)?;
        self.steps_done += 1;
        Ok(loss)
    }

    /// Mean micro-F1 on the validation set at `n_train`.
    pub fn validate(&mut self) -> Result<f64> {
        let mut p = ModelPredictor {
            store: &self.store,
            cfg: &self.plan.model,
        };
        let m = evaluate_on(&mut p, self.plan.task, self.plan.n_train, self.plan.val_samples, Stream::Valid, self.seed, &mut self.ledger)?;
        Ok(m.score)
    }
}

/// Where and how loudly a run reports.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    /// Best checkpoint goes to `<out>/checkpoint`.
    pub out_dir: Option<&'a Path>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

pub fn train(plan: &TrainPlan, seed: u64, opts: &TrainOptions) -> Result<RunRecord> {
    match plan.precision {
        Precision::Single => train_with::<f32>(plan, seed, opts),
        Precision::Double => train_with::<f64>(plan, seed, opts),
    }
}

pub fn train_with<R: Real>(plan: &TrainPlan, seed: u64, opts: &TrainOptions) -> Result<RunRecord> {
    let wall = Instant::now();
    let mut tr = Trainer::<R>::new(plan, seed)?;
    let mut loss_log = Vec::new();
    let mut time_log = Vec::new();
    let mut train_secs = 0.0;

    let mut best_val = tr.validate()?;
    let mut best_step = 0;
    let mut best = tr.store.clone();
    for k in 1..=plan.train_steps {
        let t0 = Instant::now();
        let loss = tr.step()?;
        train_secs += t0.elapsed().as_secs_f64();
        if k % LOSS_EVERY == 0 || k == 1 {
            loss_log.push((k, loss));
        }
        if k % TIME_EVERY == 0 {
            time_log.push((k, train_secs));
        }
        if k % plan.val_every == 0 || k == plan.train_steps {
            let v = tr.validate()?;
            if opts.verbose {
                eprintln!("[{} seed {seed}] step {k}: loss {loss:.4}, validation {v:.4}, {train_secs:.0}s", plan.task);
            }
            if v > best_val {
                best_val = v;
                best_step = k;
                best = tr.store.clone();
            }
        }
    }

    let checkpoint = match opts.out_dir {
        Some(dir) => {
            let path = dir.join("checkpoint");
            best.save_checkpoint(&path)?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let mut metrics = BTreeMap::new();
    for &n in &plan.eval_sizes {
        let mut p = ModelPredictor {
            store: &best,
            cfg: &plan.model,
        };
        let m = evaluate_on(&mut p, plan.task, n, plan.eval_samples, Stream::Test, seed, &mut tr.ledger)?;
        metrics.insert(n, m);
    }
    tr.ledger.audit()?;
    Ok(RunRecord {
        name: plan.display_name(),
        plan: plan.clone(),
        seed,
        metrics,
        best_step,
        best_val_score: best_val,
        loss_log,
        time_log,
        seed_ledger: tr.ledger,
        checkpoint,
        environment: environment_stamp(plan.precision),
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}

/// Cumulative training seconds after each of `checkpoints` (ascending step
/// counts). Only update time is measured.
pub fn timing_curve(plan: &TrainPlan, seed: u64, checkpoints: &[usize]) -> Result<Vec<(usize, f64)>> {
    match plan.precision {
        Precision::Single => timing_with::<f32>(plan, seed, checkpoints),
        Precision::Double => timing_with::<f64>(plan, seed, checkpoints),
    }
}

fn timing_with<R: Real>(plan: &TrainPlan, seed: u64, checkpoints: &[usize]) -> Result<Vec<(usize, f64)>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.first() == Some(&0) {
        return Err(HarnessError::Plan("timing checkpoints must be positive and strictly increasing".into()));
    }
    let mut tr = Trainer::<R>::new(plan, seed)?;
    let mut secs = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        while tr.steps_done < c {
            let t0 = Instant::now();
            tr.step()?;
            secs += t0.elapsed().as_secs_f64();
        }
        out.push((c, secs));
    }
    Ok(out)
}
