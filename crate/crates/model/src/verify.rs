//! Self-checks of the model: analytic gradients against finite differences,
//! permutation symmetry, and activation-memory growth.

use diffcore::{fd_check_with, FdOptions, Graph, ParamStore, Real, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgen::{batch, generate, spec_of, Batch, FeatureSpec, Location, Probe, Stage, Task, Trajectory};

use crate::config::{Aggregator, Base, ModelConfig};
use crate::error::Result;
use crate::layers::{
    aggregate_invariant, aggregate_janossy, aggregate_janossy_exhaustive, aggregate_lstm, all_orderings, message,
    triplet_readout,
};
use crate::net::{decode, feature_loss, process_step, run_model, Ctx, HintMode, RunOptions};
use crate::params::init_params;

/// Outcome of one named check: a measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub tol: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tol`.
    pub fn at_most(suite: &'static str, name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            measured,
            tol,
            passed: measured <= tol,
            detail: String::new(),
        }
    }

    /// Passes when `measured >= tol`.
    pub fn at_least(suite: &'static str, name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self {
            passed: measured >= tol,
            ..Self::at_most(suite, name, measured, tol)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{verdict} [{}] {}: measured {:.3e}, tol {:.3e}", self.suite, self.name, self.measured, self.tol);
        if !self.detail.is_empty() {
            s.push_str(&format!(" ({})", self.detail));
        }
        s
    }
}

// ---------------------------------------------------------------- gradients

pub const GRAD_TOL: f64 = 1e-5;

fn tiny(base: Base, aggregator: Aggregator) -> ModelConfig {
    ModelConfig {
        hidden_dim: 4,
        triplet_dim: 3,
        base,
        aggregator,
        ..ModelConfig::default()
    }
}

fn random_tensor<R: Real>(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<R> {
    let data: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &data).expect("shape matches data")
}

/// Fixed random input tensors, rebuilt identically for every evaluation.
struct Inputs(Vec<Tensor<f64>>);

impl Inputs {
    fn new(shapes: &[Vec<usize>], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self(shapes.iter().map(|s| random_tensor(s.clone(), &mut rng)).collect())
    }

    fn vars(&self, g: &mut Graph<f64>) -> Vec<Var> {
        self.0.iter().map(|t| g.input(t.clone())).collect()
    }
}

/// `sum(out * w)` with a fixed random `w`, so every output element matters.
fn probe_loss(g: &mut Graph<f64>, out: Var, seed: u64) -> diffcore::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.input(random_tensor(g.shape(out).to_vec(), &mut rng));
    let p = g.mul(out, w)?;
    g.sum_all(p)
}

/// Randomizes every parameter so no path starts at an exact zero or kink.
fn jitter(store: &mut ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        for x in store.value_mut(&name).expect("present").data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
}

fn grad_store(task: Task, cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    let mut s = ParamStore::new(seed);
    init_params(&mut s, task, cfg);
    jitter(&mut s, seed + 1);
    s
}

fn fd<F>(name: &str, store: &mut ParamStore<f64>, f: F) -> Check
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> diffcore::Result<Var>,
{
    let opts = FdOptions {
        eps: 1e-6,
        tol: GRAD_TOL,
        max_elems_per_entry: Some(8),
    };
    match fd_check_with(f, store, &opts) {
        Ok(report) => {
            let worst = report
                .entries
                .iter()
                .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
                .map(|e| format!("worst {}[{}], {} entries", e.name, e.worst_index, report.entries.len()))
                .unwrap_or_default();
            Check::at_most("grad", name, report.max_rel_err(), GRAD_TOL).with_detail(worst)
        }
        Err(e) => Check::at_most("grad", name, f64::INFINITY, GRAD_TOL).with_detail(format!("error: {e}")),
    }
}

/// Two trajectories of different sizes so padding paths are exercised.
fn padded_batch(task: Task, seed: u64) -> Batch {
    let a = generate(task, 3, seed).expect("valid size");
    let b = generate(task, 4, seed + 1).expect("valid size");
    batch(&[a, b]).expect("same task")
}

/// Finite-difference checks of every parameterized path in double precision.
pub fn grad_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let (bsz, n, h) = (2usize, 4usize, 4usize);

    // message function, with a second layer
    let cfg = ModelConfig {
        msg_layers: 2,
        ..tiny(Base::Mpnn, Aggregator::Max)
    };
    let mut s = grad_store(Task::InsertionSort, &cfg, 1);
    let inp = Inputs::new(&[vec![bsz, n, h], vec![bsz, n, n, h], vec![bsz, h]], 2);
    out.push(fd("message", &mut s, |g, st| {
        let v = inp.vars(g);
        let m = message(g, st, v[0], v[1], v[2], 2)?;
        probe_loss(g, m, 3)
    }));

    // update and gate through whole processor steps
    let pb = padded_batch(Task::InsertionSort, 4);
    let ctx = Ctx::new(&pb).expect("batch");
    for (base, agg) in [
        (Base::Mpnn, Aggregator::Max),
        (Base::Mpnn, Aggregator::Sum),
        (Base::Mpnn, Aggregator::Mean),
        (Base::TripletGmpnn, Aggregator::Max),
        (Base::TripletGmpnn, Aggregator::Lstm),
    ] {
        let cfg = ModelConfig {
            update_layers: 2,
            ..tiny(base, agg)
        };
        let mut s = grad_store(Task::InsertionSort, &cfg, 5);
        let inp = Inputs::new(&[vec![bsz, n, h], vec![bsz, n, n, h], vec![bsz, h]], 6);
        out.push(fd(&format!("process_step {}", cfg.label()), &mut s, |g, st| {
            let v = inp.vars(g);
            let y = process_step(g, st, &cfg, &ctx, v[0], v[1], v[2], 0, 7)?;
            probe_loss(g, y, 8)
        }));
    }

    // aggregators in isolation
    let cfg = tiny(Base::Mpnn, Aggregator::Lstm);
    let mut s = grad_store(Task::InsertionSort, &cfg, 9);
    let inp = Inputs::new(&[vec![5, h]], 10);
    out.push(fd("lstm aggregator", &mut s, |g, st| {
        let v = inp.vars(g);
        let y = aggregate_lstm(g, st, v[0])?;
        probe_loss(g, y, 11)
    }));
    out.push(fd("janossy k=2", &mut s, |g, st| {
        let v = inp.vars(g);
        let y = aggregate_janossy(g, st, v[0], 2, &mut ChaCha8Rng::seed_from_u64(12))?;
        probe_loss(g, y, 13)
    }));
    let inp4 = Inputs::new(&[vec![4, h]], 14);
    out.push(fd("janossy exhaustive", &mut s, |g, st| {
        let v = inp4.vars(g);
        let y = aggregate_janossy_exhaustive(g, st, v[0])?;
        probe_loss(g, y, 15)
    }));
    let valid = [true, true, false, true, true, true, true, false, true, false, true, true];
    for kind in [Aggregator::Max, Aggregator::Sum, Aggregator::Mean] {
        // no parameters here, so the messages themselves are differentiated
        let mut s = ParamStore::<f64>::new(16);
        s.insert("msgs", Inputs::new(&[vec![3, 4, h]], 16).0.remove(0));
        out.push(fd(&format!("{kind} aggregator (masked)"), &mut s, |g, st| {
            let x = g.param(st, "msgs")?;
            let y = aggregate_invariant(g, kind, x, &valid)?;
            probe_loss(g, y, 18)
        }));
    }

    // triplet readout with a padded node
    let cfg = tiny(Base::TripletGmpnn, Aggregator::Max);
    let mut s = grad_store(Task::InsertionSort, &cfg, 19);
    let inp = Inputs::new(&[vec![bsz, n, h], vec![bsz, n, n, h], vec![bsz, h]], 20);
    let valid = [true, true, true, true, true, true, false, true];
    out.push(fd("triplet readout", &mut s, |g, st| {
        let v = inp.vars(g);
        let y = triplet_readout(g, st, v[0], v[1], v[2], &valid)?;
        probe_loss(g, y, 21)
    }));

    // decoders and losses of every probe type, including a categorical one
    out.extend(decoder_checks());

    // whole forward passes, teacher forcing on every step
    let tf = RunOptions {
        mode: HintMode::TeacherForced(1.0),
        seed: 22,
    };
    for task in Task::ALL {
        let cfg = tiny(Base::TripletGmpnn, Aggregator::Lstm);
        let mut s = grad_store(task, &cfg, 23);
        let b = padded_batch(task, 24);
        out.push(fd(&format!("run_model {task} {}", cfg.label()), &mut s, |g, st| Ok(run_model(g, st, &cfg, &b, &tf)?.loss)));
    }
    let b = padded_batch(Task::InsertionSort, 25);
    for cfg in [
        tiny(Base::Mpnn, Aggregator::Max),
        tiny(Base::Mpnn, Aggregator::Lstm),
        ModelConfig {
            janossy_k: 2,
            ..tiny(Base::TripletGmpnn, Aggregator::Lstm)
        },
        ModelConfig {
            use_pos: false,
            ..tiny(Base::TripletGmpnn, Aggregator::Lstm)
        },
    ] {
        let mut s = grad_store(Task::InsertionSort, &cfg, 26);
        out.push(fd(&format!("run_model insertion_sort {}", cfg.label()), &mut s, |g, st| {
            Ok(run_model(g, st, &cfg, &b, &tf)?.loss)
        }));
    }
    out
}

fn decoder_checks() -> Vec<Check> {
    let cfg = tiny(Base::Mpnn, Aggregator::Max);
    let h = cfg.hidden_dim;
    let pb = padded_batch(Task::Bfs, 27);
    let ctx = Ctx::new(&pb).expect("batch");
    let (bsz, n) = (ctx.bsz, ctx.n);
    let specs = [
        FeatureSpec::new("s", Stage::Hint, Location::Node, Probe::Scalar),
        FeatureSpec::new("g", Stage::Hint, Location::Graph, Probe::Scalar),
        FeatureSpec::new("m", Stage::Hint, Location::Node, Probe::Mask),
        FeatureSpec::new("o", Stage::Hint, Location::Node, Probe::MaskOne),
        FeatureSpec::new("p", Stage::Hint, Location::Node, Probe::Pointer),
        FeatureSpec::new("c", Stage::Hint, Location::Node, Probe::Categorical(3)),
        FeatureSpec::new("k", Stage::Hint, Location::Graph, Probe::Categorical(3)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut out = Vec::new();
    for spec in specs {
        let mut s = ParamStore::<f64>::new(29);
        let p = format!("dec.{}", spec.name);
        let width = if let Probe::Categorical(c) = spec.probe { c } else { 1 };
        if spec.probe == Probe::Pointer {
            for part in ["src", "dst"] {
                s.init_linear(&format!("{p}.{part}.w"), h, h);
                s.init_const(&format!("{p}.{part}.b"), vec![h], 0.1);
            }
        } else {
            s.init_linear(&format!("{p}.w"), h, width);
            s.init_const(&format!("{p}.b"), vec![width], 0.1);
        }
        let items = if spec.location == Location::Graph { bsz } else { bsz * n };
        let target: Vec<f64> = match spec.probe {
            Probe::Scalar => (0..items).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Probe::Mask => (0..items).map(|_| f64::from(rng.gen_bool(0.5))).collect(),
            Probe::MaskOne => (0..bsz)
                .flat_map(|b| {
                    let hot = rng.gen_range(0..ctx.sizes[b]);
                    (0..n).map(move |u| f64::from(u == hot))
                })
                .collect(),
            Probe::Pointer => (0..bsz).flat_map(|b| (0..n).map(move |_| b)).map(|b| rng.gen_range(0..ctx.sizes[b]) as f64).collect(),
            Probe::Categorical(c) => (0..items)
                .flat_map(|_| {
                    let hot = rng.gen_range(0..c);
                    (0..c).map(move |j| f64::from(j == hot))
                })
                .collect(),
        };
        let weight = vec![1.0; bsz];
        let inp = Inputs::new(&[vec![bsz, n, h]], 30);
        out.push(fd(&format!("decoder+loss {:?}/{:?}", spec.location, spec.probe), &mut s, |g, st| {
            let x = inp.vars(g)[0];
            let pred = decode(g, st, &ctx, &spec, x)?;
            let (l, _) = feature_loss(g, &ctx, &spec, pred, &target, &weight)?;
            Ok(l)
        }));
    }
    out
}

// ---------------------------------------------------------------- symmetry

pub const EQUIVARIANCE_TOL: f64 = 1e-5;
pub const WITNESS_GAP: f64 = 1e-6;

/// Maps a decoder output of the original trajectory into the layout of the
/// relabeled one (node `u` moved to `perm[u]`).
fn relabel_prediction(spec: &FeatureSpec, data: &[f64], n: usize, perm: &[usize]) -> Vec<f64> {
    if spec.location == Location::Graph {
        return data.to_vec();
    }
    let mut out = vec![0.0; data.len()];
    if spec.probe == Probe::Pointer {
        for u in 0..n {
            for v in 0..n {
                out[perm[u] * n + perm[v]] = data[u * n + v];
            }
        }
        return out;
    }
    let c = data.len() / n;
    for u in 0..n {
        out[perm[u] * c..(perm[u] + 1) * c].copy_from_slice(&data[u * c..(u + 1) * c]);
    }
    out
}

/// Every decoder output of a teacher-forced pass over a single trajectory,
/// in schema order and step order.
fn all_predictions<R: Real>(store: &ParamStore<R>, cfg: &ModelConfig, t: &Trajectory) -> Result<Vec<(FeatureSpec, Vec<f64>)>> {
    let b = batch(std::slice::from_ref(t))?;
    let mut g = Graph::new();
    let fwd = run_model(
        &mut g,
        store,
        cfg,
        &b,
        &RunOptions {
            mode: HintMode::TeacherForced(1.0),
            seed: 0,
        },
    )?;
    let mut out = Vec::new();
    for spec in spec_of(t.task) {
        match spec.stage {
            Stage::Output => out.push((spec, g.value(fwd.outputs[spec.name]).to_f64_vec())),
            Stage::Hint => {
                for step in &fwd.hints {
                    out.push((spec, g.value(step[spec.name]).to_f64_vec()));
                }
            }
            Stage::Input => {}
        }
    }
    Ok(out)
}

/// Largest deviation between predictions on `t` mapped through `perm` and
/// predictions on the relabeled trajectory.
pub fn equivariance_gap<R: Real>(store: &ParamStore<R>, cfg: &ModelConfig, t: &Trajectory, perm: &[usize]) -> Result<f64> {
    let r = t.relabel(perm)?;
    let a = all_predictions(store, cfg, t)?;
    let b = all_predictions(store, cfg, &r)?;
    let mut gap: f64 = 0.0;
    for ((spec, x), (_, y)) in a.iter().zip(&b) {
        let x = relabel_prediction(spec, x, t.n, perm);
        for (p, q) in x.iter().zip(y) {
            gap = gap.max((p - q).abs());
        }
    }
    Ok(gap)
}

fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn sym_cfg(aggregator: Aggregator) -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        aggregator,
        ..ModelConfig::default()
    }
}

/// Double-precision equivariance of the full model under `draws` random
/// relabelings, cycling through tasks and sizes.
pub fn relabel_gap(cfg: &ModelConfig, draws: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let task = Task::ALL[i % Task::ALL.len()];
        let n = 4 + i % 4;
        let t = generate(task, n, seed.wrapping_add(1000 + i as u64))?;
        let mut store = ParamStore::<f64>::new(seed.wrapping_add(i as u64));
        init_params(&mut store, task, cfg);
        let perm = random_perm(n, &mut rng);
        worst = worst.max(equivariance_gap(&store, cfg, &t, &perm)?);
    }
    Ok(worst)
}

/// Number of random parameter draws (out of `draws`) for which the LSTM
/// aggregator gives outputs more than `WITNESS_GAP` apart on two orderings
/// of the same four messages.
pub fn lstm_witness_count(draws: usize) -> Result<usize> {
    let cfg = ModelConfig {
        hidden_dim: 8,
        aggregator: Aggregator::Lstm,
        ..ModelConfig::default()
    };
    let mut hits = 0;
    for d in 0..draws as u64 {
        let mut store = ParamStore::<f64>::new(d);
        init_params(&mut store, Task::InsertionSort, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(d ^ 0xabcd);
        let msgs: Tensor<f64> = random_tensor(vec![4, 8], &mut rng);
        let mut perm = random_perm(4, &mut rng);
        while perm == [0, 1, 2, 3] {
            perm = random_perm(4, &mut rng);
        }
        let mut g = Graph::new();
        let a = g.input(msgs.clone());
        let b = g.input(msgs);
        let b = g.gather_rows(b, perm)?;
        let ya = aggregate_lstm(&mut g, &store, a)?;
        let yb = aggregate_lstm(&mut g, &store, b)?;
        let gap = g.value(ya).data().iter().zip(g.value(yb).data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if gap > WITNESS_GAP {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Largest difference between exhaustive Janossy outputs over every
/// reordering of `N <= 5` messages; exact invariance means zero.
pub fn janossy_aggregator_gap(draws: usize) -> Result<f64> {
    let cfg = ModelConfig {
        hidden_dim: 8,
        aggregator: Aggregator::Lstm,
        janossy_k: 1,
        janossy_exhaustive: true,
        ..ModelConfig::default()
    };
    let mut worst: f64 = 0.0;
    for d in 0..draws as u64 {
        let mut store = ParamStore::<f64>::new(d);
        init_params(&mut store, Task::InsertionSort, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(d ^ 0x1a05);
        let big_n = 1 + d as usize % 5;
        let msgs: Tensor<f64> = random_tensor(vec![big_n, 8], &mut rng);
        let mut g = Graph::new();
        let base = g.input(msgs.clone());
        let reference = aggregate_janossy_exhaustive(&mut g, &store, base)?;
        let reference = g.value(reference).data().to_vec();
        for order in all_orderings(&(0..big_n).collect::<Vec<_>>()) {
            let x = g.input(msgs.clone());
            let x = g.gather_rows(x, order)?;
            let y = aggregate_janossy_exhaustive(&mut g, &store, x)?;
            for (p, q) in g.value(y).data().iter().zip(&reference) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest difference between full-model predictions with exhaustive
/// Janossy pooling on relabeled trajectories of `n <= 5` nodes.
pub fn janossy_model_gap(draws: usize) -> Result<f64> {
    let cfg = ModelConfig {
        janossy_k: 1,
        janossy_exhaustive: true,
        ..sym_cfg(Aggregator::Lstm)
    };
    let mut worst: f64 = 0.0;
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64 ^ 0x7a11);
        let task = Task::ALL[i % Task::ALL.len()];
        let n = 4 + i % 2;
        let t = generate(task, n, 500 + i as u64)?;
        let mut store = ParamStore::<f64>::new(i as u64);
        init_params(&mut store, task, &cfg);
        let perm = random_perm(n, &mut rng);
        worst = worst.max(equivariance_gap(&store, &cfg, &t, &perm)?);
    }
    Ok(worst)
}

/// Largest change in predictions when only the `pos` values are permuted;
/// a positive value shows the LSTM aggregator reads the `pos` order.
pub fn pos_order_sensitivity(draws: usize) -> Result<f64> {
    let cfg = sym_cfg(Aggregator::Lstm);
    let mut smallest = f64::INFINITY;
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64 ^ 0x9051);
        let n = 5;
        let t = generate(Task::InsertionSort, n, 900 + i as u64)?;
        let mut shuffled = t.clone();
        let mut perm = random_perm(n, &mut rng);
        while perm.iter().enumerate().all(|(a, &b)| a == b) {
            perm = random_perm(n, &mut rng);
        }
        let pos = t.inputs["pos"].data.clone();
        for u in 0..n {
            shuffled.inputs.get_mut("pos").expect("pos").data[u] = pos[perm[u]];
        }
        let mut store = ParamStore::<f64>::new(i as u64);
        init_params(&mut store, Task::InsertionSort, &cfg);
        // the pos encoder is zeroed so only the aggregation order differs
        for x in store.value_mut("enc.pos.w").expect("pos encoder").data_mut() {
            *x = 0.0;
        }
        let a = all_predictions(&store, &cfg, &t)?;
        let b = all_predictions(&store, &cfg, &shuffled)?;
        let gap = a
            .iter()
            .zip(&b)
            .flat_map(|((_, x), (_, y))| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        smallest = smallest.min(gap);
    }
    Ok(smallest)
}

/// Symmetry checks: equivariance of invariant aggregators, LSTM order
/// sensitivity, and exact invariance of exhaustive Janossy pooling.
pub fn perm_suite() -> Vec<Check> {
    let mut out = Vec::new();
    for agg in [Aggregator::Max, Aggregator::Sum, Aggregator::Mean] {
        let cfg = sym_cfg(agg);
        out.push(match relabel_gap(&cfg, 50, 100) {
            Ok(gap) => Check::at_most("perm", format!("{agg} equivariance, 50 relabelings (L-inf)"), gap, EQUIVARIANCE_TOL),
            Err(e) => failed(format!("{agg} equivariance"), e),
        });
    }
    out.push(match lstm_witness_count(100) {
        Ok(hits) => Check::at_least("perm", "lstm non-invariance witnesses out of 100 draws", hits as f64, 95.0)
            .with_detail(format!("orderings differ by > {WITNESS_GAP:e}")),
        Err(e) => failed("lstm non-invariance".into(), e),
    });
    out.push(match relabel_gap(&sym_cfg(Aggregator::Lstm), 20, 200) {
        Ok(gap) => Check::at_most("perm", "lstm equivariance when pos moves with nodes", gap, EQUIVARIANCE_TOL),
        Err(e) => failed("lstm relabel".into(), e),
    });
    out.push(match pos_order_sensitivity(20) {
        Ok(gap) => Check::at_least("perm", "lstm output changes with pos order (min over 20)", gap, WITNESS_GAP),
        Err(e) => failed("lstm pos order".into(), e),
    });
    out.push(match janossy_aggregator_gap(50) {
        Ok(gap) => Check::at_most("perm", "janossy exhaustive aggregator, every reordering of N<=5", gap, 0.0),
        Err(e) => failed("janossy aggregator".into(), e),
    });
    out.push(match janossy_model_gap(22) {
        Ok(gap) => Check::at_most("perm", "janossy exhaustive full model, relabelings n<=5", gap, 0.0),
        Err(e) => failed("janossy model".into(), e),
    });
    out
}

fn failed(name: String, e: crate::error::ModelError) -> Check {
    Check::at_most("perm", name, f64::INFINITY, 0.0).with_detail(format!("error: {e}"))
}

// ---------------------------------------------------------------- memory

/// Activations created by one processor step on a single trajectory of
/// `n` nodes with the given base and aggregator at hidden width 64.
pub fn step_activations(base: Base, aggregator: Aggregator, n: usize) -> Result<usize> {
    let cfg = ModelConfig {
        base,
        aggregator,
        ..ModelConfig::default()
    };
    let h = cfg.hidden_dim;
    let mut store = ParamStore::<f32>::new(0);
    init_params(&mut store, Task::InsertionSort, &cfg);
    let b = batch(&[generate(Task::InsertionSort, n, 0)?])?;
    let ctx = Ctx::new(&b)?;
    let mut g = Graph::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = g.input(random_tensor(vec![1, n, h], &mut rng));
    let e = g.input(random_tensor(vec![1, n, n, h], &mut rng));
    let gr = g.input(random_tensor(vec![1, h], &mut rng));
    let before = g.activation_count();
    process_step(&mut g, &store, &cfg, &ctx, x, e, gr, 0, 0)?;
    Ok(g.activation_count() - before)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabel_prediction_moves_rows_and_pointer_columns() {
        let spec = FeatureSpec::new("p", Stage::Output, Location::Node, Probe::Pointer);
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(relabel_prediction(&spec, &data, 2, &[1, 0]), vec![4.0, 3.0, 2.0, 1.0]);
        let spec = FeatureSpec::new("s", Stage::Output, Location::Node, Probe::Scalar);
        assert_eq!(relabel_prediction(&spec, &[1.0, 2.0, 3.0], 3, &[2, 0, 1]), vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn check_lines_show_verdict() {
        assert!(Check::at_most("grad", "x", 1e-7, 1e-5).line().starts_with("PASS"));
        assert!(Check::at_least("perm", "y", 90.0, 95.0).line().starts_with("FAIL"));
    }
}
