//! Encode, process, decode and loss over a padded batch.

use std::collections::BTreeMap;

use diffcore::{Graph, ParamStore, Real, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgen::{spec_of, Batch, FeatureSpec, Location, Probe, Stage};

use crate::config::{Aggregator, Base, ModelConfig};
use crate::error::{ModelError, Result};
use crate::layers::{
    aggregate_invariant, all_orderings, canonical_order, constant, deep_tail, janossy_rng, linear, lstm_input, lstm_sweep,
    message, sampled_orderings, triplet_readout, zeros, MASKED_LOGIT,
};
use crate::params::{encoder_width, encodes_on_edges};

/// How hint frames after the first are fed back into the processor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HintMode {
    /// Ground truth with probability `p` per (step, trajectory), else own predictions.
    TeacherForced(f64),
    /// Always the model's own hard predictions.
    SelfFeeding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: HintMode,
    /// Drives teacher-forcing coins and Janossy orderings.
    pub seed: u64,
}

impl RunOptions {
    pub fn eval() -> Self {
        Self {
            mode: HintMode::SelfFeeding,
            seed: 0,
        }
    }
}

/// Static facts about a batch used at every step.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub bsz: usize,
    pub n: usize,
    pub sizes: Vec<usize>,
    pub steps: Vec<usize>,
    pub node_valid: Vec<bool>,
    /// Valid nodes of each trajectory in ascending `pos`.
    pub pos_order: Vec<Vec<usize>>,
    pub all_valid: bool,
}

impl Ctx {
    pub fn new(batch: &Batch) -> Result<Self> {
        let (bsz, n) = (batch.len(), batch.n_max);
        let node_valid: Vec<bool> = batch.node_mask.iter().map(|&m| m != 0.0).collect();
        let pos = batch.inputs.get("pos").ok_or_else(|| ModelError::UnknownFeature("pos".into()))?;
        let pos_order = (0..bsz)
            .map(|b| {
                let p = &pos.data[b * n..(b + 1) * n];
                let mut o: Vec<usize> = (0..n).filter(|&v| node_valid[b * n + v]).collect();
                o.sort_by(|&a, &c| p[a].total_cmp(&p[c]).then(a.cmp(&c)));
                o
            })
            .collect();
        Ok(Self {
            bsz,
            n,
            sizes: batch.sizes.clone(),
            steps: batch.steps.clone(),
            all_valid: node_valid.iter().all(|&v| v),
            node_valid,
            pos_order,
        })
    }

    fn valid(&self, b: usize, u: usize) -> bool {
        self.node_valid[b * self.n + u]
    }

    /// `[B, n, n, ..]` mask over senders, repeated `width` times per entry.
    fn sender_mask(&self, width: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.bsz * self.n * self.n * width);
        for b in 0..self.bsz {
            for _ in 0..self.n {
                for v in 0..self.n {
                    let x = if self.valid(b, v) { 1.0 } else { 0.0 };
                    out.extend(std::iter::repeat_n(x, width));
                }
            }
        }
        out
    }
}

fn frame_len(spec: &FeatureSpec, n: usize) -> usize {
    spec.frame_shape(n).iter().product()
}

/// Frame `t` of a hint (or the single frame of an input/output), `[B, frame]`.
pub fn batch_frame(batch: &Batch, spec: &FeatureSpec, t: usize) -> Result<Vec<f64>> {
    let arr = batch
        .stage(spec.stage)
        .get(spec.name)
        .ok_or_else(|| ModelError::UnknownFeature(spec.name.to_string()))?;
    let len = frame_len(spec, batch.n_max);
    if spec.stage != Stage::Hint {
        return Ok(arr.data.clone());
    }
    let mut out = Vec::with_capacity(batch.len() * len);
    for b in 0..batch.len() {
        let off = (b * batch.t_max + t) * len;
        out.extend_from_slice(&arr.data[off..off + len]);
    }
    Ok(out)
}

/// Per-location embeddings of one set of features.
#[derive(Debug, Clone, Copy, Default)]
pub struct Encoded {
    pub node: Option<Var>,
    pub edge: Option<Var>,
    pub graph: Option<Var>,
}

fn sum_opt<R: Real>(g: &mut Graph<R>, a: Option<Var>, b: Option<Var>) -> Result<Option<Var>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(g.add(a, b)?),
        (a, None) => a,
        (None, b) => b,
    })
}

/// Linear encoders of `feats` (one per feature, summed per location).
/// Pointers become one-hot edges. With `use_pos = false`, `pos` is zeroed.
pub fn encode<R: Real>(
    g: &mut Graph<R>,
    store: &ParamStore<R>,
    cfg: &ModelConfig,
    ctx: &Ctx,
    feats: &[(FeatureSpec, Vec<f64>)],
) -> Result<Encoded> {
    let (bsz, n) = (ctx.bsz, ctx.n);
    let mut out = Encoded::default();
    for loc in [Location::Node, Location::Edge, Location::Graph] {
        let members: Vec<&(FeatureSpec, Vec<f64>)> = feats
            .iter()
            .filter(|(s, _)| match loc {
                Location::Edge => encodes_on_edges(s),
                _ => s.location == loc && !encodes_on_edges(s),
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        let items = match loc {
            Location::Node => bsz * n,
            Location::Edge => bsz * n * n,
            Location::Graph => bsz,
        };
        let width: usize = members.iter().map(|(s, _)| encoder_width(s)).sum();
        let mut x = vec![0.0; items * width];
        let mut off = 0;
        for (spec, data) in &members {
            let c = encoder_width(spec);
            let zeroed = spec.name == "pos" && !cfg.use_pos;
            if spec.probe == Probe::Pointer {
                for b in 0..bsz {
                    for u in (0..n).filter(|&u| ctx.valid(b, u)) {
                        let p = data[b * n + u] as usize;
                        x[((b * n + u) * n + p) * width + off] = 1.0;
                    }
                }
            } else if !zeroed {
                if data.len() != items * c {
                    return Err(ModelError::Invalid {
                        op: "encode",
                        msg: format!("feature `{}` has {} values, expected {}", spec.name, data.len(), items * c),
                    });
                }
                for i in 0..items {
                    x[i * width + off..i * width + off + c].copy_from_slice(&data[i * c..(i + 1) * c]);
                }
            }
            off += c;
        }
        let mut shape = match loc {
            Location::Node => vec![bsz, n],
            Location::Edge => vec![bsz, n, n],
            Location::Graph => vec![bsz],
        };
        shape.push(width);
        let xv = constant(g, shape, &x)?;
        let mut ws = Vec::with_capacity(members.len());
        let mut bias = None;
        for (spec, _) in &members {
            ws.push(g.param(store, &format!("enc.{}.w", spec.name))?);
            let b = g.param(store, &format!("enc.{}.b", spec.name))?;
            bias = sum_opt(g, bias, Some(b))?;
        }
        let w = if ws.len() == 1 { ws[0] } else { g.concat(&ws, 0)? };
        let y = g.matmul(xv, w)?;
        let y = g.add(y, bias.expect("non-empty"))?;
        match loc {
            Location::Node => out.node = Some(y),
            Location::Edge => out.edge = Some(y),
            Location::Graph => out.graph = Some(y),
        }
    }
    Ok(out)
}

/// Aggregates `msgs: [B, n, n, m]` over senders into `[B, n, m]`.
fn aggregate<R: Real>(
    g: &mut Graph<R>,
    store: &ParamStore<R>,
    cfg: &ModelConfig,
    ctx: &Ctx,
    msgs: Var,
    step: usize,
    seed: u64,
) -> Result<Var> {
    let (bsz, n) = (ctx.bsz, ctx.n);
    let m = *g.shape(msgs).last().expect("rank 4");
    let rows = bsz * n;
    if cfg.aggregator != Aggregator::Lstm {
        let flat = g.reshape(msgs, vec![rows, n, m])?;
        let valid: Vec<bool> = (0..rows).flat_map(|r| (0..n).map(move |v| (r / n, v))).map(|(b, v)| ctx.valid(b, v)).collect();
        let agg = aggregate_invariant(g, cfg.aggregator, flat, &valid)?;
        return Ok(g.reshape(agg, vec![bsz, n, m])?);
    }
    let xp = lstm_input(g, store, msgs)?;
    let mut orders: Vec<Vec<usize>> = Vec::new();
    let mut lens = Vec::new();
    let copies;
    if cfg.janossy_k == 0 {
        copies = 1;
        for r in 0..rows {
            let b = r / n;
            orders.push(ctx.pos_order[b].iter().map(|&v| r * n + v).collect());
            lens.push(ctx.sizes[b]);
        }
    } else if cfg.janossy_exhaustive {
        if ctx.sizes.iter().any(|&s| s != ctx.sizes[0]) {
            return Err(ModelError::Invalid {
                op: "aggregate_janossy",
                msg: "exhaustive mode needs equally sized trajectories".into(),
            });
        }
        let values = g.value(msgs).data().to_vec();
        let per_row: Vec<Vec<Vec<usize>>> = (0..rows)
            .map(|r| {
                let b = r / n;
                let senders: Vec<usize> = ctx.pos_order[b].iter().map(|&v| r * n + v).collect();
                all_orderings(&canonical_order(&values, &senders, m))
            })
            .collect();
        copies = per_row[0].len();
        for j in 0..copies {
            for (r, o) in per_row.iter().enumerate() {
                orders.push(o[j].clone());
                lens.push(ctx.sizes[r / n]);
            }
        }
    } else {
        copies = cfg.janossy_k;
        let per_row: Vec<Vec<Vec<usize>>> = (0..rows)
            .map(|r| {
                let senders: Vec<usize> = ctx.pos_order[r / n].iter().map(|&v| r * n + v).collect();
                sampled_orderings(&senders, copies, &mut janossy_rng(seed, step, r))
            })
            .collect();
        for j in 0..copies {
            for (r, o) in per_row.iter().enumerate() {
                orders.push(o[j].clone());
                lens.push(ctx.sizes[r / n]);
            }
        }
    }
    let h = lstm_sweep(g, store, xp, &orders, &lens)?;
    let h = if copies > 1 {
        let h = g.reshape(h, vec![copies, rows, m])?;
        g.mean_axis(h, 0)?
    } else {
        h
    };
    Ok(g.reshape(h, vec![bsz, n, m])?)
}

/// One processor step: messages over the fully connected graph (self-loops
/// included), aggregation, update, and for `triplet_gmpnn` a triplet edge
/// update and a gated residual.
#[allow(clippy::too_many_arguments)]
pub fn process_step<R: Real>(
    g: &mut Graph<R>,
    store: &ParamStore<R>,
    cfg: &ModelConfig,
    ctx: &Ctx,
    x: Var,
    e: Var,
    graph: Var,
    step: usize,
    seed: u64,
) -> Result<Var> {
    let mut e = e;
    if cfg.base == Base::TripletGmpnn {
        let upd = triplet_readout(g, store, x, e, graph, &ctx.node_valid)?;
        e = g.add(e, upd)?;
    }
    let msgs = message(g, store, x, e, graph, cfg.msg_layers)?;
    let agg = aggregate(g, store, cfg, ctx, msgs, step, seed)?;
    let z = g.concat(&[x, agg], 2)?;
    let cand = linear(g, store, z, "upd")?;
    let cand = g.relu(cand)?;
    let cand = deep_tail(g, store, cand, "upd", cfg.update_layers)?;
    if cfg.base == Base::Mpnn {
        return Ok(cand);
    }
    let gate = linear(g, store, z, "gate")?;
    let gate = g.sigmoid(gate)?;
    let delta = g.sub(cand, x)?;
    let delta = g.mul(gate, delta)?;
    Ok(g.add(x, delta)?)
}

fn node_mask_var<R: Real>(g: &mut Graph<R>, ctx: &Ctx, trailing: &[usize]) -> Result<Var> {
    let width: usize = trailing.iter().product();
    let data: Vec<f64> = ctx
        .node_valid
        .iter()
        .flat_map(|&v| std::iter::repeat_n(if v { 1.0 } else { 0.0 }, width))
        .collect();
    let mut shape = vec![ctx.bsz, ctx.n];
    shape.extend_from_slice(trailing);
    constant(g, shape, &data)
}

fn mask_nodes<R: Real>(g: &mut Graph<R>, ctx: &Ctx, x: Var, trailing: &[usize]) -> Result<Var> {
    if ctx.all_valid {
        return Ok(x);
    }
    let mask = node_mask_var(g, ctx, trailing)?;
    let shape = g.shape(x).to_vec();
    let fill = constant(g, shape.clone(), &vec![MASKED_LOGIT; shape.iter().product()])?;
    Ok(g.select(mask, x, fill)?)
}

/// Raw decoder output of one feature from node states `x: [B, n, h]`:
/// values for scalars, logits otherwise (padded candidates at -1e9).
pub fn decode<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, ctx: &Ctx, spec: &FeatureSpec, x: Var) -> Result<Var> {
    let (bsz, n) = (ctx.bsz, ctx.n);
    let h = g.shape(x)[2];
    let p = format!("dec.{}", spec.name);
    if spec.probe == Probe::Pointer {
        let src = linear(g, store, x, &format!("{p}.src"))?;
        let dst = linear(g, store, x, &format!("{p}.dst"))?;
        let dst = g.permute(dst, vec![0, 2, 1])?;
        let s = g.matmul(src, dst)?;
        let s = g.scale(s, 1.0 / (h as f64).sqrt())?;
        if ctx.all_valid {
            return Ok(s);
        }
        let mask = constant(g, vec![bsz, n, n], &ctx.sender_mask(1))?;
        let fill = constant(g, vec![bsz, n, n], &vec![MASKED_LOGIT; bsz * n * n])?;
        return Ok(g.select(mask, s, fill)?);
    }
    let out = match spec.probe {
        Probe::Categorical(c) => c,
        _ => 1,
    };
    match spec.location {
        Location::Graph => {
            let pooled = mask_nodes(g, ctx, x, &[h])?;
            let pooled = g.max_axis(pooled, 1)?;
            let y = linear(g, store, pooled, &p)?;
            Ok(if out == 1 { g.reshape(y, vec![bsz])? } else { y })
        }
        _ => {
            let y = linear(g, store, x, &p)?;
            match spec.probe {
                Probe::Categorical(_) => Ok(y),
                Probe::MaskOne => {
                    let y = g.reshape(y, vec![bsz, n])?;
                    mask_nodes(g, ctx, y, &[])
                }
                _ => Ok(g.reshape(y, vec![bsz, n])?),
            }
        }
    }
}

/// Sum of per-element losses of one feature and the number of supervised
/// elements. `weight[b]` switches trajectory `b` on or off.
pub fn feature_loss<R: Real>(
    g: &mut Graph<R>,
    ctx: &Ctx,
    spec: &FeatureSpec,
    pred: Var,
    target: &[f64],
    weight: &[f64],
) -> Result<(Var, f64)> {
    let (bsz, n) = (ctx.bsz, ctx.n);
    let graph_level = spec.location == Location::Graph;
    let items = if graph_level { 1 } else { n };
    // per (b, item) weights
    let w: Vec<f64> = (0..bsz)
        .flat_map(|b| (0..items).map(move |u| (b, u)))
        .map(|(b, u)| if graph_level || ctx.valid(b, u) { weight[b] } else { 0.0 })
        .collect();
    let count: f64 = match spec.probe {
        Probe::MaskOne => weight.iter().sum(),
        _ => w.iter().sum(),
    };
    let item_shape = if graph_level { vec![bsz] } else { vec![bsz, n] };
    let nll = |g: &mut Graph<R>, logp: Var, t: Vec<f64>| -> Result<Var> {
        let shape = g.shape(logp).to_vec();
        let t = constant(g, shape, &t)?;
        let prod = g.mul(logp, t)?;
        let s = g.sum_all(prod)?;
        Ok(g.scale(s, -1.0)?)
    };
    let loss = match spec.probe {
        Probe::Scalar => {
            let t = constant(g, item_shape.clone(), target)?;
            let d = g.sub(pred, t)?;
            let sq = g.square(d)?;
            let wv = constant(g, item_shape, &w)?;
            let s = g.mul(sq, wv)?;
            g.sum_all(s)?
        }
        Probe::Mask => {
            let mut col = item_shape.clone();
            col.push(1);
            let z = g.reshape(pred, col.clone())?;
            let zero = zeros(g, col);
            let pair = g.concat(&[zero, z], item_shape.len())?;
            let lp = g.log_softmax(pair, item_shape.len())?;
            let t: Vec<f64> = target.iter().zip(&w).flat_map(|(&y, &wi)| [wi * (1.0 - y), wi * y]).collect();
            nll(g, lp, t)?
        }
        Probe::MaskOne => {
            let lp = g.log_softmax(pred, 1)?;
            let t: Vec<f64> = (0..bsz * n).map(|i| target[i] * weight[i / n]).collect();
            nll(g, lp, t)?
        }
        Probe::Pointer => {
            let lp = g.log_softmax(pred, 2)?;
            let mut t = vec![0.0; bsz * n * n];
            for (i, &wi) in w.iter().enumerate() {
                if wi != 0.0 {
                    t[i * n + target[i] as usize] = wi;
                }
            }
            nll(g, lp, t)?
        }
        Probe::Categorical(c) => {
            let axis = g.shape(pred).len() - 1;
            let lp = g.log_softmax(pred, axis)?;
            let t: Vec<f64> = (0..w.len() * c).map(|i| target[i] * w[i / c]).collect();
            nll(g, lp, t)?
        }
    };
    Ok((loss, count))
}

/// Hard decision from a decoder output, in the batch frame layout.
pub fn hard_prediction<R: Real>(g: &Graph<R>, ctx: &Ctx, spec: &FeatureSpec, pred: Var) -> Vec<f64> {
    let v = g.value(pred).to_f64_vec();
    let (bsz, n) = (ctx.bsz, ctx.n);
    let argmax = |xs: &[f64], ok: &dyn Fn(usize) -> bool| {
        let mut best = None;
        for (i, &x) in xs.iter().enumerate() {
            if ok(i) && best.is_none_or(|(_, bx)| x > bx) {
                best = Some((i, x));
            }
        }
        best.map_or(0, |(i, _)| i)
    };
    match spec.probe {
        Probe::Scalar => v,
        Probe::Mask => v.iter().map(|&z| if z > 0.0 { 1.0 } else { 0.0 }).collect(),
        Probe::MaskOne => {
            let mut out = vec![0.0; bsz * n];
            for b in 0..bsz {
                let j = argmax(&v[b * n..(b + 1) * n], &|u| ctx.valid(b, u));
                out[b * n + j] = 1.0;
            }
            out
        }
        Probe::Pointer => {
            let mut out = vec![0.0; bsz * n];
            for b in 0..bsz {
                for u in 0..n {
                    let row = &v[(b * n + u) * n..(b * n + u + 1) * n];
                    out[b * n + u] = if ctx.valid(b, u) { argmax(row, &|w| ctx.valid(b, w)) as f64 } else { u as f64 };
                }
            }
            out
        }
        Probe::Categorical(c) => {
            let mut out = vec![0.0; v.len()];
            for (r, row) in v.chunks(c).enumerate() {
                out[r * c + argmax(row, &|_| true)] = 1.0;
            }
            out
        }
    }
}

fn decode_and_score<R: Real>(
    g: &mut Graph<R>,
    store: &ParamStore<R>,
    ctx: &Ctx,
    spec: &FeatureSpec,
    x: Var,
    target: &[f64],
    weight: &[f64],
) -> Result<(Var, Var, f64)> {
    let pred = decode(g, store, ctx, spec, x)?;
    let (l, c) = feature_loss(g, ctx, spec, pred, target, weight)?;
    Ok((pred, l, c))
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Decoder outputs of the output features after each trajectory's last step.
    pub outputs: BTreeMap<String, Var>,
    /// `hints[t]` predicts hint frame `t + 1`.
    pub hints: Vec<BTreeMap<String, Var>>,
    /// Node embeddings fed to the processor at each step.
    pub step_inputs: Vec<Var>,
    /// Mean loss of every supervised feature.
    pub feature_losses: BTreeMap<String, Var>,
    /// Mean of `feature_losses`.
    pub loss: Var,
    pub process_steps: usize,
}

/// Runs the model over a batch for `T_max` steps; trajectory `b` freezes its
/// state after its own `T_b` steps, and outputs are decoded from there.
pub fn run_model<R: Real>(
    g: &mut Graph<R>,
    store: &ParamStore<R>,
    cfg: &ModelConfig,
    batch: &Batch,
    opts: &RunOptions,
) -> Result<Forward> {
    cfg.validate()?;
    let ctx = Ctx::new(batch)?;
    let specs = spec_of(batch.task);
    let (bsz, n, h) = (ctx.bsz, ctx.n, cfg.hidden_dim);
    let inputs: Vec<(FeatureSpec, Vec<f64>)> = specs
        .iter()
        .filter(|s| s.stage == Stage::Input)
        .map(|s| Ok((*s, batch_frame(batch, s, 0)?)))
        .collect::<Result<_>>()?;
    let hint_specs: Vec<FeatureSpec> = specs.iter().copied().filter(|s| s.stage == Stage::Hint).collect();
    let enc_in = encode(g, store, cfg, &ctx, &inputs)?;

    let t_max = batch.t_max;
    let mut coin = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7465_6163_6865_7200);
    let mut frames: Vec<(FeatureSpec, Vec<f64>)> =
        hint_specs.iter().map(|s| Ok((*s, batch_frame(batch, s, 0)?))).collect::<Result<_>>()?;
    let mut carry = zeros(g, vec![bsz, n, h]);
    let mut hint_preds = Vec::new();
    let mut step_inputs = Vec::new();
    let mut hint_sums: BTreeMap<&str, (Option<Var>, f64)> = BTreeMap::new();

    for t in 0..t_max {
        let enc_h = encode(g, store, cfg, &ctx, &frames)?;
        let node = sum_opt(g, enc_in.node, enc_h.node)?.expect("pos is always encoded");
        let x = g.add(node, carry)?;
        let e = match sum_opt(g, enc_in.edge, enc_h.edge)? {
            Some(e) => e,
            None => zeros(g, vec![bsz, n, n, h]),
        };
        let gr = match sum_opt(g, enc_in.graph, enc_h.graph)? {
            Some(v) => v,
            None => zeros(g, vec![bsz, h]),
        };
        step_inputs.push(x);
        let next = process_step(g, store, cfg, &ctx, x, e, gr, t, opts.seed).map_err(ModelError::at("processor", t))?;
        carry = if ctx.steps.iter().all(|&s| t < s) {
            next
        } else {
            let active: Vec<f64> = (0..bsz)
                .flat_map(|b| std::iter::repeat_n(if t < ctx.steps[b] { 1.0 } else { 0.0 }, n * h))
                .collect();
            let mask = constant(g, vec![bsz, n, h], &active)?;
            g.select(mask, next, carry)?
        };
        if t + 1 >= t_max {
            break;
        }
        let weight: Vec<f64> = (0..bsz).map(|b| if t + 1 < ctx.steps[b] { 1.0 } else { 0.0 }).collect();
        let mut preds = BTreeMap::new();
        let mut next_frames = Vec::with_capacity(hint_specs.len());
        let forced: Vec<bool> = (0..bsz)
            .map(|_| match opts.mode {
                HintMode::TeacherForced(p) => coin.gen::<f64>() < p,
                HintMode::SelfFeeding => false,
            })
            .collect();
        for spec in &hint_specs {
            let target = batch_frame(batch, spec, t + 1)?;
            let (pred, l, c) = decode_and_score(g, store, &ctx, spec, next, &target, &weight).map_err(ModelError::at(spec.name, t))?;
            let entry = hint_sums.entry(spec.name).or_insert((None, 0.0));
            entry.0 = sum_opt(g, entry.0, Some(l))?;
            entry.1 += c;
            let hard = hard_prediction(g, &ctx, spec, pred);
            let len = frame_len(spec, n);
            let mixed: Vec<f64> = (0..bsz)
                .flat_map(|b| {
                    let src = if forced[b] { &target } else { &hard };
                    src[b * len..(b + 1) * len].to_vec()
                })
                .collect();
            next_frames.push((*spec, mixed));
            preds.insert(spec.name.to_string(), pred);
        }
        hint_preds.push(preds);
        frames = next_frames;
    }

    let mut feature_losses = BTreeMap::new();
    for (name, (sum, count)) in hint_sums {
        if let (Some(s), true) = (sum, count > 0.0) {
            feature_losses.insert(name.to_string(), g.scale(s, 1.0 / count)?);
        }
    }
    let mut outputs = BTreeMap::new();
    let all_on = vec![1.0; bsz];
    for spec in specs.iter().filter(|s| s.stage == Stage::Output) {
        let target = batch_frame(batch, spec, 0)?;
        let (pred, l, c) = decode_and_score(g, store, &ctx, spec, carry, &target, &all_on).map_err(ModelError::at(spec.name, t_max))?;
        feature_losses.insert(spec.name.to_string(), g.scale(l, 1.0 / c.max(1.0))?);
        outputs.insert(spec.name.to_string(), pred);
    }
    let mut total = None;
    for &l in feature_losses.values() {
        total = sum_opt(g, total, Some(l))?;
    }
    let loss = g.scale(total.expect("every task has an output"), 1.0 / feature_losses.len() as f64)?;
    Ok(Forward {
        outputs,
        hints: hint_preds,
        step_inputs,
        feature_losses,
        loss,
        process_steps: t_max,
    })
}

/// Hard output predictions of a forward pass, keyed by feature name.
pub fn predicted_outputs<R: Real>(g: &Graph<R>, batch: &Batch, fwd: &Forward) -> Result<BTreeMap<String, Vec<f64>>> {
    let ctx = Ctx::new(batch)?;
    let mut out = BTreeMap::new();
    for spec in spec_of(batch.task).iter().filter(|s| s.stage == Stage::Output) {
        out.insert(spec.name.to_string(), hard_prediction(g, &ctx, spec, fwd.outputs[spec.name]));
    }
    Ok(out)
}

/// Self-feeding hard output predictions without keeping the unrolled graph:
/// each step is recorded on a fresh graph and only the node state is carried.
/// Agrees exactly with `run_model` in `SelfFeeding` mode.
pub fn infer<R: Real>(store: &ParamStore<R>, cfg: &ModelConfig, batch: &Batch) -> Result<BTreeMap<String, Vec<f64>>> {
    cfg.validate()?;
    let ctx = Ctx::new(batch)?;
    let specs = spec_of(batch.task);
    let (bsz, n, h) = (ctx.bsz, ctx.n, cfg.hidden_dim);
    let inputs: Vec<(FeatureSpec, Vec<f64>)> = specs
        .iter()
        .filter(|s| s.stage == Stage::Input)
        .map(|s| Ok((*s, batch_frame(batch, s, 0)?)))
        .collect::<Result<_>>()?;
    let hint_specs: Vec<FeatureSpec> = specs.iter().copied().filter(|s| s.stage == Stage::Hint).collect();
    let mut frames: Vec<(FeatureSpec, Vec<f64>)> =
        hint_specs.iter().map(|s| Ok((*s, batch_frame(batch, s, 0)?))).collect::<Result<_>>()?;
    let mut carry: Tensor<R> = Tensor::zeros(vec![bsz, n, h]);
    for t in 0..batch.t_max {
        let mut g = Graph::new();
        let enc_in = encode(&mut g, store, cfg, &ctx, &inputs)?;
        let enc_h = encode(&mut g, store, cfg, &ctx, &frames)?;
        let node = sum_opt(&mut g, enc_in.node, enc_h.node)?.expect("pos is always encoded");
        let prev = g.input(carry);
        let x = g.add(node, prev)?;
        let e = match sum_opt(&mut g, enc_in.edge, enc_h.edge)? {
            Some(e) => e,
            None => zeros(&mut g, vec![bsz, n, n, h]),
        };
        let gr = match sum_opt(&mut g, enc_in.graph, enc_h.graph)? {
            Some(v) => v,
            None => zeros(&mut g, vec![bsz, h]),
        };
        let next = process_step(&mut g, store, cfg, &ctx, x, e, gr, t, 0).map_err(ModelError::at("processor", t))?;
        let state = if ctx.steps.iter().all(|&s| t < s) {
            next
        } else {
            let active: Vec<f64> = (0..bsz)
                .flat_map(|b| std::iter::repeat_n(if t < ctx.steps[b] { 1.0 } else { 0.0 }, n * h))
                .collect();
            let mask = constant(&mut g, vec![bsz, n, h], &active)?;
            g.select(mask, next, prev)?
        };
        if t + 1 >= batch.t_max {
            let mut out = BTreeMap::new();
            for spec in specs.iter().filter(|s| s.stage == Stage::Output) {
                let pred = decode(&mut g, store, &ctx, spec, state).map_err(ModelError::at(spec.name, t))?;
                out.insert(spec.name.to_string(), hard_prediction(&g, &ctx, spec, pred));
            }
            return Ok(out);
        }
        let mut next_frames = Vec::with_capacity(hint_specs.len());
        for spec in &hint_specs {
            let pred = decode(&mut g, store, &ctx, spec, next).map_err(ModelError::at(spec.name, t))?;
            next_frames.push((*spec, hard_prediction(&g, &ctx, spec, pred)));
        }
        frames = next_frames;
        carry = g.value(state).clone();
    }
    Err(ModelError::Invalid {
        op: "infer",
        msg: "batch has no steps".into(),
    })
}
