//! Differentiable building blocks: linear maps, the message function,
//! invariant and recurrent aggregators, and the triplet edge readout.

use diffcore::{Graph, ParamStore, Real, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Aggregator;
use crate::error::{ModelError, Result};

/// Logit assigned to padded candidates before a softmax or max.
pub const MASKED_LOGIT: f64 = -1e9;

pub(crate) fn constant<R: Real>(g: &mut Graph<R>, shape: Vec<usize>, data: &[f64]) -> Result<Var> {
    Ok(g.input(Tensor::from_f64(shape, data)?))
}

pub(crate) fn zeros<R: Real>(g: &mut Graph<R>, shape: Vec<usize>) -> Var {
    g.input(Tensor::zeros(shape))
}

/// `x @ {prefix}.w + {prefix}.b`.
pub fn linear<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, x: Var, prefix: &str) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    Ok(g.add(y, b)?)
}

/// `x @ {prefix}.w` without bias.
pub fn project<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, x: Var, prefix: &str) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    Ok(g.matmul(x, w)?)
}

/// Extra `relu(linear)` layers `{prefix}.l1`, `{prefix}.l2`, ...
pub(crate) fn deep_tail<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, mut x: Var, prefix: &str, layers: usize) -> Result<Var> {
    for l in 1..layers {
        let y = linear(g, store, x, &format!("{prefix}.l{l}"))?;
        x = g.relu(y)?;
    }
    Ok(x)
}

/// Batched message function for every (receiver u, sender v) pair:
/// `relu(x_u W_recv + x_v W_send + e_uv W_edge + g W_graph + b)`.
///
/// `x: [B, n, h]`, `e: [B, n, n, h]`, `graph: [B, h]`; returns `[B, n, n, m]`.
pub fn message<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, x: Var, e: Var, graph: Var, layers: usize) -> Result<Var> {
    let n = g.shape(x)[1];
    let recv = project(g, store, x, "msg.recv")?;
    let send = project(g, store, x, "msg.send")?;
    let gp = project(g, store, graph, "msg.graph")?;
    let gp = g.repeat(gp, 1, n)?;
    let bias = g.param(store, "msg.b")?;
    let recv = g.add(recv, gp)?;
    let recv = g.add(recv, bias)?;
    let recv = g.repeat(recv, 2, n)?;
    let send = g.repeat(send, 1, n)?;
    let edge = project(g, store, e, "msg.edge")?;
    let s = g.add(recv, send)?;
    let s = g.add(s, edge)?;
    let m = g.relu(s)?;
    deep_tail(g, store, m, "msg", layers)
}

/// Expands a `[rows, len]` validity pattern to a `[rows, len, width]` 0/1 tensor.
fn expand_mask(valid: &[bool], width: usize) -> Vec<f64> {
    valid
        .iter()
        .flat_map(|&v| std::iter::repeat_n(if v { 1.0 } else { 0.0 }, width))
        .collect()
}

/// Elementwise reduction of `msgs: [R, N, m]` over valid senders only.
/// `valid` has `R * N` entries; every receiver needs at least one.
pub fn aggregate_invariant<R: Real>(g: &mut Graph<R>, kind: Aggregator, msgs: Var, valid: &[bool]) -> Result<Var> {
    let shape = g.shape(msgs).to_vec();
    let [rows, len, width] = shape[..] else {
        return Err(ModelError::Invalid {
            op: "aggregate_invariant",
            msg: format!("messages must be [R, N, m], got {shape:?}"),
        });
    };
    if valid.len() != rows * len {
        return Err(ModelError::Invalid {
            op: "aggregate_invariant",
            msg: format!("mask has {} entries for {rows}x{len} messages", valid.len()),
        });
    }
    let counts: Vec<usize> = valid.chunks(len.max(1)).map(|c| c.iter().filter(|&&v| v).count()).collect();
    if len == 0 || counts.contains(&0) {
        return Err(ModelError::Invalid {
            op: "aggregate_invariant",
            msg: "receiver without valid messages".into(),
        });
    }
    let all_valid = valid.iter().all(|&v| v);
    let masked = |g: &mut Graph<R>, fill: f64| -> Result<Var> {
        if all_valid {
            return Ok(msgs);
        }
        let mask = constant(g, shape.clone(), &expand_mask(valid, width))?;
        let other = constant(g, shape.clone(), &vec![fill; rows * len * width])?;
        Ok(g.select(mask, msgs, other)?)
    };
    match kind {
        Aggregator::Max => {
            let m = masked(g, MASKED_LOGIT)?;
            Ok(g.max_axis(m, 1)?)
        }
        Aggregator::Sum => {
            let m = masked(g, 0.0)?;
            Ok(g.sum_axis(m, 1)?)
        }
        Aggregator::Mean => {
            if all_valid {
                return Ok(g.mean_axis(msgs, 1)?);
            }
            let m = masked(g, 0.0)?;
            let s = g.sum_axis(m, 1)?;
            let inv: Vec<f64> = counts.iter().flat_map(|&c| std::iter::repeat_n(1.0 / c as f64, width)).collect();
            let inv = constant(g, vec![rows, width], &inv)?;
            Ok(g.mul(s, inv)?)
        }
        Aggregator::Lstm => Err(ModelError::Invalid {
            op: "aggregate_invariant",
            msg: "lstm is not an invariant aggregator".into(),
        }),
    }
}

/// Runs the aggregator LSTM over gathered rows of the input projection.
///
/// `xproj: [rows_total, 4m]` already contains `msg W_x + b`. Receiver `r`
/// reads `orders[r][s]` at step `s` for `s < lens[r]` and holds its state
/// afterwards. State starts at zero; returns the hidden state `[R, m]`.
pub fn lstm_sweep<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, xproj: Var, orders: &[Vec<usize>], lens: &[usize]) -> Result<Var> {
    let rows = orders.len();
    let four_m = g.shape(xproj)[1];
    let m = four_m / 4;
    if rows == 0 || lens.contains(&0) {
        return Err(ModelError::Invalid {
            op: "aggregate_lstm",
            msg: "empty message list".into(),
        });
    }
    let steps = lens.iter().copied().max().unwrap_or(0);
    let wh = g.param(store, "lstm.wh")?;
    let mut state: Option<(Var, Var)> = None;
    for s in 0..steps {
        let idx: Vec<usize> = orders.iter().zip(lens).map(|(o, &l)| o[s.min(l - 1)]).collect();
        let mut gates = g.gather_rows(xproj, idx)?;
        if let Some((h, _)) = state {
            let rec = g.matmul(h, wh)?;
            gates = g.add(gates, rec)?;
        }
        let i = g.slice(gates, 1, 0, m)?;
        let f = g.slice(gates, 1, m, 2 * m)?;
        let c_in = g.slice(gates, 1, 2 * m, 3 * m)?;
        let o = g.slice(gates, 1, 3 * m, 4 * m)?;
        let i = g.sigmoid(i)?;
        let o = g.sigmoid(o)?;
        let c_in = g.tanh(c_in)?;
        let ic = g.mul(i, c_in)?;
        let c = match state {
            Some((_, c_prev)) => {
                let f = g.sigmoid(f)?;
                let fc = g.mul(f, c_prev)?;
                g.add(fc, ic)?
            }
            None => ic,
        };
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        state = Some(match state {
            Some((h_prev, c_prev)) if lens.iter().any(|&l| l <= s) => {
                let active: Vec<bool> = lens.iter().map(|&l| s < l).collect();
                let mask = constant(g, vec![rows, m], &expand_mask(&active, m))?;
                (g.select(mask, h, h_prev)?, g.select(mask, c, c_prev)?)
            }
            _ => (h, c),
        });
    }
    Ok(state.expect("at least one step").0)
}

/// Input projection `msgs W_x + b` flattened to rows of width `4m`.
pub fn lstm_input<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, msgs: Var) -> Result<Var> {
    let p = linear(g, store, msgs, "lstm.x")?;
    let shape = g.shape(p).to_vec();
    let width = *shape.last().expect("rank >= 1");
    let rows = shape.iter().product::<usize>() / width;
    Ok(g.reshape(p, vec![rows, width])?)
}

/// LSTM over an ordered list `msgs: [N, m]`; returns the final hidden state `[m]`.
pub fn aggregate_lstm<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, msgs: Var) -> Result<Var> {
    let n = g.shape(msgs)[0];
    if n == 0 {
        return Err(ModelError::Invalid {
            op: "aggregate_lstm",
            msg: "empty message list".into(),
        });
    }
    let xp = lstm_input(g, store, msgs)?;
    let h = lstm_sweep(g, store, xp, &[(0..n).collect()], &[n])?;
    let m = g.shape(h)[1];
    Ok(g.reshape(h, vec![m])?)
}

/// Lexicographic order of message rows by value; equal rows are interchangeable.
pub fn canonical_order<R: Real>(values: &[R], rows: &[usize], width: usize) -> Vec<usize> {
    let mut out = rows.to_vec();
    out.sort_by(|&a, &b| {
        let (ra, rb) = (&values[a * width..(a + 1) * width], &values[b * width..(b + 1) * width]);
        ra.iter()
            .zip(rb)
            .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// All orderings of `items` in lexicographic order of positions.
pub fn all_orderings(items: &[usize]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut out = vec![idx.iter().map(|&i| items[i]).collect::<Vec<_>>()];
    // next lexicographic permutation of positions
    loop {
        let Some(k) = (1..idx.len()).rev().find(|&k| idx[k - 1] < idx[k]).map(|k| k - 1) else {
            return out;
        };
        let l = (k + 1..idx.len()).rev().find(|&l| idx[k] < idx[l]).expect("successor exists");
        idx.swap(k, l);
        idx[k + 1..].reverse();
        out.push(idx.iter().map(|&i| items[i]).collect());
    }
}

/// `k` orderings of `items`, each an independent uniform shuffle.
pub fn sampled_orderings(items: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    (0..k)
        .map(|_| {
            let mut o = items.to_vec();
            o.shuffle(rng);
            o
        })
        .collect()
}

/// Mean of the aggregator LSTM over `k` sampled orderings of `msgs: [N, m]`.
pub fn aggregate_janossy<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, msgs: Var, k: usize, rng: &mut ChaCha8Rng) -> Result<Var> {
    if k == 0 {
        return Err(ModelError::Invalid {
            op: "aggregate_janossy",
            msg: "k = 0; use the canonical ordering instead".into(),
        });
    }
    let n = g.shape(msgs)[0];
    let items: Vec<usize> = (0..n).collect();
    janossy_over(g, store, msgs, sampled_orderings(&items, k, rng))
}

/// Mean over every ordering of the messages, after sorting them by value so
/// the result is bit-identical for any input order. Intended for `N <= 5`.
pub fn aggregate_janossy_exhaustive<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, msgs: Var) -> Result<Var> {
    let shape = g.shape(msgs).to_vec();
    let items = canonical_order(g.value(msgs).data(), &(0..shape[0]).collect::<Vec<_>>(), shape[1]);
    janossy_over(g, store, msgs, all_orderings(&items))
}

fn janossy_over<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, msgs: Var, orders: Vec<Vec<usize>>) -> Result<Var> {
    let n = g.shape(msgs)[0];
    if n == 0 {
        return Err(ModelError::Invalid {
            op: "aggregate_janossy",
            msg: "empty message list".into(),
        });
    }
    let xp = lstm_input(g, store, msgs)?;
    let lens = vec![n; orders.len()];
    let h = lstm_sweep(g, store, xp, &orders, &lens)?;
    Ok(g.mean_axis(h, 0)?)
}

/// Per-(step, node) generator for Janossy orderings.
pub fn janossy_rng(seed: u64, step: usize, node: usize) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .rotate_left(17)
        ^ (step as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ (node as u64).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Triplet edge update: `t_uvw` is a sum of seven linear maps into `d_t`
/// dims, reduced with max over valid `w`, then `relu` and a linear map back
/// to `h`. Holds `O(B n^3 d_t)` activations.
///
/// `x: [B, n, h]`, `e: [B, n, n, h]`, `graph: [B, h]`, `valid_w` has `B*n`
/// entries. Returns `[B, n, n, h]`.
pub fn triplet_readout<R: Real>(g: &mut Graph<R>, store: &ParamStore<R>, x: Var, e: Var, graph: Var, valid: &[bool]) -> Result<Var> {
    let bsz = g.shape(x)[0];
    let n = g.shape(x)[1];
    // [B, u, v, w, d]
    let tu = project(g, store, x, "tri.x1")?;
    let tu = g.repeat(tu, 2, n)?;
    let tu = g.repeat(tu, 3, n)?;
    let tv = project(g, store, x, "tri.x2")?;
    let tv = g.repeat(tv, 2, n)?;
    let tv = g.repeat(tv, 1, n)?;
    let tw = project(g, store, x, "tri.x3")?;
    let tw = g.repeat(tw, 1, n)?;
    let tw = g.repeat(tw, 1, n)?;
    let euv = project(g, store, e, "tri.e1")?;
    let euv = g.repeat(euv, 3, n)?;
    let euw = project(g, store, e, "tri.e2")?;
    let euw = g.repeat(euw, 2, n)?;
    let ewv = project(g, store, e, "tri.e3")?;
    let ewv = g.permute(ewv, vec![0, 2, 1, 3])?;
    let ewv = g.repeat(ewv, 1, n)?;
    let tg = linear(g, store, graph, "tri.g")?;
    let tg = g.repeat(tg, 1, n)?;
    let tg = g.repeat(tg, 1, n)?;
    let tg = g.repeat(tg, 1, n)?;
    let mut t = g.add(tu, tv)?;
    for part in [tw, euv, euw, ewv, tg] {
        t = g.add(t, part)?;
    }
    if valid.iter().any(|&v| !v) {
        let d = *g.shape(t).last().expect("rank 5");
        let mut mask = Vec::with_capacity(bsz * n * n * n * d);
        for b in 0..bsz {
            let row: Vec<f64> = expand_mask(&valid[b * n..(b + 1) * n], d);
            for _ in 0..n * n {
                mask.extend_from_slice(&row);
            }
        }
        let shape = g.shape(t).to_vec();
        let fill = vec![MASKED_LOGIT; mask.len()];
        let mask = constant(g, shape.clone(), &mask)?;
        let fill = constant(g, shape, &fill)?;
        t = g.select(mask, t, fill)?;
    }
    let t = g.max_axis(t, 3)?;
    let t = g.relu(t)?;
    linear(g, store, t, "tri.out")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_three_messages() {
        let mut g = Graph::<f64>::new();
        let m = constant(&mut g, vec![1, 3, 2], &[1.0, 5.0, 3.0, 2.0, 0.0, 7.0]).unwrap();
        let out = aggregate_invariant(&mut g, Aggregator::Max, m, &[true; 3]).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 7.0]);
    }

    #[test]
    fn masked_rows_are_ignored() {
        let mut g = Graph::<f64>::new();
        let m = constant(&mut g, vec![1, 3, 2], &[1.0, 5.0, 3.0, 2.0, 9.0, 9.0]).unwrap();
        let valid = [true, true, false];
        let mx = aggregate_invariant(&mut g, Aggregator::Max, m, &valid).unwrap();
        let sm = aggregate_invariant(&mut g, Aggregator::Sum, m, &valid).unwrap();
        let mn = aggregate_invariant(&mut g, Aggregator::Mean, m, &valid).unwrap();
        assert_eq!(g.value(mx).data(), &[3.0, 5.0]);
        assert_eq!(g.value(sm).data(), &[4.0, 7.0]);
        assert_eq!(g.value(mn).data(), &[2.0, 3.5]);
        assert!(aggregate_invariant(&mut g, Aggregator::Sum, m, &[false; 3]).is_err());
    }

    #[test]
    fn mean_of_one_message_is_that_message() {
        let mut g = Graph::<f64>::new();
        let m = constant(&mut g, vec![1, 1, 3], &[0.5, -2.0, 4.0]).unwrap();
        let out = aggregate_invariant(&mut g, Aggregator::Mean, m, &[true]).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -2.0, 4.0]);
    }

    #[test]
    fn orderings_enumerate_all_permutations() {
        let all = all_orderings(&[7, 8, 9]);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![7, 8, 9]);
        assert_eq!(all[5], vec![9, 8, 7]);
        assert_eq!(all_orderings(&[0, 1, 2, 3, 4]).len(), 120);
    }
}
