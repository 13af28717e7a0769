//! Every op kind against central finite differences, on random shapes and
//! values, plus determinism and accumulation properties.

use diffcore::{fd_check, Graph, OpKind, ParamStore, Result, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

/// Random weights contracted against the op output so that every output
/// element carries a distinct, non-trivial upstream gradient.
fn weighted_sum(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let w = g.input(w);
    let p = g.mul(out, w)?;
    g.sum_all(p)
}

fn random_shape(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.gen_range(1..5)).collect()
}

/// Builds a store holding operands for `kind` and returns the op to check.
fn case(kind_id: usize, seed: u64) -> (ParamStore<f64>, OpKind, Vec<&'static str>, Option<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::<f64>::new(seed);
    let rank = rng.gen_range(1..4);
    let shape = random_shape(&mut rng, rank);
    let axis = rng.gen_range(0..rank);
    let mut mask = None;
    let (kind, names): (OpKind, Vec<&str>) = match kind_id {
        0 => {
            let (n, k, p) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
            if rng.gen_bool(0.5) {
                let b = rng.gen_range(1..4);
                s.init_uniform("a", vec![b, n, k], -1.0, 1.0);
                s.init_uniform("b", vec![b, k, p], -1.0, 1.0);
            } else {
                s.init_uniform("a", vec![2, n, k], -1.0, 1.0);
                s.init_uniform("b", vec![k, p], -1.0, 1.0);
            }
            (OpKind::MatMul, vec!["a", "b"])
        }
        1..=3 => {
            s.init_uniform("a", shape.clone(), -1.0, 1.0);
            let cut = rng.gen_range(0..=rank);
            s.init_uniform("b", shape[cut..].to_vec(), -1.0, 1.0);
            let kind = [OpKind::Add, OpKind::Sub, OpKind::Mul][kind_id - 1].clone();
            (kind, vec!["a", "b"])
        }
        4 => {
            s.init_uniform("a", shape, -1.0, 1.0);
            (OpKind::Scale(rng.gen_range(-2.0..2.0)), vec!["a"])
        }
        5 => {
            s.init_uniform("a", shape.clone(), -1.0, 1.0);
            let mut other = shape.clone();
            other[axis] = rng.gen_range(1..4);
            s.init_uniform("b", other, -1.0, 1.0);
            (OpKind::Concat { axis }, vec!["a", "b"])
        }
        6 => {
            s.init_uniform("a", shape.clone(), -1.0, 1.0);
            let start = rng.gen_range(0..shape[axis]);
            let end = rng.gen_range(start + 1..=shape[axis]);
            (OpKind::Slice { axis, start, end }, vec!["a"])
        }
        7..=9 => {
            s.init_uniform("a", shape, -1.0, 1.0);
            let kind = [OpKind::SumAxis(axis), OpKind::MaxAxis(axis), OpKind::MeanAxis(axis)][kind_id - 7].clone();
            (kind, vec!["a"])
        }
        10..=12 => {
            s.init_uniform("a", shape, -2.0, 2.0);
            ([OpKind::Sigmoid, OpKind::Tanh, OpKind::Relu][kind_id - 10].clone(), vec!["a"])
        }
        13 | 14 => {
            s.init_uniform("a", shape, -3.0, 3.0);
            let kind = if kind_id == 13 { OpKind::SoftmaxAxis(axis) } else { OpKind::LogSoftmaxAxis(axis) };
            (kind, vec!["a"])
        }
        15 => {
            s.init_uniform("a", shape, 0.5, 2.0);
            (OpKind::Log, vec!["a"])
        }
        16 => {
            s.init_uniform("a", shape, -2.0, 2.0);
            (OpKind::Square, vec!["a"])
        }
        17 => {
            let n: usize = shape.iter().product();
            mask = Some(Tensor::new(shape.clone(), (0..n).map(|_| rng.gen_range(0..2) as f64).collect()).unwrap());
            s.init_uniform("a", shape.clone(), -1.0, 1.0);
            s.init_uniform("b", shape, -1.0, 1.0);
            (OpKind::SelectByMask, vec!["a", "b"])
        }
        18 => {
            let n: usize = shape.iter().product();
            s.init_uniform("a", shape, -1.0, 1.0);
            (OpKind::Reshape(vec![n]), vec!["a"])
        }
        19 => {
            s.init_uniform("a", shape, -1.0, 1.0);
            let axis = rng.gen_range(0..=rank);
            (OpKind::RepeatAxis { axis, count: rng.gen_range(1..4) }, vec!["a"])
        }
        20 => {
            s.init_uniform("a", shape, -1.0, 1.0);
            let mut perm: Vec<usize> = (0..rank).collect();
            for i in (1..rank).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            (OpKind::Permute(perm), vec!["a"])
        }
        _ => {
            s.init_uniform("a", shape.clone(), -1.0, 1.0);
            let rows: usize = shape[..rank - 1].iter().product();
            let picks = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..rows)).collect();
            (OpKind::GatherRows(picks), vec!["a"])
        }
    };
    (s, kind, names, mask)
}

const KINDS: usize = 22;

#[test]
fn every_op_matches_finite_differences_on_random_cases() {
    let mut count = 0;
    for kind_id in 0..KINDS {
        for rep in 0..6 {
            let seed = (kind_id * 1000 + rep) as u64;
            let (mut store, kind, names, mask) = case(kind_id, seed);
            let report = fd_check(
                |g, s| {
                    let mut ins = Vec::new();
                    if let Some(m) = &mask {
                        ins.push(g.input(m.clone()));
                    }
                    for n in &names {
                        ins.push(g.param(s, n)?);
                    }
                    let out = g.forward_op(kind.clone(), &ins)?;
                    weighted_sum(g, out, seed + 1)
                },
                &mut store,
                1e-6,
                TOL,
            )
            .unwrap();
            assert!(report.passed(), "{} (seed {seed}): {report:?}", kind.name());
            count += 1;
        }
    }
    assert!(count >= 100);
}

#[test]
fn square_sum_gradient_is_twice_w() {
    let mut s = ParamStore::<f64>::new(0);
    s.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let mut g = Graph::new();
    let w = g.param(&s, "w").unwrap();
    let sq = g.square(w).unwrap();
    let l = g.sum_all(sq).unwrap();
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.grad("w").unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn loss_independent_of_param_gives_zero_gradient() {
    let mut s = ParamStore::<f64>::new(0);
    s.init_uniform("w", vec![3], -1.0, 1.0);
    s.init_uniform("v", vec![3], -1.0, 1.0);
    let mut g = Graph::new();
    let _w = g.param(&s, "w").unwrap();
    let v = g.param(&s, "v").unwrap();
    let l = g.sum_all(v).unwrap();
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.grad("w").unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn max_tie_subgradient_agrees_with_fd_away_from_tie() {
    // tie: all gradient goes to the lowest index
    let mut s = ParamStore::<f64>::new(0);
    s.insert("w", Tensor::new(vec![3], vec![0.5, 0.5, -1.0]).unwrap());
    let f = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let w = g.param(s, "w")?;
        let m = g.max_axis(w, 0)?;
        g.sum_all(m)
    };
    let mut g = Graph::new();
    let l = f(&mut g, &s).unwrap();
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.grad("w").unwrap().data(), &[1.0, 0.0, 0.0]);
    // nudging index 0 up by more than eps makes it the unique max: the
    // subgradient chosen at the tie is the one finite differences see there
    s.insert("w", Tensor::new(vec![3], vec![0.5 + 1e-3, 0.5, -1.0]).unwrap());
    let report = fd_check(f, &mut s, 1e-6, 1e-9).unwrap();
    assert!(report.passed());
    assert_eq!(s.grad("w").unwrap().data(), &[1.0, 0.0, 0.0]);
}

fn mlp_loss(g: &mut Graph<f64>, s: &ParamStore<f64>) -> Result<Var> {
    let x = g.input(Tensor::from_f64(vec![4, 3], &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, -1.0, 0.0, 0.2])?);
    let w = g.param(s, "w")?;
    let h = g.matmul(x, w)?;
    let b = g.param(s, "b")?;
    let h = g.add(h, b)?;
    let h = g.tanh(h)?;
    let p = g.log_softmax(h, 1)?;
    g.sum_all(p)
}

#[test]
fn backward_twice_accumulates_double() {
    let mut s = ParamStore::<f64>::new(5);
    s.init_linear("w", 3, 2);
    s.init_uniform("b", vec![2], -0.1, 0.1);
    let mut g = Graph::new();
    let l = mlp_loss(&mut g, &s).unwrap();
    g.backward(l, &mut s).unwrap();
    let once: Vec<f64> = s.grad("w").unwrap().data().to_vec();
    g.backward(l, &mut s).unwrap();
    for (a, b) in s.grad("w").unwrap().data().iter().zip(&once) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn identical_inputs_give_bit_identical_values_and_gradients() {
    let run = || {
        let mut s = ParamStore::<f64>::new(9);
        s.init_linear("w", 3, 2);
        s.init_uniform("b", vec![2], -0.1, 0.1);
        let mut g = Graph::new();
        let l = mlp_loss(&mut g, &s).unwrap();
        g.backward(l, &mut s).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        (bits(g.value(l).data()), bits(s.grad("w").unwrap().data()), bits(s.grad("b").unwrap().data()))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-30.0f64..30.0, 1..40), cols in 1usize..6) {
        let rows = vals.len().div_ceil(cols);
        let mut data = vals.clone();
        data.resize(rows * cols, 0.0);
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::new(vec![rows, cols], data.clone()).unwrap());
        let s = g.softmax(a, 1).unwrap();
        for row in g.value(s).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let mut g32 = Graph::<f32>::new();
        let a = g32.input(Tensor::from_f64(vec![rows, cols], &data).unwrap());
        let s = g32.softmax(a, 1).unwrap();
        for row in g32.value(s).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
        }
    }
}
