use diffcore::{Graph, ParamStore, Tensor};
use model::layers::{aggregate_janossy, aggregate_lstm, message, sampled_orderings, triplet_readout};
use model::net::{decode, encode, feature_loss, process_step, run_model, Ctx, HintMode, RunOptions};
use model::{init_params, Aggregator, Base, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgen::{batch, feature_spec, generate, FeatureArray, Task};

fn store_for(task: Task, cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    let mut s = ParamStore::new(seed);
    init_params(&mut s, task, cfg);
    s
}

fn zero_prefix(s: &mut ParamStore<f64>, prefix: &str) {
    let names: Vec<String> = s.names().filter(|n| n.starts_with(prefix)).map(str::to_string).collect();
    assert!(!names.is_empty(), "no parameters under {prefix}");
    for n in names {
        s.value_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
}

fn random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

fn small(base: Base, aggregator: Aggregator) -> ModelConfig {
    ModelConfig {
        hidden_dim: 8,
        base,
        aggregator,
        ..ModelConfig::default()
    }
}

#[test]
fn zero_parameters_give_zero_messages_and_triplet_updates() {
    let cfg = small(Base::TripletGmpnn, Aggregator::Max);
    let mut s = store_for(Task::InsertionSort, &cfg, 1);
    zero_prefix(&mut s, "msg.");
    zero_prefix(&mut s, "tri.");
    let mut g = Graph::new();
    let x = g.input(random(vec![2, 3, 8], 1));
    let e = g.input(random(vec![2, 3, 3, 8], 2));
    let gr = g.input(random(vec![2, 8], 3));
    let m = message(&mut g, &s, x, e, gr, 1).unwrap();
    assert!(g.value(m).data().iter().all(|&v| v == 0.0));
    let t = triplet_readout(&mut g, &s, x, e, gr, &[true; 6]).unwrap();
    assert_eq!(g.shape(t), &[2, 3, 3, 8]);
    assert!(g.value(t).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_lstm_parameters_give_exact_zero() {
    let cfg = small(Base::Mpnn, Aggregator::Lstm);
    let mut s = store_for(Task::InsertionSort, &cfg, 2);
    zero_prefix(&mut s, "lstm.");
    let mut g = Graph::new();
    let msgs = g.input(random(vec![5, 8], 4));
    let y = aggregate_lstm(&mut g, &s, msgs).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_message_is_one_cell_step() {
    let cfg = small(Base::Mpnn, Aggregator::Lstm);
    let s = store_for(Task::InsertionSort, &cfg, 3);
    let m = 8;
    let msg = random(vec![1, m], 5);
    let mut g = Graph::new();
    let x = g.input(msg.clone());
    let y = aggregate_lstm(&mut g, &s, x).unwrap();

    let w = s.value("lstm.x.w").unwrap().data();
    let b = s.value("lstm.x.b").unwrap().data();
    let z: Vec<f64> = (0..4 * m).map(|j| b[j] + (0..m).map(|k| msg.data()[k] * w[k * 4 * m + j]).sum::<f64>()).collect();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    for j in 0..m {
        let c = sig(z[j]) * z[2 * m + j].tanh();
        let h = sig(z[3 * m + j]) * c.tanh();
        assert!((g.value(y).data()[j] - h).abs() < 1e-12);
    }
}

#[test]
fn janossy_with_one_sample_is_one_shuffled_lstm() {
    let cfg = small(Base::Mpnn, Aggregator::Lstm);
    let s = store_for(Task::InsertionSort, &cfg, 4);
    for seed in 0..10 {
        let msgs = random(vec![4, 8], 100 + seed);
        let mut g = Graph::new();
        let x = g.input(msgs.clone());
        let j = aggregate_janossy(&mut g, &s, x, 1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let order = sampled_orderings(&[0, 1, 2, 3], 1, &mut ChaCha8Rng::seed_from_u64(seed)).remove(0);
        let shuffled = g.gather_rows(x, order).unwrap();
        let l = aggregate_lstm(&mut g, &s, shuffled).unwrap();
        assert_eq!(g.value(j).data(), g.value(l).data());
    }
}

#[test]
fn janossy_variance_shrinks_with_more_samples() {
    let cfg = small(Base::Mpnn, Aggregator::Lstm);
    let s = store_for(Task::InsertionSort, &cfg, 5);
    let msgs = random(vec![5, 8], 6);
    let spread = |k: usize| {
        let outs: Vec<f64> = (0..100)
            .map(|seed| {
                let mut g = Graph::new();
                let x = g.input(msgs.clone());
                let y = aggregate_janossy(&mut g, &s, x, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                g.value(y).data().iter().sum()
            })
            .collect();
        let mean = outs.iter().sum::<f64>() / outs.len() as f64;
        outs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (outs.len() - 1) as f64
    };
    let (v1, v3) = (spread(1), spread(3));
    assert!(v3 < v1, "var k=1 {v1}, k=3 {v3}");
}

#[test]
fn gate_with_zero_weights_is_sigmoid_of_bias() {
    let cfg = small(Base::TripletGmpnn, Aggregator::Max);
    let mut s = store_for(Task::InsertionSort, &cfg, 6);
    zero_prefix(&mut s, "gate.w");
    zero_prefix(&mut s, "upd.");
    let b = batch(&[generate(Task::InsertionSort, 3, 0).unwrap()]).unwrap();
    let ctx = Ctx::new(&b).unwrap();
    let mut g = Graph::new();
    let x = g.input(random(vec![1, 3, 8], 7));
    let e = g.input(random(vec![1, 3, 3, 8], 8));
    let gr = g.input(random(vec![1, 8], 9));
    let y = process_step(&mut g, &s, &cfg, &ctx, x, e, gr, 0, 0).unwrap();
    // candidate is relu(0) = 0, so the output is x scaled by 1 - sigmoid(-3)
    let gate = 1.0 / (1.0 + 3f64.exp());
    assert!((gate - 0.0474).abs() < 1e-4);
    for (o, i) in g.value(y).data().iter().zip(g.value(x).data()) {
        assert!((o - i * (1.0 - gate)).abs() < 1e-12);
    }
}

#[test]
fn pointer_and_mask_one_decoders_normalize_over_valid_nodes() {
    let cfg = small(Base::Mpnn, Aggregator::Max);
    let s = store_for(Task::InsertionSort, &cfg, 7);
    // a single node; the generators need at least two, so the context is built by hand
    let ctx = Ctx {
        bsz: 1,
        n: 1,
        sizes: vec![1],
        steps: vec![1],
        node_valid: vec![true],
        pos_order: vec![vec![0]],
        all_valid: true,
    };
    let pred = feature_spec(Task::InsertionSort, "pred").unwrap();
    let mut g = Graph::new();
    let x = g.input(random(vec![1, 1, 8], 10));
    let logits = decode(&mut g, &s, &ctx, &pred, x).unwrap();
    let p = g.softmax(logits, 2).unwrap();
    assert_eq!(g.value(p).data(), &[1.0]);

    let padded = batch(&[generate(Task::InsertionSort, 3, 1).unwrap(), generate(Task::InsertionSort, 5, 2).unwrap()]).unwrap();
    let ctx = Ctx::new(&padded).unwrap();
    let i = feature_spec(Task::InsertionSort, "i").unwrap();
    let x = g.input(random(vec![2, 5, 8], 11));
    for (spec, axis) in [(i, 1), (pred, 2)] {
        let logits = decode(&mut g, &s, &ctx, &spec, x).unwrap();
        let p = g.softmax(logits, axis).unwrap();
        let v = g.value(p).data().to_vec();
        for (r, chunk) in v.chunks(5).enumerate() {
            let b = if axis == 1 { r } else { r / 5 };
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if b == 0 {
                assert!(chunk[3..].iter().all(|&q| q == 0.0), "padded nodes get no mass");
            }
        }
    }
}

#[test]
fn uniform_pointer_cross_entropy_is_log_n() {
    let cfg = small(Base::Mpnn, Aggregator::Max);
    let mut s = store_for(Task::InsertionSort, &cfg, 8);
    zero_prefix(&mut s, "dec.pred.");
    let t = generate(Task::InsertionSort, 4, 3).unwrap();
    let b = batch(std::slice::from_ref(&t)).unwrap();
    let ctx = Ctx::new(&b).unwrap();
    let spec = feature_spec(Task::InsertionSort, "pred").unwrap();
    let mut g = Graph::new();
    let x = g.input(random(vec![1, 4, 8], 12));
    let logits = decode(&mut g, &s, &ctx, &spec, x).unwrap();
    let (l, count) = feature_loss(&mut g, &ctx, &spec, logits, &t.outputs["pred"].data, &[1.0]).unwrap();
    assert_eq!(count, 4.0);
    assert!((g.value(l).data()[0] / count - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn single_frame_trajectory_runs_one_step() {
    let mut t = generate(Task::Minimum, 4, 0).unwrap();
    t.steps = 1;
    for h in t.hints.values_mut() {
        *h = FeatureArray::stack(&[h.frame(0)]);
    }
    let cfg = small(Base::TripletGmpnn, Aggregator::Lstm);
    let s = store_for(Task::Minimum, &cfg, 9);
    let mut g = Graph::new();
    let f = run_model(&mut g, &s, &cfg, &batch(&[t]).unwrap(), &RunOptions::eval()).unwrap();
    assert_eq!(f.process_steps, 1);
    assert!(f.hints.is_empty());
    assert_eq!(f.step_inputs.len(), 1);
}

#[test]
fn teacher_forcing_decouples_inputs_from_predictions() {
    let cfg = small(Base::TripletGmpnn, Aggregator::Lstm);
    let b = batch(&[generate(Task::InsertionSort, 5, 4).unwrap(), generate(Task::InsertionSort, 4, 5).unwrap()]).unwrap();
    let a = store_for(Task::InsertionSort, &cfg, 10);
    let mut other = store_for(Task::InsertionSort, &cfg, 10);
    // different decoders, same everything else
    let dec: Vec<String> = other.names().filter(|n| n.starts_with("dec.")).map(str::to_string).collect();
    for n in dec {
        let fresh = store_for(Task::InsertionSort, &cfg, 99).value(&n).unwrap().clone();
        *other.value_mut(&n).unwrap() = fresh;
    }
    let inputs = |s: &ParamStore<f64>, mode| {
        let mut g = Graph::new();
        let f = run_model(&mut g, s, &cfg, &b, &RunOptions { mode, seed: 3 }).unwrap();
        f.step_inputs.iter().map(|&v| g.value(v).data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(inputs(&a, HintMode::TeacherForced(1.0)), inputs(&other, HintMode::TeacherForced(1.0)));
    assert_ne!(inputs(&a, HintMode::SelfFeeding), inputs(&other, HintMode::SelfFeeding));
}

#[test]
fn self_feeding_is_deterministic() {
    let cfg = small(Base::TripletGmpnn, Aggregator::Lstm);
    let s = store_for(Task::Quickselect, &cfg, 11);
    let b = batch(&[generate(Task::Quickselect, 6, 1).unwrap()]).unwrap();
    let run = || {
        let mut g = Graph::new();
        let f = run_model(&mut g, &s, &cfg, &b, &RunOptions::eval()).unwrap();
        g.value(f.loss).data()[0].to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn encoder_is_affine_and_nope_drops_pos() {
    let cfg = small(Base::Mpnn, Aggregator::Max);
    let s = store_for(Task::Minimum, &cfg, 12);
    let b = batch(&[generate(Task::Minimum, 4, 0).unwrap()]).unwrap();
    let ctx = Ctx::new(&b).unwrap();
    let key = feature_spec(Task::Minimum, "key").unwrap();
    let pos = feature_spec(Task::Minimum, "pos").unwrap();
    let enc = |cfg: &ModelConfig, k: Vec<f64>, p: Vec<f64>| {
        let mut g = Graph::new();
        let e = encode(&mut g, &s, cfg, &ctx, &[(pos, p), (key, k)]).unwrap();
        g.value(e.node.unwrap()).data().to_vec()
    };
    let k = vec![0.1, 0.7, 0.3, 0.9];
    let p = vec![0.0, 0.25, 0.5, 0.75];
    let zero = enc(&cfg, vec![0.0; 4], vec![0.0; 4]);
    let once = enc(&cfg, k.clone(), p.clone());
    let twice = enc(&cfg, k.iter().map(|x| 2.0 * x).collect(), p.iter().map(|x| 2.0 * x).collect());
    for i in 0..zero.len() {
        assert!(((twice[i] - once[i]) - (once[i] - zero[i])).abs() < 1e-12);
    }
    // all-zero features leave only the summed biases
    let bias: Vec<f64> = (0..8)
        .map(|j| s.value("enc.pos.b").unwrap().data()[j] + s.value("enc.key.b").unwrap().data()[j])
        .collect();
    for (i, z) in zero.iter().enumerate() {
        assert_eq!(*z, bias[i % 8]);
    }
    let nope = ModelConfig { use_pos: false, ..cfg };
    assert_eq!(enc(&nope, k.clone(), p), enc(&nope, k, vec![0.9, 0.1, 0.4, 0.2]));
}

#[test]
fn stepwise_inference_matches_unrolled_self_feeding() {
    for (task, base, agg) in [
        (Task::InsertionSort, Base::TripletGmpnn, Aggregator::Lstm),
        (Task::Quickselect, Base::Mpnn, Aggregator::Max),
        (Task::Bfs, Base::TripletGmpnn, Aggregator::Sum),
        (Task::FindMaxSubarray, Base::Mpnn, Aggregator::Lstm),
    ] {
        let cfg = small(base, agg);
        let s = store_for(task, &cfg, 13);
        let b = batch(&[generate(task, 5, 1).unwrap(), generate(task, 7, 2).unwrap()]).unwrap();
        let mut g = Graph::new();
        let f = run_model(&mut g, &s, &cfg, &b, &RunOptions::eval()).unwrap();
        let unrolled = model::predicted_outputs(&g, &b, &f).unwrap();
        assert_eq!(model::infer(&s, &cfg, &b).unwrap(), unrolled, "{task}");
    }
}
