//! Parameter layout of the reasoner for one task.

use diffcore::{ParamStore, Real};
use taskgen::{spec_of, FeatureSpec, Location, Probe, Stage, Task};

use crate::config::{Aggregator, Base, ModelConfig};

/// Width of a feature's encoder input.
pub(crate) fn encoder_width(spec: &FeatureSpec) -> usize {
    match spec.probe {
        Probe::Categorical(c) => c,
        _ => 1,
    }
}

/// Glorot-uniform block of a linear map whose full fan-in is `fan_in`.
fn init_block<R: Real>(store: &mut ParamStore<R>, name: &str, rows: usize, cols: usize, fan_in: usize) {
    let s = (6.0 / (fan_in + cols) as f64).sqrt();
    store.init_uniform(name, vec![rows, cols], -s, s);
}

fn init_linear<R: Real>(store: &mut ParamStore<R>, prefix: &str, fan_in: usize, fan_out: usize) {
    store.init_linear(&format!("{prefix}.w"), fan_in, fan_out);
    store.init_const(&format!("{prefix}.b"), vec![fan_out], 0.0);
}

fn init_tail<R: Real>(store: &mut ParamStore<R>, prefix: &str, width: usize, layers: usize) {
    for l in 1..layers {
        init_linear(store, &format!("{prefix}.l{l}"), width, width);
    }
}

/// Creates every parameter used by the model on `task`. Initialization is
/// a pure function of the store's seed and each parameter name.
pub fn init_params<R: Real>(store: &mut ParamStore<R>, task: Task, cfg: &ModelConfig) {
    let h = cfg.hidden_dim;
    let m = cfg.message_width();
    for spec in spec_of(task) {
        let name = spec.name;
        match spec.stage {
            Stage::Input | Stage::Hint => init_linear(store, &format!("enc.{name}"), encoder_width(&spec), h),
            Stage::Output => {}
        }
        if spec.stage == Stage::Input {
            continue;
        }
        let p = format!("dec.{name}");
        match (spec.probe, spec.location) {
            (Probe::Pointer, _) => {
                init_linear(store, &format!("{p}.src"), h, h);
                init_linear(store, &format!("{p}.dst"), h, h);
            }
            (probe, _) => {
                let out = if let Probe::Categorical(c) = probe { c } else { 1 };
                init_linear(store, &p, h, out);
            }
        }
    }

    for part in ["recv", "send", "edge", "graph"] {
        init_block(store, &format!("msg.{part}.w"), h, m, 4 * h);
    }
    store.init_const("msg.b", vec![m], 0.0);
    init_tail(store, "msg", m, cfg.msg_layers);

    init_block(store, "upd.w", h + m, h, h + m);
    store.init_const("upd.b", vec![h], 0.0);
    init_tail(store, "upd", h, cfg.update_layers);

    if cfg.aggregator == Aggregator::Lstm {
        store.init_linear("lstm.x.w", m, 4 * m);
        store.init_linear("lstm.wh", m, 4 * m);
        let bias: Vec<f64> = (0..4 * m).map(|i| if (m..2 * m).contains(&i) { 1.0 } else { 0.0 }).collect();
        store.insert("lstm.x.b", diffcore::Tensor::from_f64(vec![4 * m], &bias).expect("shape"));
    }

    if cfg.base == Base::TripletGmpnn {
        let dt = cfg.triplet_dim;
        for part in ["x1", "x2", "x3", "e1", "e2", "e3", "g"] {
            init_block(store, &format!("tri.{part}.w"), h, dt, 7 * h);
        }
        store.init_const("tri.g.b", vec![dt], 0.0);
        init_linear(store, "tri.out", dt, h);
        init_block(store, "gate.w", h + m, h, h + m);
        store.init_const("gate.b", vec![h], -3.0);
    }
}

/// Whether `spec` is encoded as an edge feature.
pub(crate) fn encodes_on_edges(spec: &FeatureSpec) -> bool {
    spec.location == Location::Edge || spec.probe == Probe::Pointer
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forget_bias_is_one_and_gate_bias_minus_three() {
        let mut s = ParamStore::<f64>::new(1);
        init_params(&mut s, Task::InsertionSort, &ModelConfig::default());
        let b = s.value("lstm.x.b").unwrap().data().to_vec();
        let m = 64;
        assert!(b[..m].iter().all(|&x| x == 0.0));
        assert!(b[m..2 * m].iter().all(|&x| x == 1.0));
        assert!(b[2 * m..].iter().all(|&x| x == 0.0));
        assert!(s.value("gate.b").unwrap().data().iter().all(|&x| x == -3.0));
        assert!(s.value("msg.b").unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mpnn_has_no_triplet_or_gate() {
        let mut s = ParamStore::<f64>::new(1);
        let cfg = ModelConfig {
            base: Base::Mpnn,
            aggregator: Aggregator::Max,
            ..ModelConfig::default()
        };
        init_params(&mut s, Task::Minimum, &cfg);
        assert!(!s.contains("gate.w") && !s.contains("tri.out.w") && !s.contains("lstm.wh"));
        assert!(s.contains("enc.pos.w") && s.contains("dec.min_out.w"));
    }
}
