use diffcore::{AdamConfig, ParamStore};
use harness::{
    evaluate, evaluate_on, timing_curve, train, HarnessError, OraclePredictor, Precision, RandomPredictor, SeedLedger, Stream, TrainOptions,
    TrainPlan,
};
use model::{init_params, Aggregator, ModelConfig};
use taskgen::Task;

fn tiny(task: Task) -> TrainPlan {
    TrainPlan {
        task,
        n_train: 4,
        eval_sizes: vec![4, 6],
        batch_size: 4,
        train_steps: 3,
        eval_samples: 8,
        val_samples: 4,
        val_every: 2,
        precision: Precision::Double,
        model: ModelConfig {
            hidden_dim: 8,
            triplet_dim: 4,
            ..ModelConfig::default()
        },
        ..TrainPlan::default()
    }
}

#[test]
fn oracle_predictions_score_one_on_every_task() {
    for task in Task::ALL {
        for n in [5, 9] {
            let m = evaluate_on(&mut OraclePredictor, task, n, 20, Stream::Test, 3, &mut SeedLedger::default()).unwrap();
            assert_eq!(m.score, 1.0, "{task} n={n}: {:?}", m.features);
            assert!(m.features.values().all(|&f| f == 1.0));
        }
    }
}

#[test]
fn random_pointers_on_sorting_score_one_over_n() {
    for task in [Task::InsertionSort, Task::Quicksort] {
        let mut p = RandomPredictor::new(11);
        let m = evaluate_on(&mut p, task, 16, 1000, Stream::Test, 0, &mut SeedLedger::default()).unwrap();
        assert!((m.score - 1.0 / 16.0).abs() <= 0.02, "{task}: {}", m.score);
    }
}

#[test]
fn evaluation_below_minimum_size_is_an_error() {
    let cfg = ModelConfig::default();
    let mut store = ParamStore::<f64>::new(0);
    init_params(&mut store, Task::FindMaxSubarray, &cfg);
    assert!(matches!(
        evaluate(&store, &cfg, Task::FindMaxSubarray, 2, 4, 0),
        Err(HarnessError::Task(_))
    ));
}

#[test]
fn zero_steps_reports_the_initial_model() {
    let plan = TrainPlan {
        train_steps: 0,
        ..tiny(Task::Minimum)
    };
    let r = train(&plan, 5, &TrainOptions::default()).unwrap();
    let mut store = ParamStore::<f64>::new(5);
    init_params(&mut store, plan.task, &plan.model);
    for &n in &plan.eval_sizes {
        let m = evaluate(&store, &plan.model, plan.task, n, plan.eval_samples, 5).unwrap();
        assert_eq!(r.metrics[&n], m);
    }
    assert_eq!(r.best_step, 0);
}

#[test]
fn double_precision_reruns_are_bit_identical() {
    for (task, agg) in [(Task::InsertionSort, Aggregator::Lstm), (Task::Quickselect, Aggregator::Max)] {
        let mut plan = tiny(task);
        plan.model.aggregator = agg;
        let a = train(&plan, 9, &TrainOptions::default()).unwrap();
        let b = train(&plan, 9, &TrainOptions::default()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.loss_log, b.loss_log);
        assert_eq!(a.best_val_score.to_bits(), b.best_val_score.to_bits());
    }
}

#[test]
fn seed_streams_are_disjoint_and_audited() {
    let r = train(&tiny(Task::BinarySearch), 2, &TrainOptions::default()).unwrap();
    r.seed_ledger.audit().unwrap();
    let streams: Vec<Stream> = r.seed_ledger.entries.iter().map(|e| e.stream).collect();
    assert!(streams.contains(&Stream::Train) && streams.contains(&Stream::Valid) && streams.contains(&Stream::Test));
    for e in &r.seed_ledger.entries {
        assert_eq!(Stream::of_seed(e.first), Some(e.stream));
        assert_eq!(Stream::of_seed(e.last), Some(e.stream));
    }
}

#[test]
fn logs_follow_the_reporting_cadence() {
    let plan = TrainPlan {
        train_steps: 50,
        val_every: 25,
        ..tiny(Task::Minimum)
    };
    let r = train(&plan, 0, &TrainOptions::default()).unwrap();
    let steps: Vec<usize> = r.loss_log.iter().map(|p| p.0).collect();
    assert_eq!(steps, [1, 10, 20, 30, 40, 50]);
    assert_eq!(r.time_log.len(), 1);
    assert_eq!(r.time_log[0].0, 50);
}

#[test]
fn exploding_updates_abort_with_a_named_feature() {
    let plan = TrainPlan {
        train_steps: 40,
        clip_norm: 1e30,
        optimizer: AdamConfig {
            lr: 1e300,
            ..AdamConfig::default()
        },
        ..tiny(Task::Minimum)
    };
    match train(&plan, 0, &TrainOptions::default()) {
        Err(HarnessError::NonFinite { feature, step, detail }) => {
            assert!(!feature.is_empty());
            assert!(step < 40);
            let msg = HarnessError::NonFinite { feature, step, detail }.to_string();
            assert!(msg.contains(&format!("step {step}")), "{msg}");
        }
        other => panic!("expected a non-finite abort, got {:?}", other.map(|r| r.metrics)),
    }
}

#[test]
fn timing_curve_is_strictly_increasing() {
    let plan = tiny(Task::Minimum);
    let c = timing_curve(&plan, 0, &[1, 2, 4, 6]).unwrap();
    assert_eq!(c.iter().map(|p| p.0).collect::<Vec<_>>(), [1, 2, 4, 6]);
    assert!(c.windows(2).all(|w| w[1].1 > w[0].1), "{c:?}");
    assert!(timing_curve(&plan, 0, &[2, 2]).is_err());
}

#[test]
fn records_round_trip_through_ndjson() {
    let dir = std::env::temp_dir().join(format!("rnar-records-{}", std::process::id()));
    let path = dir.join("r.ndjson");
    let _ = std::fs::remove_file(&path);
    let r = train(&tiny(Task::Minimum), 1, &TrainOptions::default()).unwrap();
    harness::append_records(&path, &[r.clone(), r.clone()]).unwrap();
    let back = harness::read_records(&path).unwrap();
    assert_eq!(back, vec![r.clone(), r]);
    std::fs::remove_dir_all(dir).unwrap();
}
