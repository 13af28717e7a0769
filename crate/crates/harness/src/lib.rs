//! Training, evaluation, timing and multi-seed comparison runs.
//!
//! Trajectories are generated online from seed streams that keep training,
//! validation and test data apart; every run returns a [`RunRecord`] that is
//! persisted as one NDJSON line.

pub mod compare;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod plan;
pub mod seeds;
pub mod suites;
pub mod train;

pub use compare::{compare_aggregators, summarize, Cell, Table, Variants, MIN_SEEDS};
pub use error::{HarnessError, Result};
pub use eval::{evaluate, evaluate_on, ModelPredictor, OraclePredictor, Predictor, RandomPredictor};
pub use metrics::{f1, micro_f1, F1Counts, SCALAR_TOL};
pub use plan::{append_records, display_name, read_records, Metrics, Precision, RunRecord, TrainPlan};
pub use seeds::{trajectory_seed, SeedLedger, Stream};
pub use suites::oracle_suite;
pub use train::{timing_curve, train, train_with, TrainOptions, Trainer};
