//! Encode-process-decode reasoner over fully connected graphs.
//!
//! The processor sends messages along every (sender, receiver) pair,
//! reduces them with a permutation-invariant aggregator or with an LSTM run
//! over senders in ascending `pos`, and updates node states. The
//! `triplet_gmpnn` base adds triplet edge reasoning and a gated update.

pub mod config;
pub mod error;
pub mod layers;
pub mod net;
pub mod params;
pub mod verify;

pub use config::{Aggregator, Base, ConfigFile, ModelConfig};
pub use error::{ModelError, Result};
pub use layers::{aggregate_invariant, aggregate_janossy, aggregate_janossy_exhaustive, aggregate_lstm, message, triplet_readout};
pub use net::{batch_frame, decode, encode, feature_loss, hard_prediction, infer, predicted_outputs, process_step, run_model, Ctx, Encoded, Forward, HintMode, RunOptions};
pub use params::init_params;
