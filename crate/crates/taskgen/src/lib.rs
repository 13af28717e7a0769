//! Execution trajectories of classical algorithms: typed inputs, one hint
//! frame per iteration, and outputs checked against plain references.

pub mod algo;
pub mod batch;
pub mod error;
pub mod spec;
pub mod trajectory;

pub use algo::{check_instance, generate, reference_output, sample_inputs, sample_keys, stream_seed, trace, Features};
pub use batch::{batch, Batch};
pub use error::{Result, TaskError};
pub use spec::{feature_spec, spec_of, FeatureSpec, Location, Probe, Stage, Task};
pub use trajectory::{read_ndjson, write_ndjson, FeatureArray, Trajectory};
