//! Padding of same-task trajectories to a common node count and step count.

use std::collections::BTreeMap;

use crate::error::{Result, TaskError};
use crate::spec::{spec_of, FeatureSpec, Location, Probe, Stage, Task};
use crate::trajectory::{FeatureArray, Trajectory};

/// Trajectories of one task padded to `n_max` nodes and `t_max` steps.
///
/// Every feature gains a leading batch axis; hints also keep their step
/// axis. Padded nodes hold zeros. Padded steps repeat the last real frame
/// so that teacher forcing past the end is harmless; masks exclude them.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub task: Task,
    pub n_max: usize,
    pub t_max: usize,
    pub sizes: Vec<usize>,
    pub steps: Vec<usize>,
    /// `[B, n_max]`, 1 for real nodes.
    pub node_mask: Vec<f64>,
    /// `[B, t_max]`, 1 for real hint frames.
    pub step_mask: Vec<f64>,
    pub inputs: BTreeMap<String, FeatureArray>,
    pub hints: BTreeMap<String, FeatureArray>,
    pub outputs: BTreeMap<String, FeatureArray>,
}

fn trailing(spec: &FeatureSpec) -> usize {
    match spec.probe {
        Probe::Categorical(c) => c,
        _ => 1,
    }
}

/// Copies one frame for `n` nodes into a zeroed frame for `n_max` nodes.
fn pad_frame(spec: &FeatureSpec, src: &[f64], n: usize, n_max: usize, dst: &mut [f64]) {
    let c = trailing(spec);
    match spec.location {
        Location::Graph => dst.copy_from_slice(src),
        Location::Node => dst[..n * c].copy_from_slice(src),
        Location::Edge => {
            for u in 0..n {
                dst[u * n_max * c..(u * n_max + n) * c].copy_from_slice(&src[u * n * c..(u + 1) * n * c]);
            }
        }
    }
}

fn unpad_frame(spec: &FeatureSpec, src: &[f64], n: usize, n_max: usize) -> Vec<f64> {
    let c = trailing(spec);
    match spec.location {
        Location::Graph => src.to_vec(),
        Location::Node => src[..n * c].to_vec(),
        Location::Edge => (0..n)
            .flat_map(|u| src[u * n_max * c..(u * n_max + n) * c].iter().copied())
            .collect(),
    }
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn stage(&self, stage: Stage) -> &BTreeMap<String, FeatureArray> {
        match stage {
            Stage::Input => &self.inputs,
            Stage::Hint => &self.hints,
            Stage::Output => &self.outputs,
        }
    }

    pub fn node_valid(&self, b: usize, i: usize) -> bool {
        self.node_mask[b * self.n_max + i] != 0.0
    }

    /// Inverse of [`batch`]; recovers the original trajectories bit-exactly.
    pub fn unbatch(&self) -> Vec<Trajectory> {
        let specs = spec_of(self.task);
        (0..self.len())
            .map(|b| {
                let (n, steps) = (self.sizes[b], self.steps[b]);
                let mut t = Trajectory {
                    task: self.task,
                    n,
                    steps,
                    inputs: BTreeMap::new(),
                    hints: BTreeMap::new(),
                    outputs: BTreeMap::new(),
                };
                for spec in &specs {
                    let arr = &self.stage(spec.stage)[spec.name];
                    let frame_len: usize = spec.frame_shape(self.n_max).iter().product();
                    let mut shape = spec.frame_shape(n);
                    let data = if spec.stage == Stage::Hint {
                        shape.insert(0, steps);
                        let base = b * self.t_max * frame_len;
                        (0..steps)
                            .flat_map(|s| {
                                let off = base + s * frame_len;
                                unpad_frame(spec, &arr.data[off..off + frame_len], n, self.n_max)
                            })
                            .collect()
                    } else {
                        let off = b * frame_len;
                        unpad_frame(spec, &arr.data[off..off + frame_len], n, self.n_max)
                    };
                    let map = match spec.stage {
                        Stage::Input => &mut t.inputs,
                        Stage::Hint => &mut t.hints,
                        Stage::Output => &mut t.outputs,
                    };
                    map.insert(spec.name.to_string(), FeatureArray::new(shape, data));
                }
                t
            })
            .collect()
    }
}

/// Pads trajectories of a single task into one batch.
pub fn batch(trajs: &[Trajectory]) -> Result<Batch> {
    let first = trajs.first().ok_or(TaskError::EmptyBatch)?;
    let task = first.task;
    if let Some(other) = trajs.iter().find(|t| t.task != task) {
        return Err(TaskError::MixedTasks(task.id(), other.task.id()));
    }
    let n_max = trajs.iter().map(|t| t.n).max().unwrap_or(0);
    let t_max = trajs.iter().map(|t| t.steps).max().unwrap_or(0);
    let bsz = trajs.len();

    let mut node_mask = vec![0.0; bsz * n_max];
    let mut step_mask = vec![0.0; bsz * t_max];
    for (b, t) in trajs.iter().enumerate() {
        node_mask[b * n_max..b * n_max + t.n].fill(1.0);
        step_mask[b * t_max..b * t_max + t.steps].fill(1.0);
    }

    let mut out = Batch {
        task,
        n_max,
        t_max,
        sizes: trajs.iter().map(|t| t.n).collect(),
        steps: trajs.iter().map(|t| t.steps).collect(),
        node_mask,
        step_mask,
        inputs: BTreeMap::new(),
        hints: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    for spec in spec_of(task) {
        let frame_shape = spec.frame_shape(n_max);
        let frame_len: usize = frame_shape.iter().product();
        let frames = if spec.stage == Stage::Hint { t_max } else { 1 };
        let mut data = vec![0.0; bsz * frames * frame_len];
        for (b, t) in trajs.iter().enumerate() {
            let arr = t.stage(spec.stage).get(spec.name).ok_or_else(|| {
                TaskError::Malformed(format!("trajectory {b} lacks feature `{}`", spec.name))
            })?;
            let src_len: usize = spec.frame_shape(t.n).iter().product();
            if arr.data.len() != src_len * if spec.stage == Stage::Hint { t.steps } else { 1 } {
                return Err(TaskError::Malformed(format!("feature `{}` of trajectory {b} has wrong size", spec.name)));
            }
            for s in 0..frames {
                let src_s = s.min(if spec.stage == Stage::Hint { t.steps - 1 } else { 0 });
                let src = &arr.data[src_s * src_len..(src_s + 1) * src_len];
                let off = (b * frames + s) * frame_len;
                pad_frame(&spec, src, t.n, n_max, &mut data[off..off + frame_len]);
            }
        }
        let mut shape = vec![bsz];
        if spec.stage == Stage::Hint {
            shape.push(t_max);
        }
        shape.extend(frame_shape);
        let map = match spec.stage {
            Stage::Input => &mut out.inputs,
            Stage::Hint => &mut out.hints,
            Stage::Output => &mut out.outputs,
        };
        map.insert(spec.name.to_string(), FeatureArray::new(shape, data));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::generate;

    #[test]
    fn pads_to_largest_trajectory() {
        let a = generate(Task::InsertionSort, 4, 1).unwrap();
        let b = generate(Task::InsertionSort, 6, 2).unwrap();
        let bt = batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!((bt.n_max, bt.t_max), (6, 6));
        assert_eq!(&bt.node_mask[..6], &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(&bt.node_mask[6..], &[1.0; 6]);
        assert_eq!(bt.unbatch(), vec![a, b]);
    }

    #[test]
    fn single_trajectory_is_a_trivial_wrap() {
        let a = generate(Task::Bfs, 5, 3).unwrap();
        let bt = batch(std::slice::from_ref(&a)).unwrap();
        assert_eq!(bt.inputs["adj"].data, a.inputs["adj"].data);
        assert_eq!(bt.hints["pi_h"].data, a.hints["pi_h"].data);
        assert!(bt.node_mask.iter().chain(&bt.step_mask).all(|&m| m == 1.0));
    }

    #[test]
    fn rejects_mixed_and_empty() {
        let a = generate(Task::Minimum, 4, 1).unwrap();
        let b = generate(Task::Heapsort, 4, 1).unwrap();
        assert!(matches!(batch(&[a, b]), Err(TaskError::MixedTasks(..))));
        assert!(matches!(batch(&[]), Err(TaskError::EmptyBatch)));
    }
}
