//! Micro-F1 over final output features.
//!
//! Exclusive probes (pointer, mask_one, categorical) score exact matches per
//! element, which is accuracy. Masks score F1 of the positive class with
//! counts pooled over nodes and trajectories. Scalars count as correct within
//! an absolute tolerance of 0.01.

use serde::{Deserialize, Serialize};
use taskgen::{FeatureSpec, Location, Probe};

use crate::error::{HarnessError, Result};

pub const SCALAR_TOL: f64 = 0.01;

/// Pooled counts of one feature over an evaluation set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Counts {
    pub correct: u64,
    pub total: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl F1Counts {
    /// Adds one trajectory. `pred` and `target` hold one frame of the
    /// feature; `valid` marks real nodes (padding is ignored).
    pub fn add(&mut self, spec: &FeatureSpec, pred: &[f64], target: &[f64], valid: &[bool]) {
        let n = valid.len();
        match spec.probe {
            Probe::Mask => {
                for u in (0..n).filter(|&u| valid[u]) {
                    match (pred[u] == 1.0, target[u] == 1.0) {
                        (true, true) => self.tp += 1,
                        (true, false) => self.fp += 1,
                        (false, true) => self.fn_ += 1,
                        (false, false) => {}
                    }
                    self.total += 1;
                }
            }
            Probe::MaskOne => {
                let pick = |v: &[f64]| (0..n).filter(|&u| valid[u]).find(|&u| v[u] == 1.0);
                self.total += 1;
                if pick(pred).is_some() && pick(pred) == pick(target) {
                    self.correct += 1;
                }
            }
            Probe::Pointer => {
                for u in (0..n).filter(|&u| valid[u]) {
                    self.total += 1;
                    if pred[u] == target[u] {
                        self.correct += 1;
                    }
                }
            }
            Probe::Categorical(c) => {
                let rows: Vec<usize> = match spec.location {
                    Location::Graph => vec![0],
                    _ => (0..n).filter(|&u| valid[u]).collect(),
                };
                for r in rows {
                    self.total += 1;
                    if argmax(&pred[r * c..(r + 1) * c]) == argmax(&target[r * c..(r + 1) * c]) {
                        self.correct += 1;
                    }
                }
            }
            Probe::Scalar => {
                let items: Vec<usize> = match spec.location {
                    Location::Graph => vec![0],
                    _ => (0..n).filter(|&u| valid[u]).collect(),
                };
                for i in items {
                    self.total += 1;
                    if (pred[i] - target[i]).abs() <= SCALAR_TOL {
                        self.correct += 1;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: &F1Counts) {
        self.correct += other.correct;
        self.total += other.total;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn score(&self, spec: &FeatureSpec) -> Result<f64> {
        if self.total == 0 {
            return Err(HarnessError::EmptyEvaluation);
        }
        Ok(match spec.probe {
            Probe::Mask => f1(self.tp, self.fp, self.fn_),
            _ => self.correct as f64 / self.total as f64,
        })
    }
}

/// Micro-F1 of one feature over a set of trajectories.
pub fn micro_f1(preds: &[Vec<f64>], targets: &[Vec<f64>], spec: &FeatureSpec, masks: &[Vec<bool>]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() || preds.len() != masks.len() {
        return Err(HarnessError::EmptyEvaluation);
    }
    let mut c = F1Counts::default();
    for ((p, t), m) in preds.iter().zip(targets).zip(masks) {
        c.add(spec, p, t, m);
    }
    c.score(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use taskgen::Stage;

    const MASK: FeatureSpec = FeatureSpec::new("m", Stage::Output, Location::Node, Probe::Mask);
    const PTR: FeatureSpec = FeatureSpec::new("p", Stage::Output, Location::Node, Probe::Pointer);

    #[test]
    fn f1_formula() {
        assert_eq!(f1(3, 1, 1), 0.75);
        assert_eq!(f1(0, 0, 0), 1.0);
    }

    #[test]
    fn mask_counts_pool_across_trajectories() {
        // trajectory 1: tp 2, fp 1; trajectory 2: tp 1, fn 1
        let preds = vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 0.0]];
        let targets = vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 1.0]];
        let masks = vec![vec![true; 4], vec![true; 2]];
        assert_eq!(micro_f1(&preds, &targets, &MASK, &masks).unwrap(), 0.75);
    }

    #[test]
    fn pointer_accuracy_and_padding() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut p = t.clone();
        p[3] = 0.0;
        assert_eq!(micro_f1(&[p.clone()], std::slice::from_ref(&t), &PTR, &[vec![true; 10]]).unwrap(), 0.9);
        let mut valid = vec![true; 10];
        valid[3] = false;
        assert_eq!(micro_f1(&[p], &[t], &PTR, &[valid]).unwrap(), 1.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(micro_f1(&[], &[], &PTR, &[]), Err(HarnessError::EmptyEvaluation)));
        assert!(micro_f1(&[vec![]], &[vec![]], &PTR, &[vec![]]).is_err());
    }

    #[test]
    fn scalar_tolerance() {
        let s = FeatureSpec::new("s", Stage::Output, Location::Graph, Probe::Scalar);
        assert_eq!(micro_f1(&[vec![0.505]], &[vec![0.5]], &s, &[vec![true; 3]]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[vec![0.52]], &[vec![0.5]], &s, &[vec![true; 3]]).unwrap(), 0.0);
    }
}
