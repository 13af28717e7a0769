//! Task identifiers and the typed feature schema of every task.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TaskError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InsertionSort,
    BubbleSort,
    Heapsort,
    Quicksort,
    Quickselect,
    BinarySearch,
    Minimum,
    FindMaxSubarray,
    ActivitySelector,
    TaskScheduling,
    Bfs,
}

impl Task {
    pub const ALL: [Task; 11] = [
        Task::InsertionSort,
        Task::BubbleSort,
        Task::Heapsort,
        Task::Quicksort,
        Task::Quickselect,
        Task::BinarySearch,
        Task::Minimum,
        Task::FindMaxSubarray,
        Task::ActivitySelector,
        Task::TaskScheduling,
        Task::Bfs,
    ];

    /// The ten sequential tasks reported in the main comparison table.
    pub const SEQUENTIAL: [Task; 10] = [
        Task::ActivitySelector,
        Task::BinarySearch,
        Task::BubbleSort,
        Task::FindMaxSubarray,
        Task::Heapsort,
        Task::InsertionSort,
        Task::Minimum,
        Task::Quickselect,
        Task::Quicksort,
        Task::TaskScheduling,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Task::InsertionSort => "insertion_sort",
            Task::BubbleSort => "bubble_sort",
            Task::Heapsort => "heapsort",
            Task::Quicksort => "quicksort",
            Task::Quickselect => "quickselect",
            Task::BinarySearch => "binary_search",
            Task::Minimum => "minimum",
            Task::FindMaxSubarray => "find_max_subarray",
            Task::ActivitySelector => "activity_selector",
            Task::TaskScheduling => "task_scheduling",
            Task::Bfs => "bfs",
        }
    }

    pub fn index(self) -> usize {
        Task::ALL.iter().position(|&t| t == self).expect("listed")
    }

    pub fn min_nodes(self) -> usize {
        match self {
            Task::FindMaxSubarray => 3,
            _ => 2,
        }
    }

    pub fn is_sorting(self) -> bool {
        matches!(self, Task::InsertionSort | Task::BubbleSort | Task::Heapsort | Task::Quicksort)
    }

    /// Upper bound on the number of hint frames for `n` nodes.
    pub fn step_cap(self, n: usize) -> usize {
        let log2 = if n <= 1 { 0 } else { (usize::BITS - (n - 1).leading_zeros()) as usize };
        match self {
            Task::InsertionSort | Task::BubbleSort => n * n,
            Task::Heapsort | Task::Quicksort | Task::Quickselect => 4 * n * log2 + n,
            Task::BinarySearch => log2 + 1,
            _ => n + 1,
        }
    }

    /// `(hint, output)` pairs whose last hint frame must equal the output.
    pub fn solution_hints(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Task::InsertionSort | Task::BubbleSort | Task::Heapsort | Task::Quicksort => &[("pred_h", "pred")],
            Task::Quickselect => &[("pivot", "median")],
            Task::BinarySearch => &[("mid", "return")],
            Task::Minimum => &[("min_h", "min_out")],
            Task::FindMaxSubarray => &[("best_start", "start"), ("best_end", "end")],
            Task::ActivitySelector => &[("selected_h", "selected")],
            Task::TaskScheduling => &[("accepted_h", "accepted")],
            Task::Bfs => &[("pi_h", "pi")],
        }
    }

    pub fn valid_ids() -> String {
        Task::ALL.iter().map(|t| t.id()).collect::<Vec<_>>().join(", ")
    }

    pub fn check_size(self, n: usize) -> Result<()> {
        if n < self.min_nodes() {
            return Err(TaskError::TooFewNodes {
                task: self.id(),
                n,
                min: self.min_nodes(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Task {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.id() == s)
            .ok_or_else(|| TaskError::UnknownTask {
                name: s.to_string(),
                valid: Task::valid_ids(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Hint,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Node,
    Edge,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Scalar,
    Mask,
    MaskOne,
    Categorical(usize),
    Pointer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub stage: Stage,
    pub location: Location,
    pub probe: Probe,
}

impl FeatureSpec {
    pub const fn new(name: &'static str, stage: Stage, location: Location, probe: Probe) -> Self {
        Self {
            name,
            stage,
            location,
            probe,
        }
    }

    /// Shape of one frame of this feature for `n` nodes.
    pub fn frame_shape(&self, n: usize) -> Vec<usize> {
        let mut shape = match self.location {
            Location::Node => vec![n],
            Location::Edge => vec![n, n],
            Location::Graph => vec![],
        };
        if let Probe::Categorical(c) = self.probe {
            shape.push(c);
        }
        shape
    }
}

use Location::{Edge, Graph, Node};
use Probe::{Mask, MaskOne, Pointer, Scalar};
use Stage::{Hint, Input, Output};

const POS: FeatureSpec = FeatureSpec::new("pos", Input, Node, Scalar);
const KEY: FeatureSpec = FeatureSpec::new("key", Input, Node, Scalar);
const PRED: FeatureSpec = FeatureSpec::new("pred", Output, Node, Pointer);
const PRED_H: FeatureSpec = FeatureSpec::new("pred_h", Hint, Node, Pointer);

const fn cursor(name: &'static str) -> FeatureSpec {
    FeatureSpec::new(name, Hint, Node, MaskOne)
}

/// Feature schema of `task`, in a fixed order.
pub fn spec_of(task: Task) -> Vec<FeatureSpec> {
    match task {
        Task::InsertionSort | Task::BubbleSort | Task::Heapsort => {
            vec![POS, KEY, PRED, PRED_H, cursor("i"), cursor("j")]
        }
        Task::Quicksort => vec![POS, KEY, PRED, PRED_H, cursor("lo"), cursor("hi"), cursor("pivot")],
        Task::Quickselect => vec![
            POS,
            KEY,
            FeatureSpec::new("median", Output, Node, MaskOne),
            FeatureSpec::new("alive", Hint, Node, Mask),
            cursor("pivot"),
            FeatureSpec::new("rank_lo", Hint, Graph, Scalar),
        ],
        Task::BinarySearch => vec![
            POS,
            KEY,
            FeatureSpec::new("target", Input, Graph, Scalar),
            FeatureSpec::new("return", Output, Node, MaskOne),
            cursor("lo"),
            cursor("hi"),
            cursor("mid"),
        ],
        Task::Minimum => vec![
            POS,
            KEY,
            FeatureSpec::new("min_out", Output, Node, MaskOne),
            cursor("min_h"),
            cursor("cursor"),
        ],
        Task::FindMaxSubarray => vec![
            POS,
            KEY,
            FeatureSpec::new("start", Output, Node, MaskOne),
            FeatureSpec::new("end", Output, Node, MaskOne),
            cursor("best_start"),
            cursor("best_end"),
            cursor("cur_start"),
            FeatureSpec::new("best_sum", Hint, Graph, Scalar),
            FeatureSpec::new("cur_sum", Hint, Graph, Scalar),
        ],
        Task::ActivitySelector => vec![
            POS,
            FeatureSpec::new("start", Input, Node, Scalar),
            FeatureSpec::new("finish", Input, Node, Scalar),
            FeatureSpec::new("selected", Output, Node, Mask),
            FeatureSpec::new("selected_h", Hint, Node, Mask),
            cursor("cursor"),
        ],
        Task::TaskScheduling => vec![
            POS,
            FeatureSpec::new("deadline", Input, Node, Scalar),
            FeatureSpec::new("profit", Input, Node, Scalar),
            FeatureSpec::new("accepted", Output, Node, Mask),
            FeatureSpec::new("accepted_h", Hint, Node, Mask),
            cursor("cursor"),
        ],
        Task::Bfs => vec![
            POS,
            FeatureSpec::new("adj", Input, Edge, Mask),
            FeatureSpec::new("source", Input, Node, MaskOne),
            FeatureSpec::new("pi", Output, Node, Pointer),
            FeatureSpec::new("frontier", Hint, Node, Mask),
            FeatureSpec::new("visited", Hint, Node, Mask),
            FeatureSpec::new("pi_h", Hint, Node, Pointer),
        ],
    }
}

/// Looks up one feature of `task` by name.
pub fn feature_spec(task: Task, name: &str) -> Option<FeatureSpec> {
    spec_of(task).into_iter().find(|f| f.name == name)
}
