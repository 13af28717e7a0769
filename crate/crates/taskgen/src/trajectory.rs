use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Result, TaskError};
use crate::spec::{spec_of, FeatureSpec, Location, Probe, Stage, Task};

/// Row-major array of one feature. Pointers hold node indices as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl FeatureArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data)
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(vec![], vec![x])
    }

    /// Stacks equally shaped frames along a new leading axis.
    pub fn stack(frames: &[FeatureArray]) -> Self {
        let mut shape = vec![frames.len()];
        shape.extend_from_slice(&frames[0].shape);
        let data = frames.iter().flat_map(|f| f.data.iter().copied()).collect();
        Self::new(shape, data)
    }

    /// Frame `t` of an array with a leading step axis.
    pub fn frame(&self, t: usize) -> FeatureArray {
        let inner: usize = self.shape[1..].iter().product();
        FeatureArray::new(self.shape[1..].to_vec(), self.data[t * inner..(t + 1) * inner].to_vec())
    }

    fn to_json(&self) -> Value {
        fn nest(shape: &[usize], data: &[f64]) -> Value {
            match shape.split_first() {
                None => number(data[0]),
                Some((&len, rest)) => {
                    let inner: usize = rest.iter().product();
                    Value::Array((0..len).map(|i| nest(rest, &data[i * inner..(i + 1) * inner])).collect())
                }
            }
        }
        nest(&self.shape, &self.data)
    }

    fn from_json(v: &Value, shape: &[usize]) -> Result<Self> {
        fn flatten(v: &Value, shape: &[usize], out: &mut Vec<f64>) -> Result<()> {
            match shape.split_first() {
                None => out.push(v.as_f64().ok_or_else(|| TaskError::Malformed(format!("expected number, got {v}")))?),
                Some((&len, rest)) => {
                    let arr = v.as_array().filter(|a| a.len() == len).ok_or_else(|| {
                        TaskError::Malformed(format!("expected array of length {len}"))
                    })?;
                    for item in arr {
                        flatten(item, rest, out)?;
                    }
                }
            }
            Ok(())
        }
        let mut data = Vec::with_capacity(shape.iter().product());
        flatten(v, shape, &mut data)?;
        Ok(Self::new(shape.to_vec(), data))
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

/// One execution of an algorithm: inputs, per-step hints and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task: Task,
    pub n: usize,
    /// Number of hint frames.
    pub steps: usize,
    pub inputs: BTreeMap<String, FeatureArray>,
    /// Every hint has a leading axis of length `steps`.
    pub hints: BTreeMap<String, FeatureArray>,
    pub outputs: BTreeMap<String, FeatureArray>,
}

impl Trajectory {
    pub fn stage(&self, stage: Stage) -> &BTreeMap<String, FeatureArray> {
        match stage {
            Stage::Input => &self.inputs,
            Stage::Hint => &self.hints,
            Stage::Output => &self.outputs,
        }
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureArray> {
        self.inputs
            .get(name)
            .or_else(|| self.hints.get(name))
            .or_else(|| self.outputs.get(name))
    }

    pub fn to_json(&self) -> Value {
        let section = |m: &BTreeMap<String, FeatureArray>| {
            Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<Map<_, _>>())
        };
        json!({
            "task": self.task.id(),
            "n": self.n,
            "T": self.steps,
            "inputs": section(&self.inputs),
            "hints": section(&self.hints),
            "outputs": section(&self.outputs),
        })
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let field = |k: &str| v.get(k).ok_or_else(|| TaskError::Malformed(format!("missing field `{k}`")));
        let task: Task = field("task")?
            .as_str()
            .ok_or_else(|| TaskError::Malformed("`task` must be a string".into()))?
            .parse()?;
        let as_usize = |k: &str| -> Result<usize> {
            field(k)?
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| TaskError::Malformed(format!("`{k}` must be a non-negative integer")))
        };
        let n = as_usize("n")?;
        let steps = as_usize("T")?;
        let mut traj = Trajectory {
            task,
            n,
            steps,
            inputs: BTreeMap::new(),
            hints: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        for spec in spec_of(task) {
            let (key, map) = match spec.stage {
                Stage::Input => ("inputs", &mut traj.inputs),
                Stage::Hint => ("hints", &mut traj.hints),
                Stage::Output => ("outputs", &mut traj.outputs),
            };
            let raw = v
                .get(key)
                .and_then(|s| s.get(spec.name))
                .ok_or_else(|| TaskError::Malformed(format!("missing {key}.{}", spec.name)))?;
            let mut shape = spec.frame_shape(n);
            if spec.stage == Stage::Hint {
                shape.insert(0, steps);
            }
            map.insert(spec.name.to_string(), FeatureArray::from_json(raw, &shape)?);
        }
        Ok(traj)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(line)?)
    }

    /// Moves node `u` to storage slot `perm[u]` in every feature, `pos`
    /// included, and maps pointer values the same way.
    pub fn relabel(&self, perm: &[usize]) -> Result<Trajectory> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(TaskError::Malformed(format!("{perm:?} is not a permutation of {n} nodes")));
        }
        let mut out = self.clone();
        for spec in spec_of(self.task) {
            let src = &self.stage(spec.stage)[spec.name];
            let frames = if spec.stage == Stage::Hint { self.steps } else { 1 };
            let len = src.data.len() / frames;
            let c = len / spec.frame_shape(n).iter().take(match spec.location {
                Location::Node => 1,
                Location::Edge => 2,
                Location::Graph => 0,
            }).product::<usize>();
            let mut data = src.data.clone();
            for t in 0..frames {
                let (s, d) = (&src.data[t * len..(t + 1) * len], &mut data[t * len..(t + 1) * len]);
                match spec.location {
                    Location::Graph => {}
                    Location::Node => {
                        for u in 0..n {
                            for j in 0..c {
                                let x = s[u * c + j];
                                d[perm[u] * c + j] = if spec.probe == Probe::Pointer { perm[x as usize] as f64 } else { x };
                            }
                        }
                    }
                    Location::Edge => {
                        for u in 0..n {
                            for v in 0..n {
                                for j in 0..c {
                                    d[(perm[u] * n + perm[v]) * c + j] = s[(u * n + v) * c + j];
                                }
                            }
                        }
                    }
                }
            }
            let map = match spec.stage {
                Stage::Input => &mut out.inputs,
                Stage::Hint => &mut out.hints,
                Stage::Output => &mut out.outputs,
            };
            map.get_mut(spec.name).expect("present").data = data;
        }
        Ok(out)
    }

    /// Checks every schema and trajectory invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TaskError::Invariant(format!("{} n={}: {msg}", self.task, self.n)));
        if self.steps == 0 || self.steps > self.task.step_cap(self.n) {
            return bad(format!("T={} outside [1, {}]", self.steps, self.task.step_cap(self.n)));
        }
        let specs = spec_of(self.task);
        let expected = |stage| specs.iter().filter(|f| f.stage == stage).count();
        for stage in [Stage::Input, Stage::Hint, Stage::Output] {
            if self.stage(stage).len() != expected(stage) {
                return bad(format!("{stage:?} feature count {} != {}", self.stage(stage).len(), expected(stage)));
            }
        }
        for spec in &specs {
            let Some(arr) = self.stage(spec.stage).get(spec.name) else {
                return bad(format!("missing feature {}", spec.name));
            };
            let frames = if spec.stage == Stage::Hint { self.steps } else { 1 };
            let mut shape = spec.frame_shape(self.n);
            if spec.stage == Stage::Hint {
                shape.insert(0, self.steps);
            }
            if arr.shape != shape || arr.data.len() != shape.iter().product::<usize>() {
                return bad(format!("{} has shape {:?}, expected {shape:?}", spec.name, arr.shape));
            }
            let frame_len = arr.data.len() / frames;
            for (t, frame) in arr.data.chunks(frame_len.max(1)).enumerate() {
                if let Err(msg) = check_probe(spec, frame, self.n) {
                    return bad(format!("{} frame {t}: {msg}", spec.name));
                }
            }
        }
        let pos = &self.inputs["pos"].data;
        for (i, &p) in pos.iter().enumerate() {
            if p != i as f64 / self.n as f64 {
                return bad(format!("pos[{i}] = {p}"));
            }
        }
        for &(hint, out) in self.task.solution_hints() {
            let last = self.hints[hint].frame(self.steps - 1);
            if last.data != self.outputs[out].data {
                return bad(format!("final {hint} frame differs from {out}"));
            }
        }
        Ok(())
    }
}

fn check_probe(spec: &FeatureSpec, frame: &[f64], n: usize) -> std::result::Result<(), String> {
    if frame.iter().any(|x| !x.is_finite()) {
        return Err("non-finite value".into());
    }
    match spec.probe {
        Probe::Scalar => Ok(()),
        Probe::Mask => match frame.iter().find(|&&x| x != 0.0 && x != 1.0) {
            Some(x) => Err(format!("mask value {x}")),
            None => Ok(()),
        },
        Probe::MaskOne => {
            let ones = frame.iter().filter(|&&x| x == 1.0).count();
            let zeros = frame.iter().filter(|&&x| x == 0.0).count();
            if ones == 1 && ones + zeros == frame.len() {
                Ok(())
            } else {
                Err(format!("{ones} active nodes"))
            }
        }
        Probe::Categorical(c) => {
            for row in frame.chunks(c) {
                if row.iter().filter(|&&x| x == 1.0).count() != 1 {
                    return Err("categorical row is not one-hot".into());
                }
            }
            Ok(())
        }
        Probe::Pointer => match frame.iter().find(|&&x| x.fract() != 0.0 || x < 0.0 || x >= n as f64) {
            Some(x) => Err(format!("pointer value {x} outside [0, {n})")),
            None => Ok(()),
        },
    }
}

pub fn write_ndjson(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for t in trajs {
        writeln!(out, "{}", t.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ndjson(path: &Path) -> Result<Vec<Trajectory>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(Trajectory::from_json_line(&line)?);
        }
    }
    Ok(out)
}
