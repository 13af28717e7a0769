//! Input sampling, instrumented algorithm traces and plain reference
//! implementations.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TaskError};
use crate::spec::{spec_of, Stage, Task};
use crate::trajectory::{FeatureArray, Trajectory};

pub type Features = BTreeMap<String, FeatureArray>;

/// Minimum pairwise separation of sampled keys.
pub const KEY_SEPARATION: f64 = 1e-9;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the sampling stream for `(task, n, seed)`.
pub fn stream_seed(task: Task, n: usize, seed: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(((task.index() as u64) << 32) | n as u64))
}

fn sample_keys_from(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let keys: Vec<f64> = (0..n)
            .map(|_| loop {
                let x: f64 = rng.gen();
                if x > 0.0 {
                    break x;
                }
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] >= KEY_SEPARATION) {
            return keys;
        }
    }
}

/// `n` i.i.d. uniform(0, 1) values, pairwise separated by at least 1e-9.
pub fn sample_keys(n: usize, seed: u64) -> Vec<f64> {
    sample_keys_from(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn position_feature(n: usize) -> FeatureArray {
    FeatureArray::vector((0..n).map(|i| i as f64 / n as f64).collect())
}

fn one_hot(i: usize, n: usize) -> FeatureArray {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    FeatureArray::vector(v)
}

fn mask_of(bits: &[bool]) -> FeatureArray {
    FeatureArray::vector(bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

fn pointers(p: &[usize]) -> FeatureArray {
    FeatureArray::vector(p.iter().map(|&x| x as f64).collect())
}

/// Predecessor pointers of a list: the head points to itself.
fn list_pointers(order: &[usize]) -> FeatureArray {
    let mut pred = vec![0usize; order.len()];
    for (k, &node) in order.iter().enumerate() {
        pred[node] = if k == 0 { node } else { order[k - 1] };
    }
    pointers(&pred)
}

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Draws the inputs of one instance of `task` with `n` nodes.
pub fn sample_inputs(task: Task, n: usize, seed: u64) -> Result<Features> {
    task.check_size(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(task, n, seed));
    let mut f = Features::new();
    f.insert("pos".into(), position_feature(n));
    match task {
        Task::InsertionSort | Task::BubbleSort | Task::Heapsort | Task::Quicksort | Task::Quickselect | Task::Minimum => {
            f.insert("key".into(), FeatureArray::vector(sample_keys_from(&mut rng, n)));
        }
        Task::BinarySearch => {
            let mut keys = sample_keys_from(&mut rng, n);
            keys.sort_by(f64::total_cmp);
            let (lo, hi) = (keys[0], keys[n - 1]);
            let target = loop {
                let t = lo + rng.gen::<f64>() * (hi - lo);
                if t > lo && t < hi && !keys.contains(&t) {
                    break t;
                }
            };
            f.insert("key".into(), FeatureArray::vector(keys));
            f.insert("target".into(), FeatureArray::scalar(target));
        }
        Task::FindMaxSubarray => {
            let keys = sample_keys_from(&mut rng, n).into_iter().map(|u| 2.0 * u - 1.0).collect();
            f.insert("key".into(), FeatureArray::vector(keys));
        }
        Task::ActivitySelector => {
            let raw = sample_keys_from(&mut rng, 2 * n);
            let (start, finish): (Vec<f64>, Vec<f64>) =
                raw.chunks(2).map(|p| (p[0].min(p[1]), p[0].max(p[1]))).unzip();
            f.insert("start".into(), FeatureArray::vector(start));
            f.insert("finish".into(), FeatureArray::vector(finish));
        }
        Task::TaskScheduling => {
            let deadline = (0..n).map(|_| rng.gen_range(1..=n) as f64 / n as f64).collect();
            f.insert("deadline".into(), FeatureArray::vector(deadline));
            f.insert("profit".into(), FeatureArray::vector(sample_keys_from(&mut rng, n)));
        }
        Task::Bfs => {
            let p = (2.0 * (n as f64).ln() / n as f64).min(1.0);
            let mut adj = vec![0.0; n * n];
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen::<f64>() < p {
                        adj[u * n + v] = 1.0;
                        adj[v * n + u] = 1.0;
                    }
                }
            }
            // random spanning tree guarantees connectivity
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            for k in 1..n {
                let (u, v) = (perm[k], perm[rng.gen_range(0..k)]);
                adj[u * n + v] = 1.0;
                adj[v * n + u] = 1.0;
            }
            f.insert("adj".into(), FeatureArray::new(vec![n, n], adj));
            f.insert("source".into(), one_hot(rng.gen_range(0..n), n));
        }
    }
    Ok(f)
}

struct Recorder {
    frames: BTreeMap<&'static str, Vec<FeatureArray>>,
}

impl Recorder {
    fn new() -> Self {
        Self { frames: BTreeMap::new() }
    }

    fn frame(&mut self, values: Vec<(&'static str, FeatureArray)>) {
        for (name, v) in values {
            self.frames.entry(name).or_default().push(v);
        }
    }

    fn finish(self, task: Task, n: usize, inputs: Features, outputs: Features) -> Trajectory {
        let steps = self.frames.values().next().map_or(0, Vec::len);
        let hints = self
            .frames
            .into_iter()
            .map(|(k, v)| (k.to_string(), FeatureArray::stack(&v)))
            .collect();
        Trajectory {
            task,
            n,
            steps,
            inputs,
            hints,
            outputs,
        }
    }
}

struct Inputs<'a> {
    task: Task,
    f: &'a Features,
    n: usize,
}

impl<'a> Inputs<'a> {
    fn new(task: Task, f: &'a Features) -> Result<Self> {
        for spec in spec_of(task).iter().filter(|s| s.stage == Stage::Input) {
            if !f.contains_key(spec.name) {
                return Err(TaskError::InvalidInputs {
                    task: task.id(),
                    msg: format!("missing input `{}`", spec.name),
                });
            }
        }
        let n = f["pos"].data.len();
        task.check_size(n)?;
        Ok(Self { task, f, n })
    }

    fn vec(&self, name: &str) -> Result<&'a [f64]> {
        let d = &self.f[name].data;
        if d.len() != self.n && name != "adj" {
            return Err(TaskError::InvalidInputs {
                task: self.task.id(),
                msg: format!("`{name}` has {} values, expected {}", d.len(), self.n),
            });
        }
        Ok(d)
    }

    fn scalar(&self, name: &str) -> f64 {
        self.f[name].data[0]
    }
}

/// Lomuto partition of `a[p..=r]` by key; returns the pivot's final position.
fn partition(a: &mut [usize], key: &[f64], p: usize, r: usize) -> usize {
    let x = key[a[r]];
    let mut i = p;
    for j in p..r {
        if key[a[j]] <= x {
            a.swap(i, j);
            i += 1;
        }
    }
    a.swap(i, r);
    i
}

/// Sifts `a[start]` down a max-heap of size `end`; returns where it settled.
fn sift_down(a: &mut [usize], key: &[f64], start: usize, end: usize) -> usize {
    let mut root = start;
    loop {
        let mut child = 2 * root + 1;
        if child >= end {
            return root;
        }
        if child + 1 < end && key[a[child + 1]] > key[a[child]] {
            child += 1;
        }
        if key[a[root]] < key[a[child]] {
            a.swap(root, child);
            root = child;
        } else {
            return root;
        }
    }
}

fn sort_frame(a: &[usize], n: usize, cursors: [(&'static str, usize); 2]) -> Vec<(&'static str, FeatureArray)> {
    vec![
        ("pred_h", list_pointers(a)),
        (cursors[0].0, one_hot(cursors[0].1, n)),
        (cursors[1].0, one_hot(cursors[1].1, n)),
    ]
}

fn insertion_sort(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<usize>> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let mut a: Vec<usize> = (0..n).collect();
    rec.frame(sort_frame(&a, n, [("i", a[0]), ("j", a[0])]));
    for j in 1..n {
        let node = a[j];
        let mut k = j;
        while k > 0 && key[a[k - 1]] > key[node] {
            a[k] = a[k - 1];
            k -= 1;
        }
        a[k] = node;
        rec.frame(sort_frame(&a, n, [("i", node), ("j", a[j])]));
    }
    Ok(a)
}

fn bubble_sort(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<usize>> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let mut a: Vec<usize> = (0..n).collect();
    rec.frame(sort_frame(&a, n, [("i", a[0]), ("j", a[n - 1])]));
    for i in 0..n - 1 {
        let mut last = n - 1;
        for j in (i + 1..n).rev() {
            if key[a[j]] < key[a[j - 1]] {
                a.swap(j, j - 1);
                last = j - 1;
            }
        }
        rec.frame(sort_frame(&a, n, [("i", a[i]), ("j", a[last])]));
    }
    Ok(a)
}

fn heapsort(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<usize>> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let mut a: Vec<usize> = (0..n).collect();
    rec.frame(sort_frame(&a, n, [("i", a[n - 1]), ("j", a[0])]));
    for s in (0..n / 2).rev() {
        let at = sift_down(&mut a, key, s, n);
        rec.frame(sort_frame(&a, n, [("i", a[n - 1]), ("j", a[at])]));
    }
    for end in (1..n).rev() {
        a.swap(0, end);
        let at = sift_down(&mut a, key, 0, end);
        rec.frame(sort_frame(&a, n, [("i", a[end]), ("j", a[at])]));
    }
    Ok(a)
}

fn quicksort(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<usize>> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let mut a: Vec<usize> = (0..n).collect();
    let frame = |a: &[usize], lo: usize, hi: usize, pivot: usize| {
        vec![
            ("pred_h", list_pointers(a)),
            ("lo", one_hot(a[lo], n)),
            ("hi", one_hot(a[hi], n)),
            ("pivot", one_hot(a[pivot], n)),
        ]
    };
    rec.frame(frame(&a, 0, n - 1, n - 1));
    // explicit stack, left part first
    let mut stack = vec![(0usize, n - 1)];
    while let Some((p, r)) = stack.pop() {
        if p >= r {
            continue;
        }
        let q = partition(&mut a, key, p, r);
        rec.frame(frame(&a, p, r, q));
        stack.push((q + 1, r));
        if q > 0 {
            stack.push((p, q - 1));
        }
    }
    Ok(a)
}

fn quickselect(inp: &Inputs, rec: &mut Recorder) -> Result<usize> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let k = n / 2;
    let mut a: Vec<usize> = (0..n).collect();
    let frame = |alive: &[usize], pivot: usize, below: usize| {
        let mut bits = vec![false; n];
        alive.iter().for_each(|&i| bits[i] = true);
        vec![
            ("alive", mask_of(&bits)),
            ("pivot", one_hot(pivot, n)),
            ("rank_lo", FeatureArray::scalar(below as f64 / n as f64)),
        ]
    };
    rec.frame(frame(&a, a[n - 1], 0));
    let (mut p, mut r) = (0, n - 1);
    loop {
        let q = partition(&mut a, key, p, r);
        if q == k {
            rec.frame(frame(&a[q..=q], a[q], k));
            return Ok(a[q]);
        }
        if k < q {
            r = q - 1;
        } else {
            p = q + 1;
        }
        rec.frame(frame(&a[p..=r], a[q], p));
    }
}

fn binary_search(inp: &Inputs, rec: &mut Recorder) -> Result<usize> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let target = inp.scalar("target");
    let frame = |lo: usize, hi: usize| vec![("lo", one_hot(lo, n)), ("hi", one_hot(hi, n)), ("mid", one_hot((lo + hi) / 2, n))];
    let (mut lo, mut hi) = (0, n - 1);
    rec.frame(frame(lo, hi));
    while lo < hi {
        let mid = (lo + hi) / 2;
        if key[mid] < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
        rec.frame(frame(lo, hi));
    }
    Ok(lo)
}

fn minimum(inp: &Inputs, rec: &mut Recorder) -> Result<usize> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let mut best = 0;
    rec.frame(vec![("min_h", one_hot(0, n)), ("cursor", one_hot(0, n))]);
    for i in 1..n {
        if key[i] < key[best] {
            best = i;
        }
        rec.frame(vec![("min_h", one_hot(best, n)), ("cursor", one_hot(i, n))]);
    }
    Ok(best)
}

fn find_max_subarray(inp: &Inputs, rec: &mut Recorder) -> Result<(usize, usize)> {
    let (key, n) = (inp.vec("key")?, inp.n);
    let (mut best_start, mut best_end, mut best_sum) = (0, 0, key[0]);
    let (mut cur_start, mut cur_sum) = (0, key[0]);
    let frame = |bs, be, cs, bsum: f64, csum: f64| {
        vec![
            ("best_start", one_hot(bs, n)),
            ("best_end", one_hot(be, n)),
            ("cur_start", one_hot(cs, n)),
            ("best_sum", FeatureArray::scalar(bsum)),
            ("cur_sum", FeatureArray::scalar(csum)),
        ]
    };
    rec.frame(frame(best_start, best_end, cur_start, best_sum, cur_sum));
    for (i, &k) in key.iter().enumerate().take(n).skip(1) {
        if cur_sum <= 0.0 {
            cur_start = i;
            cur_sum = k;
        } else {
            cur_sum += k;
        }
        if cur_sum > best_sum {
            (best_start, best_end, best_sum) = (cur_start, i, cur_sum);
        }
        rec.frame(frame(best_start, best_end, cur_start, best_sum, cur_sum));
    }
    Ok((best_start, best_end))
}

fn activity_selector(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<bool>> {
    let (start, finish, n) = (inp.vec("start")?, inp.vec("finish")?, inp.n);
    let order = argsort(finish);
    let mut selected = vec![false; n];
    selected[order[0]] = true;
    let mut last = finish[order[0]];
    rec.frame(vec![("selected_h", mask_of(&selected)), ("cursor", one_hot(order[0], n))]);
    for &i in &order[1..] {
        if start[i] >= last {
            selected[i] = true;
            last = finish[i];
        }
        rec.frame(vec![("selected_h", mask_of(&selected)), ("cursor", one_hot(i, n))]);
    }
    Ok(selected)
}

fn integer_deadlines(inp: &Inputs) -> Result<Vec<usize>> {
    let n = inp.n;
    inp.vec("deadline")?
        .iter()
        .map(|&d| {
            let k = (d * n as f64).round();
            if k < 1.0 || k > n as f64 {
                Err(TaskError::InvalidInputs {
                    task: inp.task.id(),
                    msg: format!("deadline {d} is not in {{1..n}}/n"),
                })
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// True if unit tasks with these deadlines can all meet them.
fn schedulable(deadlines: impl Iterator<Item = usize>, n: usize) -> bool {
    let mut count = vec![0usize; n + 1];
    for d in deadlines {
        count[d.min(n)] += 1;
    }
    let mut total = 0;
    (1..=n).all(|t| {
        total += count[t];
        total <= t
    })
}

fn profit_order(profit: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..profit.len()).collect();
    order.sort_by(|&a, &b| profit[b].total_cmp(&profit[a]).then(a.cmp(&b)));
    order
}

fn task_scheduling(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<bool>> {
    let n = inp.n;
    let deadline = integer_deadlines(inp)?;
    let order = profit_order(inp.vec("profit")?);
    let mut accepted = vec![false; n];
    for (k, &i) in order.iter().enumerate() {
        let candidate = (0..n).filter(|&j| accepted[j] || j == i).map(|j| deadline[j]);
        if schedulable(candidate, n) {
            accepted[i] = true;
        }
        debug_assert!(k > 0 || accepted[i]);
        rec.frame(vec![("accepted_h", mask_of(&accepted)), ("cursor", one_hot(i, n))]);
    }
    Ok(accepted)
}

fn adjacency<'a>(inp: &Inputs<'a>) -> Result<&'a [f64]> {
    let adj = inp.vec("adj")?;
    if adj.len() != inp.n * inp.n {
        return Err(TaskError::InvalidInputs {
            task: inp.task.id(),
            msg: "adjacency must be n x n".into(),
        });
    }
    Ok(adj)
}

fn source_node(inp: &Inputs) -> Result<usize> {
    inp.vec("source")?
        .iter()
        .position(|&x| x == 1.0)
        .ok_or_else(|| TaskError::InvalidInputs {
            task: inp.task.id(),
            msg: "source has no active node".into(),
        })
}

fn bfs(inp: &Inputs, rec: &mut Recorder) -> Result<Vec<usize>> {
    let n = inp.n;
    let adj = adjacency(inp)?;
    let s = source_node(inp)?;
    let mut pi: Vec<usize> = (0..n).collect();
    let mut visited = vec![false; n];
    visited[s] = true;
    let mut frontier = vec![s];
    let frame = |front: &[usize], visited: &[bool], pi: &[usize]| {
        let mut bits = vec![false; n];
        front.iter().for_each(|&u| bits[u] = true);
        vec![("frontier", mask_of(&bits)), ("visited", mask_of(visited)), ("pi_h", pointers(pi))]
    };
    rec.frame(frame(&frontier, &visited, &pi));
    // level by level, each level kept in discovery order (FIFO queue order)
    loop {
        let mut next = Vec::new();
        for &u in &frontier {
            for v in 0..n {
                if adj[u * n + v] != 0.0 && !visited[v] {
                    visited[v] = true;
                    pi[v] = u;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        rec.frame(frame(&next, &visited, &pi));
        frontier = next;
    }
    Ok(pi)
}

fn sorted_output(order: &[usize]) -> Features {
    Features::from([("pred".to_string(), list_pointers(order))])
}

/// Runs the instrumented algorithm on `inputs`, one hint frame per iteration.
pub fn trace(task: Task, inputs: Features) -> Result<Trajectory> {
    let inp = Inputs::new(task, &inputs)?;
    let n = inp.n;
    let mut rec = Recorder::new();
    let outputs = match task {
        Task::InsertionSort => sorted_output(&insertion_sort(&inp, &mut rec)?),
        Task::BubbleSort => sorted_output(&bubble_sort(&inp, &mut rec)?),
        Task::Heapsort => sorted_output(&heapsort(&inp, &mut rec)?),
        Task::Quicksort => sorted_output(&quicksort(&inp, &mut rec)?),
        Task::Quickselect => Features::from([("median".into(), one_hot(quickselect(&inp, &mut rec)?, n))]),
        Task::BinarySearch => Features::from([("return".into(), one_hot(binary_search(&inp, &mut rec)?, n))]),
        Task::Minimum => Features::from([("min_out".into(), one_hot(minimum(&inp, &mut rec)?, n))]),
        Task::FindMaxSubarray => {
            let (s, e) = find_max_subarray(&inp, &mut rec)?;
            Features::from([("start".into(), one_hot(s, n)), ("end".into(), one_hot(e, n))])
        }
        Task::ActivitySelector => Features::from([("selected".into(), mask_of(&activity_selector(&inp, &mut rec)?))]),
        Task::TaskScheduling => Features::from([("accepted".into(), mask_of(&task_scheduling(&inp, &mut rec)?))]),
        Task::Bfs => Features::from([("pi".into(), pointers(&bfs(&inp, &mut rec)?))]),
    };
    Ok(rec.finish(task, n, inputs, outputs))
}

/// Samples inputs for `(task, n, seed)` and traces them.
pub fn generate(task: Task, n: usize, seed: u64) -> Result<Trajectory> {
    trace(task, sample_inputs(task, n, seed)?)
}

/// Generates one instance, validates every trajectory invariant and compares
/// its outputs with [`reference_output`].
pub fn check_instance(task: Task, n: usize, seed: u64) -> Result<Trajectory> {
    let t = generate(task, n, seed)?;
    t.validate()?;
    if reference_output(task, &t.inputs)? != t.outputs {
        return Err(TaskError::Invariant(format!("{task} n={n} seed={seed}: output differs from reference")));
    }
    Ok(t)
}

/// Plain, uninstrumented result of `task` on `inputs`.
pub fn reference_output(task: Task, inputs: &Features) -> Result<Features> {
    let inp = Inputs::new(task, inputs)?;
    let n = inp.n;
    Ok(match task {
        Task::InsertionSort | Task::BubbleSort | Task::Heapsort | Task::Quicksort => sorted_output(&argsort(inp.vec("key")?)),
        Task::Quickselect => {
            let mut idx = argsort(inp.vec("key")?);
            Features::from([("median".into(), one_hot(idx.swap_remove(n / 2), n))])
        }
        Task::BinarySearch => {
            let (key, target) = (inp.vec("key")?, inp.scalar("target"));
            let at = key.iter().position(|&k| k >= target).unwrap_or(n - 1);
            Features::from([("return".into(), one_hot(at, n))])
        }
        Task::Minimum => {
            let key = inp.vec("key")?;
            let at = (0..n).fold(0, |b, i| if key[i] < key[b] { i } else { b });
            Features::from([("min_out".into(), one_hot(at, n))])
        }
        Task::FindMaxSubarray => {
            let key = inp.vec("key")?;
            let mut best = (0, 0, f64::NEG_INFINITY);
            for s in 0..n {
                let mut acc = 0.0;
                for (e, &k) in key.iter().enumerate().skip(s) {
                    acc = if e == s { k } else { acc + k };
                    if acc > best.2 {
                        best = (s, e, acc);
                    }
                }
            }
            Features::from([("start".into(), one_hot(best.0, n)), ("end".into(), one_hot(best.1, n))])
        }
        Task::ActivitySelector => {
            let (start, finish) = (inp.vec("start")?, inp.vec("finish")?);
            let mut selected = vec![false; n];
            let mut last = f64::NEG_INFINITY;
            for i in argsort(finish) {
                if start[i] >= last {
                    selected[i] = true;
                    last = finish[i];
                }
            }
            Features::from([("selected".into(), mask_of(&selected))])
        }
        Task::TaskScheduling => {
            let deadline = integer_deadlines(&inp)?;
            let mut chosen: Vec<usize> = Vec::new();
            for i in profit_order(inp.vec("profit")?) {
                chosen.push(i);
                if !schedulable(chosen.iter().map(|&j| deadline[j]), n) {
                    chosen.pop();
                }
            }
            let mut accepted = vec![false; n];
            chosen.iter().for_each(|&i| accepted[i] = true);
            Features::from([("accepted".into(), mask_of(&accepted))])
        }
        Task::Bfs => {
            let adj = adjacency(&inp)?;
            let s = source_node(&inp)?;
            let mut pi: Vec<usize> = (0..n).collect();
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if adj[u * n + v] != 0.0 && !seen[v] {
                        seen[v] = true;
                        pi[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            Features::from([("pi".into(), pointers(&pi))])
        }
    })
}
