use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use harness::{Precision, TrainPlan};
use model::ModelConfig;
use taskgen::{read_ndjson, Task};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rnar-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn rnar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnar")).args(args).env_remove("RNAR_PRECISION").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_plan(dir: &Path) -> PathBuf {
    let plan = TrainPlan {
        task: Task::Minimum,
        n_train: 4,
        eval_sizes: vec![4, 5],
        batch_size: 4,
        train_steps: 4,
        eval_samples: 4,
        val_samples: 4,
        val_every: 2,
        precision: Precision::Double,
        model: ModelConfig {
            hidden_dim: 8,
            triplet_dim: 4,
            ..ModelConfig::default()
        },
        ..TrainPlan::default()
    };
    let p = dir.join("plan.json");
    fs::write(&p, serde_json::to_string(&plan).unwrap()).unwrap();
    p
}

/// Record JSON without timing and location fields.
fn stable(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            let o = v.as_object_mut().unwrap();
            for k in ["time_log", "wall_seconds", "checkpoint"] {
                o.remove(k);
            }
            v
        })
        .collect()
}

#[test]
fn gen_writes_capped_trajectories_deterministically() {
    let d = scratch("gen");
    let mut bytes = Vec::new();
    for rep in ["a", "b"] {
        let out = d.join(rep);
        let o = rnar(&["gen", "--task", "minimum", "--n", "8", "--count", "10", "--seed", "1", "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary = String::from_utf8_lossy(&o.stdout);
        assert!(summary.contains("10 trajectories") && summary.contains("max 8"), "{summary}");
        let file = out.join("minimum-n8-seed1-count10.ndjson");
        let trajs = read_ndjson(&file).unwrap();
        assert_eq!(trajs.len(), 10);
        assert!(trajs.iter().all(|t| t.steps <= 9));
        assert!(out.join("manifest.json").exists());
        bytes.push(fs::read(file).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    fs::remove_dir_all(d).unwrap();
}

#[test]
fn usage_errors_exit_with_two() {
    let o = rnar(&["gen", "--task", "bogo_sort", "--n", "8"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for t in Task::ALL {
        assert!(err.contains(t.id()), "{err}");
    }
    assert_eq!(rnar(&["gen", "--task", "minimum", "--n", "8", "--colour"]).status.code(), Some(2));
    assert_eq!(rnar(&["gen", "--task", "find_max_subarray", "--n", "2"]).status.code(), Some(2));
    assert_eq!(rnar(&["compare", "--task", "minimum", "--seeds", "1,2"]).status.code(), Some(2));

    let d = scratch("usage");
    let empty = d.join("empty.ndjson");
    fs::write(&empty, "").unwrap();
    assert_eq!(rnar(&["report", "--records", s(&empty)]).status.code(), Some(2));
    let bad = Command::new(env!("CARGO_BIN_EXE_rnar"))
        .args(["train", "--steps", "1", "--out", s(&d.join("t"))])
        .env("RNAR_PRECISION", "half")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    fs::remove_dir_all(d).unwrap();
}

#[test]
fn missing_input_files_are_runtime_failures() {
    let o = rnar(&["report", "--records", "/nonexistent/records.ndjson"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_manifest_reproduces_the_run() {
    let d = scratch("manifest");
    let plan = tiny_plan(&d);
    let (a, b) = (d.join("a"), d.join("b"));
    let o = rnar(&["train", "--config", s(&plan), "--seeds", "3,4", "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(a.join("seed-3/checkpoint/manifest.json").exists());
    let o = rnar(&["train", "--config", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ra = stable(&a.join("records.ndjson"));
    assert_eq!(ra.len(), 2);
    assert_eq!(ra, stable(&b.join("records.ndjson")));

    let e = d.join("e");
    let o = rnar(&["eval", "--run", s(&a), "--seed", "3", "--out", s(&e)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for l in &lines {
        let size = l["metrics"]["size"].as_u64().unwrap().to_string();
        assert_eq!(l["metrics"], ra[0]["metrics"][&size]);
    }
    assert!(e.join("manifest.json").exists());
    fs::remove_dir_all(d).unwrap();
}

#[test]
fn precision_comes_from_the_environment() {
    let d = scratch("precision");
    let o = Command::new(env!("CARGO_BIN_EXE_rnar"))
        .args(["train", "--task", "minimum", "--n", "4", "--steps", "1", "--batch", "2", "--out", s(&d)])
        .env("RNAR_PRECISION", "double")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = cli::Manifest::read(&d).unwrap();
    assert_eq!(m.precision, Precision::Double);
    assert_eq!(m.plan.eval_sizes, vec![4, 8]);
    fs::remove_dir_all(d).unwrap();
}

#[test]
fn report_tables_and_timing_plot() {
    let d = scratch("report");
    let plan = tiny_plan(&d);
    let c = d.join("c");
    let o = rnar(&["compare", "--task", "minimum", "--variants", "aggregators", "--seeds", "0,1,2", "--config", s(&plan), "--out", s(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = c.join("records.ndjson");
    let md = rnar(&["report", "--records", s(&records)]);
    let csv = rnar(&["report", "--records", s(&records), "--format", "csv"]);
    let md = String::from_utf8(md.stdout).unwrap();
    let csv = String::from_utf8(csv.stdout).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| Minimum")).collect();
    assert_eq!(rows.len(), 2, "{md}");
    assert!(rows.iter().all(|r| r.matches(" ± ").count() == 2));
    // every number in the markdown cells appears in the csv
    for row in &rows {
        for cell in row.split('|').skip(2).filter(|c| !c.trim().is_empty()) {
            let cell = cell.trim().trim_matches('*');
            let (mean, std) = cell.split_once("% ± ").unwrap();
            assert!(csv.contains(&format!(",{mean},{std},3")), "{cell} not in\n{csv}");
        }
    }
    assert_eq!(fs::read_to_string(c.join("table_n4.md")).unwrap() + "\n" + &fs::read_to_string(c.join("table_n5.md")).unwrap(), md);

    let t = d.join("t");
    let o = rnar(&["timing", "--task", "minimum,binary_search", "--config", s(&plan), "--steps", "6", "--every", "2", "--out", s(&t)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curves: Vec<cli::TimingCurve> = fs::read_to_string(t.join("timing.ndjson"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(curves.len(), 4);
    for c in &curves {
        assert_eq!(c.points.iter().map(|p| p.0).collect::<Vec<_>>(), [2, 4, 6]);
        assert!(c.points.windows(2).all(|w| w[1].1 > w[0].1));
    }
    let svg = rnar(&["report", "--records", s(&t.join("timing.ndjson")), "--layout", "timing-plot"]);
    let svg = String::from_utf8(svg.stdout).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains(r#"viewBox="0 0 800 500""#));
    assert_eq!(svg.matches("<polyline").count(), 4);
    // polylines are monotone in both coordinates (y grows downwards)
    for line in svg.lines().filter(|l| l.starts_with("<polyline")) {
        let pts: Vec<(f64, f64)> = line
            .split("points=\"")
            .nth(1)
            .unwrap()
            .trim_end_matches("\"/>")
            .split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect();
        assert!(pts.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1), "{line}");
    }
    fs::remove_dir_all(d).unwrap();
}

#[test]
fn verify_oracle_scope_passes() {
    let o = rnar(&["verify", "--scope", "oracle"]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS [oracle]")).count(), 11);
    assert!(out.contains("11 checks, 0 failed"));
}
