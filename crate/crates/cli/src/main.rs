use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cli::manifest::{load_config, Manifest};
use cli::report::{csv, markdown, timing_svg, TimingCurve};
use diffcore::{ParamStore, Real};
use harness::{
    append_records, compare_aggregators, display_name, evaluate, oracle_suite, read_records, summarize, timing_curve, train, Metrics, Precision,
    TrainOptions, TrainPlan, Variants,
};
use model::verify::{grad_suite, perm_suite, Check};
use model::{Aggregator, Base};
use taskgen::{generate, write_ndjson, Task};

#[derive(Parser)]
#[command(name = "rnar", version, about = "Neural algorithmic reasoning workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct PlanFlags {
    /// Training plan JSON, `{model, optimizer}` config, or a run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    aggregator: Option<Aggregator>,
    #[arg(long)]
    base: Option<Base>,
    #[arg(long = "janossy-k")]
    janossy_k: Option<usize>,
    #[arg(long = "no-pos")]
    no_pos: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Grad,
    Perm,
    Oracle,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Table,
    TimingPlot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate trajectories as NDJSON.
    Gen {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Trajectory i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train one config with one or more seeds.
    Train {
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Evaluate the checkpoints of a training run.
    Eval {
        /// Output directory of `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        count: Option<usize>,
        /// Seed of the run to evaluate (default: all).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a matrix of configs over several seeds and tabulate.
    Compare {
        #[arg(long, value_parser = parse_task, value_delimiter = ',')]
        task: Vec<Task>,
        #[arg(long, default_value = "aggregators")]
        variants: Variants,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Cumulative training time per config.
    Timing {
        #[arg(long, value_parser = parse_task, value_delimiter = ',')]
        task: Vec<Task>,
        #[arg(long, default_value = "aggregators")]
        variants: Variants,
        /// Step spacing of the measured points.
        #[arg(long, default_value_t = 10)]
        every: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long, default_value = "runs/timing")]
        out: PathBuf,
    },
    /// Run the verification suites.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        scope: Scope,
    },
    /// Render run records as tables or timing curves as SVG.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        layout: Layout,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse::<Task>().map_err(|e| e.to_string())
}

enum Fail {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Runtime(e.into())
    }
}

type Res<T> = Result<T, Fail>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Fail::Usage(msg.into()))
}

fn precision_override() -> Res<Option<Precision>> {
    match std::env::var("RNAR_PRECISION") {
        Ok(v) => match v.parse() {
            Ok(p) => Ok(Some(p)),
            Err(e) => usage(format!("RNAR_PRECISION: {e}")),
        },
        Err(_) => Ok(None),
    }
}

/// Config file, then flags, then the environment.
fn resolve_plan(task: Option<Task>, f: &PlanFlags) -> Res<(TrainPlan, Vec<u64>)> {
    let (mut plan, seeds) = match &f.config {
        Some(p) => load_config(p).map_err(|e| Fail::Usage(format!("{}: {e:#}", p.display())))?,
        None => (TrainPlan::default(), Vec::new()),
    };
    if let Some(t) = task {
        plan.task = t;
    }
    if let Some(n) = f.n {
        plan.n_train = n;
        if f.sizes.is_none() && f.config.is_none() {
            plan.eval_sizes = vec![n, 2 * n];
        }
    }
    if let Some(s) = &f.sizes {
        plan.eval_sizes = s.clone();
    }
    if let Some(s) = f.steps {
        plan.train_steps = s;
    }
    if let Some(b) = f.batch {
        plan.batch_size = b;
    }
    let m = &mut plan.model;
    if let Some(a) = f.aggregator {
        m.aggregator = a;
    }
    if let Some(b) = f.base {
        m.base = b;
    }
    if let Some(k) = f.janossy_k {
        m.janossy_k = k;
    }
    if f.no_pos {
        m.use_pos = false;
    }
    if let Some(p) = precision_override()? {
        plan.precision = p;
    }
    plan.validate().map_err(|e| Fail::Usage(e.to_string()))?;
    Ok((plan, seeds))
}

fn cmd_gen(task: Task, n: usize, count: usize, seed: u64, out: &Path) -> Res<()> {
    if let Err(e) = task.check_size(n) {
        return usage(e.to_string());
    }
    if count == 0 {
        return usage("--count must be positive");
    }
    let trajs = (0..count as u64)
        .map(|i| generate(task, n, seed.wrapping_add(i)))
        .collect::<taskgen::Result<Vec<_>>>()?;
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let file = out.join(format!("{task}-n{n}-seed{seed}-count{count}.ndjson"));
    write_ndjson(&file, &trajs)?;
    let plan = TrainPlan {
        task,
        n_train: n,
        eval_sizes: vec![n],
        ..TrainPlan::default()
    };
    let mut m = Manifest::new("gen", &plan, &[seed]);
    m.count = Some(count);
    m.write(out)?;
    let steps: Vec<usize> = trajs.iter().map(|t| t.steps).collect();
    let mean = steps.iter().sum::<usize>() as f64 / steps.len() as f64;
    println!(
        "{task} n={n}: {count} trajectories -> {}; T min {} mean {mean:.2} max {} (cap {})",
        file.display(),
        steps.iter().min().unwrap(),
        steps.iter().max().unwrap(),
        task.step_cap(n)
    );
    Ok(())
}

fn summary_line(r: &harness::RunRecord) -> String {
    let scores: Vec<String> = r.metrics.values().map(|m| format!("n={} {:.4}", m.size, m.score)).collect();
    format!(
        "{} {} seed {}: {} (best step {}, validation {:.4}, {:.0}s)",
        r.name,
        r.plan.task,
        r.seed,
        scores.join(", "),
        r.best_step,
        r.best_val_score,
        r.wall_seconds
    )
}

fn cmd_train(task: Option<Task>, seed: Option<u64>, seeds: Option<Vec<u64>>, flags: &PlanFlags, out: &Path) -> Res<()> {
    let (plan, config_seeds) = resolve_plan(task, flags)?;
    let seeds = match (seed, seeds) {
        (Some(s), _) => vec![s],
        (None, Some(s)) if !s.is_empty() => s,
        _ if !config_seeds.is_empty() => config_seeds,
        _ => vec![0],
    };
    Manifest::new("train", &plan, &seeds).write(out)?;
    let records_path = out.join("records.ndjson");
    for &s in &seeds {
        let dir = out.join(format!("seed-{s}"));
        let r = train(
            &plan,
            s,
            &TrainOptions {
                out_dir: Some(&dir),
                verbose: true,
            },
        )?;
        append_records(&records_path, std::slice::from_ref(&r))?;
        println!("{}", summary_line(&r));
    }
    Ok(())
}

fn eval_checkpoint<R: Real>(dir: &Path, plan: &TrainPlan, size: usize, count: usize, seed: u64) -> Res<Metrics> {
    let store = ParamStore::<R>::load_checkpoint(dir)?;
    Ok(evaluate(&store, &plan.model, plan.task, size, count, seed)?)
}

fn cmd_eval(run: &Path, sizes: Option<Vec<usize>>, count: Option<usize>, seed: Option<u64>, out: Option<&Path>) -> Res<()> {
    let m = Manifest::read(run).map_err(|e| Fail::Usage(format!("{}: {e:#}", run.display())))?;
    let plan = m.plan;
    let sizes = sizes.unwrap_or_else(|| plan.eval_sizes.clone());
    for &n in &sizes {
        if let Err(e) = plan.task.check_size(n) {
            return usage(e.to_string());
        }
    }
    let count = count.unwrap_or(plan.eval_samples);
    let seeds = match seed {
        Some(s) => vec![s],
        None => m.seeds.clone(),
    };
    let mut lines = Vec::new();
    for &s in &seeds {
        let dir = run.join(format!("seed-{s}")).join("checkpoint");
        for &n in &sizes {
            let metrics = match plan.precision {
                Precision::Single => eval_checkpoint::<f32>(&dir, &plan, n, count, s)?,
                Precision::Double => eval_checkpoint::<f64>(&dir, &plan, n, count, s)?,
            };
            let line = serde_json::to_string(&serde_json::json!({ "seed": s, "metrics": metrics }))?;
            println!("{line}");
            lines.push(line);
        }
    }
    if let Some(out) = out {
        let mut em = Manifest::new("eval", &plan, &seeds);
        em.plan.eval_sizes = sizes;
        em.count = Some(count);
        em.write(out)?;
        fs::write(out.join("eval.ndjson"), lines.join("\n") + "\n")?;
    }
    Ok(())
}

fn write_tables(records: &[harness::RunRecord], out: &Path) -> Res<()> {
    for t in summarize(records) {
        let md = markdown(&t);
        fs::write(out.join(format!("table_n{}.md", t.size)), &md)?;
        fs::write(out.join(format!("table_n{}.csv", t.size)), csv(&t))?;
        println!("{md}");
    }
    Ok(())
}

fn cmd_compare(tasks: Vec<Task>, variants: Variants, seeds: Vec<u64>, flags: &PlanFlags, out: &Path) -> Res<()> {
    let (plan, _) = resolve_plan(tasks.first().copied(), flags)?;
    let tasks = if tasks.is_empty() { vec![plan.task] } else { tasks };
    if seeds.len() < harness::MIN_SEEDS {
        return usage(format!("compare needs at least {} seeds", harness::MIN_SEEDS));
    }
    for &t in &tasks {
        TrainPlan { task: t, ..plan.clone() }
            .validate()
            .map_err(|e| Fail::Usage(e.to_string()))?;
    }
    let configs = variants.configs(&plan.model);
    let mut m = Manifest::new("compare", &plan, &seeds);
    m.tasks = tasks.clone();
    m.variants = Some(format!("{variants:?}").to_lowercase());
    m.write(out)?;
    let records_path = out.join("records.ndjson");
    let _ = fs::remove_file(&records_path);
    let mut all = Vec::new();
    for &t in &tasks {
        let p = TrainPlan { task: t, ..plan.clone() };
        let (records, _) = compare_aggregators(
            &p,
            &configs,
            &seeds,
            &TrainOptions {
                out_dir: None,
                verbose: true,
            },
        )?;
        append_records(&records_path, &records)?;
        all.extend(records);
    }
    write_tables(&all, out)
}

fn cmd_timing(tasks: Vec<Task>, variants: Variants, every: usize, seed: u64, flags: &PlanFlags, out: &Path) -> Res<()> {
    let (mut plan, _) = resolve_plan(tasks.first().copied(), flags)?;
    if flags.steps.is_none() {
        plan.train_steps = 50;
    }
    if every == 0 || plan.train_steps < every {
        return usage("--every must be positive and at most --steps");
    }
    let tasks = if tasks.is_empty() { vec![plan.task] } else { tasks };
    let checkpoints: Vec<usize> = (1..=plan.train_steps / every).map(|i| i * every).collect();
    let mut m = Manifest::new("timing", &plan, &[seed]);
    m.tasks = tasks.clone();
    m.variants = Some(format!("{variants:?}").to_lowercase());
    m.write(out)?;
    let mut curves = Vec::new();
    for &t in &tasks {
        for cfg in variants.configs(&plan.model) {
            let p = TrainPlan {
                task: t,
                model: cfg.clone(),
                ..plan.clone()
            };
            let points = timing_curve(&p, seed, &checkpoints)?;
            let c = TimingCurve {
                task: t,
                name: display_name(&cfg),
                seed,
                points,
            };
            let (s, secs) = *c.points.last().unwrap();
            println!("{} {}: {s} steps in {secs:.2}s ({:.2} steps/s)", t, c.name, s as f64 / secs);
            curves.push(c);
        }
    }
    let lines: Vec<String> = curves.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    fs::write(out.join("timing.ndjson"), lines.join("\n") + "\n")?;
    fs::write(out.join("timing.svg"), timing_svg(&curves, "Cumulative training time"))?;
    Ok(())
}

fn cmd_verify(scope: Scope) -> Res<()> {
    let mut checks: Vec<Check> = Vec::new();
    if matches!(scope, Scope::Grad | Scope::All) {
        checks.extend(grad_suite());
    }
    if matches!(scope, Scope::Perm | Scope::All) {
        checks.extend(perm_suite());
    }
    if matches!(scope, Scope::Oracle | Scope::All) {
        checks.extend(oracle_suite(1000, 0));
    }
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        return Err(Fail::Runtime(anyhow::anyhow!("{failed} verification checks failed")));
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Res<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_report(paths: &[PathBuf], layout: Layout, format: Format, out: Option<&Path>) -> Res<()> {
    match layout {
        Layout::Table => {
            let mut records = Vec::new();
            for p in paths {
                records.extend(read_records(p).with_context(|| p.display().to_string())?);
            }
            if records.is_empty() {
                return usage("no run records");
            }
            let text: Vec<String> = summarize(&records)
                .iter()
                .map(|t| match format {
                    Format::Md => markdown(t),
                    Format::Csv => csv(t),
                })
                .collect();
            emit(&text.join("\n"), out)
        }
        Layout::TimingPlot => {
            let mut curves: Vec<TimingCurve> = Vec::new();
            for p in paths {
                let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
                for l in text.lines().filter(|l| !l.trim().is_empty()) {
                    curves.push(serde_json::from_str(l).with_context(|| p.display().to_string())?);
                }
            }
            if curves.is_empty() {
                return usage("no timing curves");
            }
            emit(&timing_svg(&curves, "Cumulative training time"), out)
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    match cli.cmd {
        Cmd::Gen { task, n, count, seed, out } => cmd_gen(task, n, count, seed, &out),
        Cmd::Train { task, seed, seeds, plan, out } => cmd_train(task, seed, seeds, &plan, &out),
        Cmd::Eval { run, sizes, count, seed, out } => cmd_eval(&run, sizes, count, seed, out.as_deref()),
        Cmd::Compare { task, variants, seeds, plan, out } => cmd_compare(task, variants, seeds, &plan, &out),
        Cmd::Timing {
            task,
            variants,
            every,
            seed,
            plan,
            out,
        } => cmd_timing(task, variants, every, seed, &plan, &out),
        Cmd::Verify { scope } => cmd_verify(scope),
        Cmd::Report { records, layout, format, out } => cmd_report(&records, layout, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
