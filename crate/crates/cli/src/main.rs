//! `lhf`: generate data, train a teacher, build hash plans, train and
//! evaluate students, sweep and report.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use learned_hash::harness::{
    build_plans, read_rows, report_markdown, run_sweep, train_eval, write_atomic, Method, PlanRequest, StudentSpec,
    SweepConfig, SweepRow,
};
use learned_hash::model::{read_teacher, train_teacher, write_teacher, ModelConfig, TeacherArtifact};
use learned_hash::plan::{deserialize_plan, serialize_plan, HashPlan, MergeMode};
use learned_hash::synth::{generate, read_dataset, separation_report, write_dataset, SynthConfig, SynthDataset};
use learned_hash::Error;

#[derive(Parser)]
#[command(
    name = "lhf",
    version,
    about = "Learned hash functions for embedding-table compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a low-width, full-height teacher on a day window.
    TrainTeacher(TeacherArgs),
    /// Build one hash plan per feature into a directory.
    BuildHash(BuildArgs),
    /// Train a student through plans and evaluate it on a later day.
    TrainEval(TrainEvalArgs),
    /// Run a grid of experiments into a CSV. Resumes interrupted sweeps.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a sweep CSV as a markdown table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_days(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected a day window like 0..6, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad first day {a:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad last day {b:?}"))?;
    if a > b {
        return Err(format!("empty day window {s:?}"));
    }
    Ok(a..=b)
}

fn parse_merge(s: &str) -> Result<MergeMode, String> {
    match s {
        "sum" => Ok(MergeMode::Sum),
        "concat" => Ok(MergeMode::Concat),
        _ => Err(format!("merge mode must be sum or concat, got {s:?}")),
    }
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_atomic(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> CliResult<SynthDataset> {
    read_dataset(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_teacher(path: &Path) -> CliResult<TeacherArtifact> {
    read_teacher(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// Metadata written next to the plan files by build-hash so that train-eval
/// can report the run without reading the teacher again.
#[derive(Debug, Serialize, Deserialize)]
struct BuildManifest {
    method: String,
    frac: f64,
    tables: usize,
    teacher_days: Option<String>,
    teacher_samples: Option<usize>,
    plans: Vec<String>,
}

const MANIFEST: &str = "build.json";

fn gen_data(config: &Path, out: &Path) -> CliResult<()> {
    let cfg: SynthConfig =
        serde_json::from_slice(&read_input(config)?).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let (ds, truth) = generate(&cfg)?;
    write_output(out, &write_dataset(&ds)?)?;
    let summary = serde_json::json!({
        "samples": ds.len(),
        "positive_rate": ds.positive_rate(),
        "label_bias": ds.meta().label_bias,
        "separation": separation_report(&truth),
    });
    println!("{summary}");
    Ok(())
}

#[derive(clap::Args)]
struct TeacherArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Sample budget drawn from the window (all samples when omitted).
    #[arg(long)]
    samples: Option<usize>,
    /// Inclusive day window, `a..b`.
    #[arg(long, value_parser = parse_days)]
    days: RangeInclusive<usize>,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn train_teacher_cmd(a: TeacherArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let cfg = ModelConfig {
        width: a.dim,
        epochs: a.epochs,
        seed: a.seed,
        batch_size: a.batch_size,
        ..Default::default()
    };
    let t = train_teacher(&ds, a.days, a.samples, &cfg)?;
    write_output(&a.out, &write_teacher(&t)?)?;
    println!("{}", serde_json::to_string(&t.meta).expect("serializable"));
    Ok(())
}

#[derive(clap::Args)]
struct BuildArgs {
    /// learned, learned_nofreq, learned_weight_only, learned_filter_only,
    /// modulo, qr, fdh, fdh:<retain>, full
    #[arg(long)]
    method: String,
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Dataset, for vocabulary sizes when no teacher is given.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target_frac: f64,
    #[arg(long, default_value_t = 1)]
    tables: usize,
    /// Retained fraction for `fdh`.
    #[arg(long)]
    retain_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    cutoff: usize,
    #[arg(long, default_value = "sum", value_parser = parse_merge)]
    merge: MergeMode,
    #[arg(long, default_value_t = 256)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a JSON dump of every plan.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: PathBuf,
}

fn build_hash(a: BuildArgs) -> CliResult<()> {
    let method: Method = match (a.method.as_str(), a.retain_frac) {
        ("fdh", Some(r)) => format!("fdh:{r}").parse()?,
        ("fdh", None) => return Err(usage("fdh needs --retain-frac")),
        (m, _) => m.parse()?,
    };
    if !(a.target_frac > 0.0 && a.target_frac <= 1.0) {
        return Err(usage(format!("--target-frac {} not in (0, 1]", a.target_frac)));
    }
    if a.target_frac == 1.0 {
        log::warn!("--target-frac 1.0 keeps every row; writing identity plans");
    }
    let teacher = a.teacher.as_deref().map(load_teacher).transpose()?;
    let vocab: Vec<usize> = match (&teacher, &a.data) {
        (Some(t), _) => (0..t.num_features()).map(|f| t.height(f)).collect(),
        (None, Some(d)) => load_dataset(d)?.vocab_sizes().to_vec(),
        (None, None) => return Err(usage("give --teacher or --data")),
    };
    if matches!(method, Method::Fdh(_)) && teacher.is_none() {
        return Err(usage("fdh needs --teacher for access counts"));
    }
    let req = PlanRequest {
        method,
        frac: a.target_frac,
        tables: a.tables,
        cutoff_rows: a.cutoff,
        merge_mode: a.merge,
        k: a.k,
        seed: a.seed,
    };
    let plans = if a.target_frac == 1.0 {
        let full = PlanRequest {
            method: Method::Full,
            ..req.clone()
        };
        build_plans(&full, &vocab, None, None)?
    } else {
        build_plans(&req, &vocab, teacher.as_ref(), None)?
    };
    fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", a.out.display())))?;
    let mut names = Vec::new();
    for (f, p) in plans.iter().enumerate() {
        let name = format!("feature_{f}.chsh");
        write_output(&a.out.join(&name), &serialize_plan(p))?;
        if a.json {
            write_output(&a.out.join(format!("feature_{f}.json")), &to_json(&p.to_json()))?;
        }
        names.push(name);
    }
    let uses_teacher = method.needs_teacher();
    let manifest = BuildManifest {
        method: method.to_string(),
        frac: a.target_frac,
        tables: plans.iter().map(HashPlan::num_tables).max().unwrap_or(1),
        teacher_days: teacher
            .as_ref()
            .filter(|_| uses_teacher)
            .map(|t| format!("{}-{}", t.meta.first_day, t.meta.last_day)),
        teacher_samples: teacher.as_ref().filter(|_| uses_teacher).map(|t| t.meta.samples),
        plans: names,
    };
    write_output(&a.out.join(MANIFEST), &to_json(&manifest))?;
    Ok(())
}

/// Resolves `--plan` arguments into plans plus the build manifest, if any.
fn load_plans(paths: &[PathBuf]) -> CliResult<(Vec<HashPlan>, Option<BuildManifest>)> {
    let (files, manifest) = match paths {
        [dir] if dir.is_dir() => {
            let manifest: BuildManifest = serde_json::from_slice(&read_input(&dir.join(MANIFEST))?)
                .map_err(|e| usage(format!("{}: {e}", dir.join(MANIFEST).display())))?;
            (manifest.plans.iter().map(|p| dir.join(p)).collect(), Some(manifest))
        }
        _ => (paths.to_vec(), None),
    };
    let plans = files
        .iter()
        .map(|p| deserialize_plan(&read_input(p)?).map_err(|e| usage(format!("{}: {e}", p.display()))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((plans, manifest))
}

/// A sweep row plus the sample counts behind it.
#[derive(Serialize)]
struct TrainEvalOutput {
    #[serde(flatten)]
    row: SweepRow,
    train_samples: usize,
    eval_samples: usize,
    final_train_loss: f64,
}

#[derive(clap::Args)]
struct TrainEvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Plan files in feature order, or one directory written by build-hash.
    #[arg(long = "plan", required = true)]
    plans: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, value_parser = parse_days)]
    train_days: RangeInclusive<usize>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    eval_day: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    /// Record wall time (makes the output differ between runs).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

fn train_eval_cmd(a: TrainEvalArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let (plans, manifest) = load_plans(&a.plans)?;
    let spec = StudentSpec {
        model: ModelConfig {
            width: a.dim,
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: a.seed,
            ..Default::default()
        },
        train_days: a.train_days,
        train_samples: a.train_samples,
        eval_day: a.eval_day,
    };
    let tables = plans.iter().map(HashPlan::num_tables).max().unwrap_or(1);
    let r = train_eval(&ds, plans, &spec)?;
    let row = SweepRow {
        method: manifest.as_ref().map_or("unspecified".into(), |m| m.method.clone()),
        frac: manifest.as_ref().map_or(f64::NAN, |m| m.frac),
        tables,
        seed: a.seed,
        teacher_days: manifest.as_ref().and_then(|m| m.teacher_days.clone()),
        teacher_samples: manifest.as_ref().and_then(|m| m.teacher_samples),
        auc: Some(r.auc),
        logloss: Some(r.logloss),
        rows_total: r.rows_total,
        lookup_bytes: r.lookup_bytes,
        wall_ms: if a.timing { r.wall_ms } else { 0 },
        status: "ok".into(),
    };
    let out = TrainEvalOutput {
        row,
        train_samples: r.train_samples,
        eval_samples: r.eval_samples,
        final_train_loss: r.final_train_loss,
    };
    write_output(&a.out, &to_json(&out))?;
    Ok(())
}

fn sweep(config: &Path, out: &Path, threads: Option<usize>) -> CliResult<()> {
    let mut cfg: SweepConfig =
        serde_json::from_slice(&read_input(config)?).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.validate()?;
    let data = config.parent().unwrap_or(Path::new(".")).join(&cfg.dataset);
    let ds = load_dataset(&data)?;
    let outcome = run_sweep(&cfg, &ds, out)?;
    let failed = outcome.rows.iter().filter(|r| !r.is_ok()).count();
    eprintln!(
        "{} rows ({} run, {} resumed, {failed} failed) -> {}",
        outcome.rows.len(),
        outcome.executed,
        outcome.resumed,
        out.display()
    );
    Ok(())
}

fn report(input: &Path, out: &Path) -> CliResult<()> {
    if !input.exists() {
        return Err(usage(format!("{} does not exist", input.display())));
    }
    let rows = read_rows(input).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    let md = report_markdown(&rows)?;
    write_output(out, md.as_bytes())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { config, out } => gen_data(&config, &out),
        Command::TrainTeacher(args) => train_teacher_cmd(args),
        Command::BuildHash(args) => build_hash(args),
        Command::TrainEval(args) => train_eval_cmd(args),
        Command::Sweep { config, out, threads } => sweep(&config, &out, threads),
        Command::Report { input, out } => report(&input, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
