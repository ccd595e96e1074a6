use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_plans, train_eval, write_atomic, Method, PlanRequest, StudentSpec, SweepRow};
use crate::error::{Error, Result};
use crate::model::{read_teacher, train_teacher, write_teacher, ModelConfig, TeacherArtifact};
use crate::plan::MergeMode;
use crate::synth::SynthDataset;

/// Teacher variant: width, day window and sample budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSpec {
    pub dim: usize,
    /// Inclusive `[first, last]` day window.
    pub days: [usize; 2],
    /// Sample budget drawn from the window; all samples when absent.
    pub samples: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            dim: 4,
            days: [0, 6],
            samples: None,
            epochs: 1,
            seed: 1,
        }
    }
}

impl TeacherSpec {
    pub fn model_config(&self, batch_size: usize) -> ModelConfig {
        ModelConfig {
            width: self.dim,
            epochs: self.epochs,
            seed: self.seed,
            batch_size,
            ..Default::default()
        }
    }

    pub fn window_label(&self) -> String {
        format!("{}-{}", self.days[0], self.days[1])
    }
}

/// Sweep settings, read from JSON. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Dataset file, relative to the config file.
    pub dataset: PathBuf,
    pub teachers: Vec<TeacherSpec>,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    /// Internal table counts tried for the learned variants.
    pub tables: Vec<usize>,
    pub seeds: Vec<u64>,
    pub width: usize,
    pub cutoff_rows: usize,
    pub merge_mode: MergeMode,
    pub k: usize,
    pub train_days: [usize; 2],
    pub train_samples: Option<usize>,
    pub eval_day: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_emb: f64,
    pub lr_dense: f64,
    /// Record wall time; off by default so reruns produce identical CSVs.
    pub timing: bool,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        SweepConfig {
            dataset: PathBuf::from("data.chsd"),
            teachers: vec![TeacherSpec::default()],
            methods: vec![Method::Learned, Method::Modulo, Method::Full],
            fractions: vec![0.05, 0.1, 0.2],
            tables: vec![1],
            seeds: vec![0, 1, 2],
            width: model.width,
            cutoff_rows: 1_000,
            merge_mode: MergeMode::Sum,
            k: 256,
            train_days: [0, 6],
            train_samples: None,
            eval_day: 7,
            epochs: model.epochs,
            batch_size: model.batch_size,
            lr_emb: model.lr_emb,
            lr_dense: model.lr_dense,
            timing: false,
            threads: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("need at least one method and one seed"));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid("fractions must lie in (0, 1)"));
        }
        if self.methods.iter().any(|m| m != &Method::Full) && self.fractions.is_empty() {
            return Err(Error::invalid("compressed methods need at least one fraction"));
        }
        if self.methods.iter().any(Method::needs_teacher) && (self.teachers.is_empty() || self.tables.is_empty()) {
            return Err(Error::invalid(
                "learned methods need at least one teacher and table count",
            ));
        }
        if self.tables.contains(&0) {
            return Err(Error::invalid("table counts must be positive"));
        }
        if self.train_days[0] > self.train_days[1] || self.teachers.iter().any(|t| t.days[0] > t.days[1]) {
            return Err(Error::invalid("day windows must be [first, last] with first <= last"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be positive"));
        }
        self.student(0).model.validate()
    }

    pub fn student(&self, seed: u64) -> StudentSpec {
        StudentSpec {
            model: ModelConfig {
                width: self.width,
                lr_emb: self.lr_emb,
                lr_dense: self.lr_dense,
                batch_size: self.batch_size,
                epochs: self.epochs,
                seed,
                ..Default::default()
            },
            train_days: self.train_days[0]..=self.train_days[1],
            train_samples: self.train_samples,
            eval_day: self.eval_day,
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub method: Method,
    pub frac: f64,
    pub tables: usize,
    pub seed: u64,
    pub teacher: Option<TeacherSpec>,
}

/// Grid in output order. Learned variants expand over teachers, fractions,
/// table counts and seeds; other compressed methods over fractions and seeds;
/// `full` over seeds only.
pub fn expand_grid(cfg: &SweepConfig) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let run = |frac, tables, seed, teacher: Option<&TeacherSpec>| RunSpec {
            method,
            frac,
            tables,
            seed,
            teacher: teacher.cloned(),
        };
        match method {
            Method::Full => out.extend(cfg.seeds.iter().map(|&s| run(1.0, 1, s, None))),
            m if m.needs_teacher() => {
                for t in &cfg.teachers {
                    for &frac in &cfg.fractions {
                        for &tables in &cfg.tables {
                            out.extend(cfg.seeds.iter().map(|&s| run(frac, tables, s, Some(t))));
                        }
                    }
                }
            }
            _ => {
                for &frac in &cfg.fractions {
                    out.extend(cfg.seeds.iter().map(|&s| run(frac, 1, s, None)));
                }
            }
        }
    }
    out
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Identifies a dataset by its generator settings and sample count.
fn dataset_fingerprint(ds: &SynthDataset) -> String {
    let meta = serde_json::to_vec(ds.meta()).expect("dataset metadata serializes");
    hex_digest(&[meta, ds.len().to_le_bytes().to_vec()].concat())
}

/// Stable id of a run: a hash over the dataset and every setting that can
/// change its result. Timing and thread count are excluded.
pub fn run_id(cfg: &SweepConfig, dataset: &str, spec: &RunSpec) -> String {
    let key = serde_json::json!({
        "dataset": dataset,
        "run": spec,
        "student": cfg.student(spec.seed),
        "cutoff_rows": cfg.cutoff_rows,
        "merge_mode": cfg.merge_mode,
        "k": cfg.k,
    });
    hex_digest(key.to_string().as_bytes())
}

fn teacher_id(dataset: &str, spec: &TeacherSpec, batch_size: usize) -> String {
    let key = serde_json::json!({ "dataset": dataset, "teacher": spec, "batch_size": batch_size });
    hex_digest(key.to_string().as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub executed: usize,
    pub resumed: usize,
}

/// Directory holding per-run artifacts next to `out_csv`.
pub fn runs_dir(out_csv: &Path) -> PathBuf {
    let mut name = out_csv.file_name().unwrap_or_default().to_os_string();
    name.push(".runs");
    out_csv.with_file_name(name)
}

fn load_or_train_teacher(
    dir: &Path,
    dataset: &str,
    ds: &SynthDataset,
    spec: &TeacherSpec,
    batch: usize,
) -> Result<TeacherArtifact> {
    let path = dir.join(format!("teacher-{}.chta", teacher_id(dataset, spec, batch)));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(t) = read_teacher(&bytes) {
            return Ok(t);
        }
        log::warn!("ignoring unreadable cached teacher {}", path.display());
    }
    let t = train_teacher(ds, spec.days[0]..=spec.days[1], spec.samples, &spec.model_config(batch))?;
    write_atomic(&path, &write_teacher(&t)?)?;
    Ok(t)
}

fn execute(
    cfg: &SweepConfig,
    ds: &SynthDataset,
    spec: &RunSpec,
    teacher: Option<&TeacherArtifact>,
    counts: &[Vec<u64>],
) -> SweepRow {
    let start = Instant::now();
    let req = PlanRequest {
        method: spec.method,
        frac: spec.frac,
        tables: spec.tables,
        cutoff_rows: cfg.cutoff_rows,
        merge_mode: cfg.merge_mode,
        k: cfg.k,
        seed: spec.seed,
    };
    let mut row = SweepRow {
        method: spec.method.to_string(),
        frac: spec.frac,
        tables: spec.tables,
        seed: spec.seed,
        teacher_days: spec.teacher.as_ref().map(TeacherSpec::window_label),
        teacher_samples: teacher.map(|t| t.meta.samples),
        auc: None,
        logloss: None,
        rows_total: 0,
        lookup_bytes: 0,
        wall_ms: 0,
        status: "ok".into(),
    };
    let result = build_plans(&req, ds.vocab_sizes(), teacher, Some(counts)).and_then(|plans| {
        row.tables = plans.iter().map(|p| p.num_tables()).max().unwrap_or(1);
        train_eval(ds, plans, &cfg.student(spec.seed))
    });
    match result {
        Ok(r) => {
            row.auc = Some(r.auc);
            row.logloss = Some(r.logloss);
            row.rows_total = r.rows_total;
            row.lookup_bytes = r.lookup_bytes;
        }
        Err(e) => row.status = format!("failed: {e}"),
    }
    if cfg.timing {
        row.wall_ms = start.elapsed().as_millis() as u64;
    }
    row
}

fn read_row(path: &Path) -> Option<SweepRow> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

/// Runs every grid cell without a stored result, then writes the CSV in
/// grid order. Results live in `<out>.runs/<run id>.json`, so an interrupted
/// sweep resumes where it stopped and the CSV does not depend on execution
/// order or thread count.
pub fn run_sweep(cfg: &SweepConfig, ds: &SynthDataset, out_csv: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dir = runs_dir(out_csv);
    fs::create_dir_all(&dir)?;
    let fingerprint = dataset_fingerprint(ds);
    let grid = expand_grid(cfg);
    let ids: Vec<String> = grid.iter().map(|s| run_id(cfg, &fingerprint, s)).collect();
    let pending: Vec<usize> = (0..grid.len())
        .filter(|&i| read_row(&dir.join(format!("{}.json", ids[i]))).is_none())
        .collect();

    let work = || -> Result<()> {
        let needed: Vec<&TeacherSpec> = {
            let mut m = BTreeMap::new();
            for &i in &pending {
                if let Some(t) = &grid[i].teacher {
                    m.insert(t, ());
                }
            }
            m.into_keys().collect()
        };
        let teachers: BTreeMap<&TeacherSpec, TeacherArtifact> = needed
            .par_iter()
            .map(|&t| Ok((t, load_or_train_teacher(&dir, &fingerprint, ds, t, cfg.batch_size)?)))
            .collect::<Result<_>>()?;
        let counts = window_counts(ds, cfg.train_days[0]..=cfg.train_days[1]);
        pending.par_iter().try_for_each(|&i| {
            let spec = &grid[i];
            let teacher = spec.teacher.as_ref().map(|t| &teachers[t]);
            let row = execute(cfg, ds, spec, teacher, &counts);
            write_atomic(&dir.join(format!("{}.json", ids[i])), &serde_json::to_vec_pretty(&row)?)?;
            Ok(())
        })
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    }

    let rows = ids
        .iter()
        .map(|id| {
            read_row(&dir.join(format!("{id}.json")))
                .ok_or_else(|| Error::contract(format!("run {id} left no readable result")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(out_csv, &bytes)?;
    Ok(SweepOutcome {
        rows,
        executed: pending.len(),
        resumed: grid.len() - pending.len(),
    })
}

/// Lookups per id over every sample in `days`.
pub fn window_counts(ds: &SynthDataset, days: std::ops::RangeInclusive<usize>) -> Vec<Vec<u64>> {
    let mut counts: Vec<Vec<u64>> = ds.vocab_sizes().iter().map(|&n| vec![0; n]).collect();
    for s in ds.indices_in_days(days) {
        for (c, &id) in counts.iter_mut().zip(ds.ids(s)) {
            c[id as usize] += 1;
        }
    }
    counts
}
