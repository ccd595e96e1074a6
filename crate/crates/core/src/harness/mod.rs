//! Experiment pipeline: build hash plans from a teacher, train and evaluate
//! students, sweep a grid of settings into a CSV, and summarize it.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `method` | plan family (`learned`, `modulo`, `fdh:0.01`, ...) |
//! | `frac` | compressed rows / original rows, per compressed table |
//! | `tables` | internal tables per compressed feature |
//! | `seed` | student seed |
//! | `teacher_days` | teacher day window `a-b`; blank when no teacher is used |
//! | `teacher_samples` | samples the teacher trained on; blank when no teacher |
//! | `auc`, `logloss` | on the evaluation day; blank for failed runs |
//! | `rows_total` | embedding rows summed over every feature and table |
//! | `lookup_bytes` | packed id→row lookup tables, summed over features |
//! | `wall_ms` | run time; 0 unless timing is enabled |
//! | `status` | `ok` or `failed: <reason>` |

mod pipeline;
mod report;
mod sweep;

pub use pipeline::{build_plans, train_eval, PlanRequest, StudentSpec, TrainEvalResult};
pub use report::{read_rows, report_markdown};
pub use sweep::{
    expand_grid, run_id, run_sweep, runs_dir, window_counts, RunSpec, SweepConfig, SweepOutcome, TeacherSpec,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::{fs, io};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::plan::LearnedHashConfig;

/// A plan family in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Frequency filtering and weighting.
    Learned,
    LearnedNoFreq,
    LearnedWeightOnly,
    LearnedFilterOnly,
    Modulo,
    Qr,
    /// Frequency-based double hashing keeping this fraction of ids in
    /// dedicated rows.
    Fdh(f64),
    /// Uncompressed.
    Full,
}

impl Method {
    pub fn needs_teacher(&self) -> bool {
        self.frequency().is_some()
    }

    /// `(filter, weighting)` for the learned variants.
    pub fn frequency(&self) -> Option<(bool, bool)> {
        match self {
            Method::Learned => Some((true, true)),
            Method::LearnedNoFreq => Some((false, false)),
            Method::LearnedWeightOnly => Some((false, true)),
            Method::LearnedFilterOnly => Some((true, false)),
            _ => None,
        }
    }

    pub(crate) fn learned_config(&self, k: usize) -> Option<LearnedHashConfig> {
        let (filter, weighting) = self.frequency()?;
        Some(LearnedHashConfig {
            k,
            use_frequency_filter: filter,
            use_frequency_weighting: weighting,
            ..Default::default()
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Learned => f.write_str("learned"),
            Method::LearnedNoFreq => f.write_str("learned_nofreq"),
            Method::LearnedWeightOnly => f.write_str("learned_weight_only"),
            Method::LearnedFilterOnly => f.write_str("learned_filter_only"),
            Method::Modulo => f.write_str("modulo"),
            Method::Qr => f.write_str("qr"),
            Method::Fdh(r) => write!(f, "fdh:{r}"),
            Method::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "learned" => Method::Learned,
            "learned_nofreq" => Method::LearnedNoFreq,
            "learned_weight_only" => Method::LearnedWeightOnly,
            "learned_filter_only" => Method::LearnedFilterOnly,
            "modulo" => Method::Modulo,
            "qr" => Method::Qr,
            "full" => Method::Full,
            _ => {
                let frac = s
                    .strip_prefix("fdh:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r >= 0.0 && *r < 1.0)
                    .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))?;
                Method::Fdh(frac)
            }
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// One line of the sweep CSV, also the JSON written by a single train/eval run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub frac: f64,
    pub tables: usize,
    pub seed: u64,
    pub teacher_days: Option<String>,
    pub teacher_samples: Option<usize>,
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
    pub rows_total: usize,
    pub lookup_bytes: usize,
    pub wall_ms: u64,
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(format!(".tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
