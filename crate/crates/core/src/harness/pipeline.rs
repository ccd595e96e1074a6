use std::ops::RangeInclusive;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{Error, Result};
use crate::model::{evaluate, rate_logit, train, window_samples, CtrModel, ModelConfig, TeacherArtifact};
use crate::plan::{freq_double_hash, identity_plan, learned_hash, modulo_hash, qr_hash, HashPlan, MergeMode};
use crate::synth::SynthDataset;

/// Everything needed to turn one method setting into per-feature plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub method: Method,
    /// Target rows as a fraction of each compressed table's height.
    pub frac: f64,
    /// Internal tables for the learned variants.
    pub tables: usize,
    /// Tables shorter than this stay uncompressed.
    pub cutoff_rows: usize,
    pub merge_mode: MergeMode,
    /// Merges per clustering step.
    pub k: usize,
    /// Seeds the double-hashing mixers.
    pub seed: u64,
}

/// One plan per feature. Learned variants read latents and counts from the
/// teacher; frequency-based double hashing uses `counts`.
pub fn build_plans(
    req: &PlanRequest,
    vocab_sizes: &[usize],
    teacher: Option<&TeacherArtifact>,
    counts: Option<&[Vec<u64>]>,
) -> Result<Vec<HashPlan>> {
    if !(req.frac > 0.0 && req.frac <= 1.0) {
        return Err(Error::invalid(format!("size fraction {} not in (0, 1]", req.frac)));
    }
    if req.method.needs_teacher() {
        let t = teacher.ok_or_else(|| Error::invalid(format!("{} needs a teacher", req.method)))?;
        if t.num_features() != vocab_sizes.len() {
            return Err(Error::invalid(format!(
                "teacher has {} features, dataset has {}",
                t.num_features(),
                vocab_sizes.len()
            )));
        }
        if req.tables > t.dim() {
            return Err(Error::invalid(format!(
                "{} internal tables need a teacher of width at least {}, got {}",
                req.tables,
                req.tables,
                t.dim()
            )));
        }
    }
    vocab_sizes
        .iter()
        .enumerate()
        .map(|(f, &n)| {
            if req.method == Method::Full || n < req.cutoff_rows {
                return identity_plan(n);
            }
            let target = (req.frac * n as f64).round() as usize;
            if target >= n {
                log::warn!(
                    "feature {f}: fraction {} keeps all {n} rows; using an identity plan",
                    req.frac
                );
                return identity_plan(n);
            }
            if target == 0 {
                return Err(Error::invalid(format!(
                    "feature {f}: fraction {} leaves no rows",
                    req.frac
                )));
            }
            match req.method {
                Method::Modulo => modulo_hash(n, target),
                Method::Qr => qr_hash(n, target, req.merge_mode),
                Method::Fdh(retain) => {
                    let c = match (counts, teacher) {
                        (Some(c), _) => c
                            .get(f)
                            .ok_or_else(|| Error::invalid(format!("no counts for feature {f}")))?,
                        (None, Some(t)) => &t.features[f].counts,
                        (None, None) => return Err(Error::invalid("double hashing needs access counts")),
                    };
                    freq_double_hash(c, n, target, retain, 2 * req.seed + 1, 2 * req.seed + 2)
                }
                Method::Full => unreachable!("handled above"),
                learned => {
                    let t = teacher.expect("checked above");
                    let tf = &t.features[f];
                    if tf.counts.len() != n {
                        return Err(Error::invalid(format!(
                            "feature {f}: teacher height {} vs vocabulary {n}",
                            tf.counts.len()
                        )));
                    }
                    let cfg = learned.learned_config(req.k).expect("learned variant");
                    learned_hash(
                        &tf.latents,
                        t.dim(),
                        &tf.counts,
                        target,
                        req.tables,
                        req.merge_mode,
                        &cfg,
                    )
                }
            }
        })
        .collect()
}

/// Student training and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentSpec {
    pub model: ModelConfig,
    pub train_days: RangeInclusive<usize>,
    /// Cap on training samples drawn from the window.
    pub train_samples: Option<usize>,
    pub eval_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEvalResult {
    pub auc: f64,
    pub logloss: f64,
    pub final_train_loss: f64,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub rows_total: usize,
    pub lookup_bytes: usize,
    pub wall_ms: u64,
}

/// Trains a student through `plans` on the training window and evaluates it
/// on `eval_day`.
pub fn train_eval(ds: &SynthDataset, plans: Vec<HashPlan>, spec: &StudentSpec) -> Result<TrainEvalResult> {
    let start = Instant::now();
    if plans.len() != ds.num_features() {
        return Err(Error::invalid(format!(
            "{} plans for {} features",
            plans.len(),
            ds.num_features()
        )));
    }
    for (f, (p, &n)) in plans.iter().zip(ds.vocab_sizes()).enumerate() {
        if p.n() != n {
            return Err(Error::invalid(format!(
                "plan {f} covers {} ids, feature has {n}",
                p.n()
            )));
        }
    }
    if spec.eval_day >= ds.num_days() {
        return Err(Error::invalid(format!(
            "eval day {} outside the dataset's {} days",
            spec.eval_day,
            ds.num_days()
        )));
    }
    if spec.eval_day <= *spec.train_days.end() {
        log::warn!(
            "eval day {} is not after the training window ending on day {}",
            spec.eval_day,
            spec.train_days.end()
        );
    }
    let train_idx = window_samples(ds, &spec.train_days, spec.train_samples, spec.model.seed)?;
    let eval_idx = ds.indices_in_days(spec.eval_day..=spec.eval_day);
    let rows_total = plans.iter().map(HashPlan::total_rows).sum();
    let lookup_bytes = plans.iter().map(HashPlan::lookup_bytes).sum();
    let rate = train_idx.iter().map(|&s| ds.label(s) as f64).sum::<f64>() / train_idx.len() as f64;
    let mut model = CtrModel::<f32>::new(plans, spec.model.width, rate_logit(rate), spec.model.seed)?;
    let report = train(&mut model, ds, &train_idx, &spec.model)?;
    let eval = evaluate(&model, ds, &eval_idx)?;
    Ok(TrainEvalResult {
        auc: eval.auc,
        logloss: eval.logloss,
        final_train_loss: report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        train_samples: train_idx.len(),
        eval_samples: eval_idx.len(),
        rows_total,
        lookup_bytes,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
