//! Low-width, full-height teacher whose latents and access counts feed the
//! learned hash.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, CtrModel, ModelConfig};
use crate::codec::{self, Reader};
use crate::embedding::Real;
use crate::error::{Error, ParseError, Result};
use crate::plan::identity_plan;
use crate::synth::SynthDataset;

pub const TEACHER_MAGIC: &[u8; 4] = b"CHTA";
pub const TEACHER_VERSION: u16 = 1;

/// How a teacher was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherMeta {
    pub dim: usize,
    pub first_day: usize,
    pub last_day: usize,
    /// Sample budget asked for; `None` means the whole window.
    pub requested_samples: Option<usize>,
    /// Distinct samples actually trained on.
    pub samples: usize,
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherFeature {
    /// `n × dim`, row-major.
    pub latents: Vec<f64>,
    /// Training lookups per id.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherArtifact {
    pub meta: TeacherMeta,
    pub features: Vec<TeacherFeature>,
}

impl TeacherArtifact {
    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn height(&self, feature: usize) -> usize {
        self.features[feature].counts.len()
    }
}

/// Logit of the positive rate, clamped away from 0 and 1.
pub(crate) fn rate_logit(rate: f64) -> f64 {
    let r = rate.clamp(1e-6, 1.0 - 1e-6);
    (r / (1.0 - r)).ln()
}

/// Picks the training samples: every sample of the day window, or a seeded
/// subset of `budget` of them kept in file order.
pub(crate) fn window_samples(
    ds: &SynthDataset,
    days: &RangeInclusive<usize>,
    budget: Option<usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    if days.is_empty() || *days.end() >= ds.num_days() {
        return Err(Error::invalid(format!(
            "day window {}..={} is outside the dataset's days 0..={}",
            days.start(),
            days.end(),
            ds.num_days().saturating_sub(1)
        )));
    }
    let mut idx = ds.indices_in_days(days.clone());
    match budget {
        Some(b) if b > idx.len() => {
            log::warn!(
                "sample budget {b} exceeds the {} samples in the window; using all",
                idx.len()
            );
        }
        Some(b) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx.shuffle(&mut rng);
            idx.truncate(b);
            idx.sort_unstable();
        }
        None => {}
    }
    if idx.is_empty() {
        return Err(Error::invalid("no samples selected for training"));
    }
    Ok(idx)
}

/// Trains a full-height model of width `cfg.width` (1..=8) on the day window
/// and returns its embeddings and lookup counts.
pub fn train_teacher(
    ds: &SynthDataset,
    days: RangeInclusive<usize>,
    budget: Option<usize>,
    cfg: &ModelConfig,
) -> Result<TeacherArtifact> {
    if !(1..=8).contains(&cfg.width) {
        return Err(Error::invalid(format!("teacher width {} is outside 1..=8", cfg.width)));
    }
    let samples = window_samples(ds, &days, budget, cfg.seed)?;
    let rate = samples.iter().map(|&s| ds.label(s) as f64).sum::<f64>() / samples.len() as f64;
    let plans = ds
        .vocab_sizes()
        .iter()
        .map(|&n| identity_plan(n))
        .collect::<Result<Vec<_>>>()?;
    let mut model = CtrModel::<f32>::new(plans, cfg.width, rate_logit(rate), cfg.seed)?;
    let report = train(&mut model, ds, &samples, cfg)?;
    let features = model
        .embeddings()
        .iter()
        .zip(report.counts)
        .map(|(e, counts)| TeacherFeature {
            latents: e.tables()[0].weights().iter().map(|w| w.as_f64()).collect(),
            counts,
        })
        .collect();
    Ok(TeacherArtifact {
        meta: TeacherMeta {
            dim: cfg.width,
            first_day: *days.start(),
            last_day: *days.end(),
            requested_samples: budget,
            samples: samples.len(),
            epochs: cfg.epochs,
            seed: cfg.seed,
            final_loss: report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        },
        features,
    })
}

/// Teacher file: magic, version, u32 feature count, u32 dim, then per
/// feature `n u64`, `n × dim` f64 latents and `n` u64 counts, and finally a
/// u32-length-prefixed JSON metadata block. Little-endian.
pub fn write_teacher(t: &TeacherArtifact) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    codec::header(&mut out, TEACHER_MAGIC, TEACHER_VERSION);
    out.extend_from_slice(&(t.features.len() as u32).to_le_bytes());
    out.extend_from_slice(&(t.meta.dim as u32).to_le_bytes());
    for f in &t.features {
        out.extend_from_slice(&(f.counts.len() as u64).to_le_bytes());
        for &x in &f.latents {
            x.write_le(&mut out);
        }
        for &c in &f.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&t.meta)?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

pub fn read_teacher(bytes: &[u8]) -> Result<TeacherArtifact> {
    let mut r = Reader::new(bytes);
    r.header(TEACHER_MAGIC, TEACHER_VERSION)?;
    let nf = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut features = Vec::with_capacity(nf.min(1024));
    for _ in 0..nf {
        let n = r.len()?;
        let cells = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| ParseError::Invalid("latent matrix size overflows".into()))?;
        let latents: Vec<f64> = r.take(cells)?.chunks_exact(8).map(f64::from_le_slice).collect();
        let counts = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        features.push(TeacherFeature { latents, counts });
    }
    let mlen = r.u32()? as usize;
    let meta: TeacherMeta =
        serde_json::from_slice(r.take(mlen)?).map_err(|e| ParseError::Invalid(format!("teacher metadata: {e}")))?;
    r.finish()?;
    if meta.dim != dim {
        return Err(ParseError::Invalid(format!("metadata dim {} vs stored {dim}", meta.dim)).into());
    }
    Ok(TeacherArtifact { meta, features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn data() -> SynthDataset {
        let cfg = SynthConfig {
            vocab_sizes: vec![200, 150],
            group_counts: vec![4, 4],
            num_days: 3,
            samples_per_day: 3_000,
            seed: 4,
            ..Default::default()
        };
        generate(&cfg).unwrap().0
    }

    fn cfg(dim: usize) -> ModelConfig {
        ModelConfig {
            width: dim,
            batch_size: 256,
            epochs: 1,
            seed: 2,
            ..Default::default()
        }
    }

    #[test]
    fn shapes_counts_and_metadata() {
        let ds = data();
        let t = train_teacher(&ds, 0..=1, None, &cfg(2)).unwrap();
        assert_eq!(t.features[0].latents.len(), 200 * 2);
        assert_eq!(t.features[1].latents.len(), 150 * 2);
        let mut expect = vec![0u64; 200];
        for s in ds.indices_in_days(0..=1) {
            expect[ds.ids(s)[0] as usize] += 1;
        }
        assert_eq!(t.features[0].counts, expect);
        assert_eq!((t.meta.first_day, t.meta.last_day, t.meta.samples), (0, 1, 6_000));
    }

    #[test]
    fn budget_subsamples_and_oversized_budget_uses_all() {
        let ds = data();
        let t = train_teacher(&ds, 1..=2, Some(1_000), &cfg(2)).unwrap();
        assert_eq!(t.meta.samples, 1_000);
        assert_eq!(t.features[1].counts.iter().sum::<u64>(), 1_000);
        let all = train_teacher(&ds, 2..=2, Some(1_000_000), &cfg(2)).unwrap();
        assert_eq!(all.meta.samples, 3_000);
        assert_eq!(all.meta.requested_samples, Some(1_000_000));
    }

    #[test]
    fn window_and_width_are_checked() {
        let ds = data();
        assert!(train_teacher(&ds, 2..=3, None, &cfg(2)).is_err());
        assert!(train_teacher(&ds, 0..=0, None, &cfg(9)).is_err());
        assert!(train_teacher(&ds, 0..=0, None, &cfg(0)).is_err());
    }

    #[test]
    fn file_round_trip_and_determinism() {
        let ds = data();
        let a = write_teacher(&train_teacher(&ds, 0..=0, None, &cfg(4)).unwrap()).unwrap();
        let b = write_teacher(&train_teacher(&ds, 0..=0, None, &cfg(4)).unwrap()).unwrap();
        assert_eq!(a, b);
        let back = read_teacher(&a).unwrap();
        assert_eq!(write_teacher(&back).unwrap(), a);
        assert!(matches!(
            read_teacher(&a[..a.len() - 3]),
            Err(Error::Parse(ParseError::Truncated { .. }))
        ));
    }
}
