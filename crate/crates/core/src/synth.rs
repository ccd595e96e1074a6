//! Seeded synthetic CTR data with planted semantic structure.
//!
//! Every id of every feature belongs to a group. Its "truth" vector is the
//! group's center on that day plus fixed per-id noise; centers take a seeded
//! random walk across days. Ids are drawn from a Zipf distribution over a
//! seeded popularity permutation, and labels are Bernoulli draws from
//! `sigmoid(scale · Σ_{i<j} <truth_i, truth_j> + bias)`, with the bias
//! calibrated to hit a target positive rate.
//!
//! Colliding two ids of the same group therefore loses almost nothing, while
//! colliding ids from different groups loses real signal.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Reader};
use crate::error::{Error, ParseError, Result};
use crate::plan::baseline::mix64;

/// Generator settings. Stored verbatim in the dataset file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Vocabulary size per feature; its length is the number of features.
    pub vocab_sizes: Vec<usize>,
    /// Number of planted groups per feature.
    pub group_counts: Vec<usize>,
    pub sigma_between: f64,
    pub sigma_within: f64,
    pub zipf_alpha: f64,
    pub truth_dim: usize,
    pub logit_scale: f64,
    pub target_positive_rate: f64,
    pub num_days: usize,
    pub sigma_drift: f64,
    pub samples_per_day: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_sizes: vec![50_000, 50_000],
            group_counts: vec![64, 64],
            sigma_between: 1.0,
            sigma_within: 0.1,
            zipf_alpha: 1.05,
            truth_dim: 4,
            logit_scale: 1.0,
            target_positive_rate: 0.25,
            num_days: 8,
            sigma_drift: 0.1,
            samples_per_day: 250_000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_features(&self) -> usize {
        self.vocab_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_sizes.is_empty() {
            return Err(Error::invalid("at least one feature is required"));
        }
        if self.group_counts.len() != self.vocab_sizes.len() {
            return Err(Error::invalid("group_counts must have one entry per feature"));
        }
        for (f, (&n, &g)) in self.vocab_sizes.iter().zip(&self.group_counts).enumerate() {
            if n == 0 || g == 0 || g > n {
                return Err(Error::invalid(format!(
                    "feature {f}: need 1 <= groups ({g}) <= vocab ({n})"
                )));
            }
            if n > u32::MAX as usize {
                return Err(Error::invalid(format!("feature {f}: vocab {n} exceeds u32")));
            }
        }
        let sigmas = [self.sigma_between, self.sigma_within, self.sigma_drift];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("sigma values must be finite and non-negative"));
        }
        if !(self.zipf_alpha.is_finite() && self.zipf_alpha >= 0.0) {
            return Err(Error::invalid("zipf_alpha must be non-negative"));
        }
        if !(self.target_positive_rate > 0.0 && self.target_positive_rate < 1.0) {
            return Err(Error::invalid("target_positive_rate must be in (0, 1)"));
        }
        if self.truth_dim == 0 || self.num_days == 0 || self.num_days > u16::MAX as usize {
            return Err(Error::invalid("truth_dim and num_days must be positive"));
        }
        if !self.logit_scale.is_finite() {
            return Err(Error::invalid("logit_scale must be finite"));
        }
        Ok(())
    }
}

/// Planted structure of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTruth {
    /// Group of every id.
    pub groups: Vec<u32>,
    /// Fixed per-id offset, `n × dim` row-major.
    pub noise: Vec<f64>,
    /// Group centers per day, each `groups × dim` row-major.
    pub centers: Vec<Vec<f64>>,
    /// `popularity[r]` is the id with popularity rank `r + 1`.
    pub popularity: Vec<u32>,
}

/// Hidden generator state. Diagnostics only; training never sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dim: usize,
    pub features: Vec<FeatureTruth>,
}

impl GroundTruth {
    /// Truth vector of `id` on `day`.
    pub fn truth(&self, feature: usize, id: usize, day: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.truth_into(feature, id, day, &mut out);
        out
    }

    #[inline]
    fn truth_into(&self, feature: usize, id: usize, day: usize, out: &mut [f64]) {
        let f = &self.features[feature];
        let d = self.dim;
        let g = f.groups[id] as usize;
        let c = &f.centers[day][g * d..(g + 1) * d];
        let n = &f.noise[id * d..(id + 1) * d];
        for ((o, &c), &n) in out.iter_mut().zip(c).zip(n) {
            *o = c + n;
        }
    }

    /// All truth vectors of one feature on one day, `n × dim` row-major.
    pub fn truth_matrix(&self, feature: usize, day: usize) -> Vec<f64> {
        let n = self.features[feature].groups.len();
        let mut out = vec![0.0; n * self.dim];
        for (id, row) in out.chunks_exact_mut(self.dim).enumerate() {
            self.truth_into(feature, id, day, row);
        }
        out
    }

    fn logit(&self, ids: &[u32], day: usize, scale: f64, scratch: &mut [Vec<f64>]) -> f64 {
        for (f, (&id, buf)) in ids.iter().zip(scratch.iter_mut()).enumerate() {
            self.truth_into(f, id as usize, day, buf);
        }
        let mut z = 0.0;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                z += scratch[i].iter().zip(&scratch[j]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        scale * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: SynthConfig,
    /// Calibrated label bias.
    pub label_bias: f64,
}

/// Samples stored column-wise: day, one id per feature, label.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    meta: DatasetMeta,
    days: Vec<u16>,
    ids: Vec<u32>,
    labels: Vec<u8>,
}

impl SynthDataset {
    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn num_features(&self) -> usize {
        self.meta.config.num_features()
    }

    pub fn vocab_sizes(&self) -> &[usize] {
        &self.meta.config.vocab_sizes
    }

    pub fn num_days(&self) -> usize {
        self.meta.config.num_days
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn ids(&self, sample: usize) -> &[u32] {
        let f = self.num_features();
        &self.ids[sample * f..(sample + 1) * f]
    }

    #[inline]
    pub fn label(&self, sample: usize) -> u8 {
        self.labels[sample]
    }

    #[inline]
    pub fn day(&self, sample: usize) -> u16 {
        self.days[sample]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Indices of every sample whose day lies in `days`, in file order.
    pub fn indices_in_days(&self, days: RangeInclusive<usize>) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| days.contains(&(self.days[i] as usize)))
            .collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.len().max(1) as f64
    }
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

const TRUTH_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;
const DAY_STREAM: u64 = 1 << 32;
const PROBE_SAMPLES: usize = 10_000;
const BISECTION_STEPS: usize = 64;
const RATE_TOLERANCE: f64 = 0.02;

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

fn feature_truth(cfg: &SynthConfig, f: usize) -> FeatureTruth {
    let n = cfg.vocab_sizes[f];
    let g = cfg.group_counts[f];
    let d = cfg.truth_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, TRUTH_STREAM + f as u64));
    let groups = (0..n).map(|_| rng.random_range(0..g as u32)).collect();
    let noise = (0..n * d).map(|_| normal(&mut rng, cfg.sigma_within)).collect();
    let mut centers = Vec::with_capacity(cfg.num_days);
    centers.push(
        (0..g * d)
            .map(|_| normal(&mut rng, cfg.sigma_between))
            .collect::<Vec<_>>(),
    );
    for day in 1..cfg.num_days {
        let prev = &centers[day - 1];
        let next = prev.iter().map(|&c| c + normal(&mut rng, cfg.sigma_drift)).collect();
        centers.push(next);
    }
    let mut popularity: Vec<u32> = (0..n as u32).collect();
    rand::seq::SliceRandom::shuffle(popularity.as_mut_slice(), &mut rng);
    FeatureTruth {
        groups,
        noise,
        centers,
        popularity,
    }
}

fn samplers(cfg: &SynthConfig) -> Vec<Zipf<f64>> {
    cfg.vocab_sizes
        .iter()
        .map(|&n| Zipf::new(n as f64, cfg.zipf_alpha).expect("validated zipf parameters"))
        .collect()
}

#[inline]
fn draw_ids(rng: &mut ChaCha8Rng, zipf: &[Zipf<f64>], truth: &GroundTruth, out: &mut [u32]) {
    for ((o, z), ft) in out.iter_mut().zip(zipf).zip(&truth.features) {
        let rank = z.sample(rng) as usize;
        *o = ft.popularity[rank.clamp(1, ft.popularity.len()) - 1];
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Finds the bias whose mean predicted positive rate over a seeded probe
/// matches the target.
fn calibrate_bias(cfg: &SynthConfig, truth: &GroundTruth, zipf: &[Zipf<f64>]) -> Result<f64> {
    let f = cfg.num_features();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, PROBE_STREAM));
    let mut ids = vec![0u32; f];
    let mut scratch = vec![vec![0.0; cfg.truth_dim]; f];
    let logits: Vec<f64> = (0..PROBE_SAMPLES)
        .map(|_| {
            let day = rng.random_range(0..cfg.num_days);
            draw_ids(&mut rng, zipf, truth, &mut ids);
            truth.logit(&ids, day, cfg.logit_scale, &mut scratch)
        })
        .collect();
    let rate = |b: f64| logits.iter().map(|&z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let span = logits.iter().fold(0.0f64, |m, z| m.max(z.abs())) + 40.0;
    let (mut lo, mut hi) = (-span, span);
    let mut b = 0.0;
    for _ in 0..BISECTION_STEPS {
        b = 0.5 * (lo + hi);
        if rate(b) < cfg.target_positive_rate {
            lo = b;
        } else {
            hi = b;
        }
    }
    let achieved = rate(b);
    if (achieved - cfg.target_positive_rate).abs() > RATE_TOLERANCE {
        return Err(Error::Calibration {
            rate: achieved,
            target: cfg.target_positive_rate,
        });
    }
    Ok(b)
}

/// Builds only the planted structure for `cfg`.
pub fn ground_truth(cfg: &SynthConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    Ok(GroundTruth {
        dim: cfg.truth_dim,
        features: (0..cfg.num_features())
            .into_par_iter()
            .map(|f| feature_truth(cfg, f))
            .collect(),
    })
}

/// Generates the dataset and its ground truth. Bit-identical for a given config.
pub fn generate(cfg: &SynthConfig) -> Result<(SynthDataset, GroundTruth)> {
    let truth = ground_truth(cfg)?;
    let zipf = samplers(cfg);
    let label_bias = calibrate_bias(cfg, &truth, &zipf)?;
    let f = cfg.num_features();

    let per_day: Vec<(Vec<u32>, Vec<u8>)> = (0..cfg.num_days)
        .into_par_iter()
        .map(|day| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, DAY_STREAM + day as u64));
            let mut ids = vec![0u32; cfg.samples_per_day * f];
            let mut labels = Vec::with_capacity(cfg.samples_per_day);
            let mut scratch = vec![vec![0.0; cfg.truth_dim]; f];
            for row in ids.chunks_exact_mut(f.max(1)) {
                draw_ids(&mut rng, &zipf, &truth, row);
                let z = truth.logit(row, day, cfg.logit_scale, &mut scratch) + label_bias;
                labels.push((rng.random::<f64>() < sigmoid(z)) as u8);
            }
            (ids, labels)
        })
        .collect();

    let total = cfg.num_days * cfg.samples_per_day;
    let mut days = Vec::with_capacity(total);
    let mut ids = Vec::with_capacity(total * f);
    let mut labels = Vec::with_capacity(total);
    for (day, (i, l)) in per_day.into_iter().enumerate() {
        days.extend(std::iter::repeat_n(day as u16, l.len()));
        ids.extend(i);
        labels.extend(l);
    }
    let dataset = SynthDataset {
        meta: DatasetMeta {
            config: cfg.clone(),
            label_bias,
        },
        days,
        ids,
        labels,
    };
    Ok((dataset, truth))
}

pub const DATASET_MAGIC: &[u8; 4] = b"CHSD";
pub const DATASET_VERSION: u16 = 1;

/// Dataset file: magic, version, u32 header length, header JSON (config and
/// calibrated bias), u64 sample count, then per sample `day u16`, one
/// `u32` id per feature and `label u8`. Little-endian.
pub fn write_dataset(ds: &SynthDataset) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&ds.meta)?;
    let f = ds.num_features();
    let mut out = Vec::with_capacity(header.len() + 18 + ds.len() * (3 + 4 * f));
    codec::header(&mut out, DATASET_MAGIC, DATASET_VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for i in 0..ds.len() {
        out.extend_from_slice(&ds.days[i].to_le_bytes());
        for &id in ds.ids(i) {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out.push(ds.labels[i]);
    }
    Ok(out)
}

pub fn read_dataset(bytes: &[u8]) -> Result<SynthDataset> {
    let mut r = Reader::new(bytes);
    r.header(DATASET_MAGIC, DATASET_VERSION)?;
    let hlen = r.u32()? as usize;
    let meta: DatasetMeta =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| ParseError::Invalid(format!("dataset header: {e}")))?;
    meta.config.validate()?;
    let count = r.len()?;
    let f = meta.config.num_features();
    let record = 3 + 4 * f;
    let body = r.take(
        count
            .checked_mul(record)
            .ok_or_else(|| ParseError::Invalid("sample count overflows".into()))?,
    )?;
    r.finish()?;
    let mut days = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count * f);
    let mut labels = Vec::with_capacity(count);
    for rec in body.chunks_exact(record) {
        let day = u16::from_le_bytes([rec[0], rec[1]]);
        if day as usize >= meta.config.num_days {
            return Err(ParseError::Invalid(format!("sample day {day} out of range")).into());
        }
        days.push(day);
        for (k, c) in rec[2..2 + 4 * f].chunks_exact(4).enumerate() {
            let id = u32::from_le_bytes(c.try_into().expect("4 bytes"));
            if id as usize >= meta.config.vocab_sizes[k] {
                return Err(ParseError::Invalid(format!("id {id} out of range for feature {k}")).into());
            }
            ids.push(id);
        }
        let label = rec[record - 1];
        if label > 1 {
            return Err(ParseError::Invalid(format!("label {label} is not 0 or 1")).into());
        }
        labels.push(label);
    }
    Ok(SynthDataset {
        meta,
        days,
        ids,
        labels,
    })
}

/// Mean Euclidean distance between same-group and different-group pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub intra: f64,
    pub inter: f64,
}

impl Separation {
    /// `intra / inter`; below 1 means groups are tighter than the spread between them.
    pub fn ratio(&self) -> f64 {
        self.intra / self.inter
    }
}

const SEPARATION_PAIRS: usize = 20_000;

/// Estimates mean same-group and cross-group distances of `n × dim` vectors
/// from seeded random pairs. Pairs kinds that cannot occur (all groups
/// singletons, or only one group) report 0.
pub fn group_distances(vectors: &[f64], dim: usize, groups: &[u32], pairs: usize, seed: u64) -> Separation {
    let n = groups.len();
    debug_assert_eq!(vectors.len(), n * dim);
    let num_groups = groups.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    let mut members = vec![Vec::new(); num_groups];
    for (id, &g) in groups.iter().enumerate() {
        members[g as usize].push(id);
    }
    let dist = |a: usize, b: usize| {
        vectors[a * dim..(a + 1) * dim]
            .iter()
            .zip(&vectors[b * dim..(b + 1) * dim])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let shared: Vec<usize> = (0..n).filter(|&id| members[groups[id] as usize].len() > 1).collect();
    let mut intra = 0.0;
    if !shared.is_empty() {
        for _ in 0..pairs {
            let a = shared[rng.random_range(0..shared.len())];
            let m = &members[groups[a] as usize];
            let b = loop {
                let b = m[rng.random_range(0..m.len())];
                if b != a {
                    break b;
                }
            };
            intra += dist(a, b);
        }
        intra /= pairs as f64;
    }

    let mut inter = 0.0;
    if members.iter().filter(|m| !m.is_empty()).count() > 1 {
        let mut taken = 0;
        while taken < pairs {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if groups[a] != groups[b] {
                inter += dist(a, b);
                taken += 1;
            }
        }
        inter /= pairs as f64;
    }
    Separation { intra, inter }
}

/// Separation of the planted truth vectors on day 0, averaged over features.
pub fn separation_report(truth: &GroundTruth) -> Separation {
    let per: Vec<Separation> = truth
        .features
        .iter()
        .enumerate()
        .map(|(f, ft)| {
            group_distances(
                &truth.truth_matrix(f, 0),
                truth.dim,
                &ft.groups,
                SEPARATION_PAIRS,
                f as u64,
            )
        })
        .collect();
    let k = per.len() as f64;
    Separation {
        intra: per.iter().map(|s| s.intra).sum::<f64>() / k,
        inter: per.iter().map(|s| s.inter).sum::<f64>() / k,
    }
}
