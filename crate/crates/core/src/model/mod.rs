//! Pairwise-dot CTR model.
//!
//! Each feature has one [`LogicalEmbedding`] of a shared width. The logit is
//! `bias + Σ_{i<j} w_ij · <e_i, e_j>`; there is no MLP. Embeddings train with
//! rowwise Adagrad, the pair weights and bias with scalar Adagrad.

mod metrics;
mod teacher;
mod train;

pub use metrics::{auc, auc_brute_force, logloss};
pub(crate) use teacher::{rate_logit, window_samples};
pub use teacher::{
    read_teacher, train_teacher, write_teacher, TeacherArtifact, TeacherMeta, TEACHER_MAGIC, TEACHER_VERSION,
};
pub use train::{evaluate, train, EvalReport, TrainReport};

use serde::{Deserialize, Serialize};

use crate::embedding::{LogicalEmbedding, Real, SparseRowGrads};
use crate::error::{Error, Result};
use crate::plan::HashPlan;
use crate::synth::SynthDataset;

/// Optimization settings. Defaults are the desk-scale values; the learning
/// rates match the reference setup, the batch is far smaller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub lr_emb: f64,
    pub lr_dense: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 16,
            lr_emb: 0.02,
            lr_dense: 0.002,
            eps: 1e-8,
            batch_size: 1024,
            epochs: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Large-batch setting for production-scale datasets.
    pub fn large_batch() -> Self {
        ModelConfig {
            batch_size: 32_768,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_emb > 0.0 && self.lr_dense > 0.0 && self.eps > 0.0) {
            return Err(Error::invalid("learning rates and eps must be positive"));
        }
        if self.batch_size == 0 || self.width == 0 {
            return Err(Error::invalid("batch_size and width must be at least 1"));
        }
        Ok(())
    }
}

/// Read access to labelled one-hot samples.
pub trait CtrData: Sync {
    fn num_features(&self) -> usize;
    fn len(&self) -> usize;
    fn ids(&self, sample: usize) -> &[u32];
    fn label(&self, sample: usize) -> u8;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CtrData for SynthDataset {
    fn num_features(&self) -> usize {
        SynthDataset::num_features(self)
    }

    fn len(&self) -> usize {
        SynthDataset::len(self)
    }

    fn ids(&self, sample: usize) -> &[u32] {
        SynthDataset::ids(self, sample)
    }

    fn label(&self, sample: usize) -> u8 {
        SynthDataset::label(self, sample)
    }
}

/// Plain in-memory samples, handy for small fixtures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Examples {
    pub num_features: usize,
    /// Row-major, `num_features` ids per sample.
    pub ids: Vec<u32>,
    pub labels: Vec<u8>,
}

impl CtrData for Examples {
    fn num_features(&self) -> usize {
        self.num_features
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn ids(&self, sample: usize) -> &[u32] {
        &self.ids[sample * self.num_features..(sample + 1) * self.num_features]
    }

    fn label(&self, sample: usize) -> u8 {
        self.labels[sample]
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn num_pairs(f: usize) -> usize {
    f * f.saturating_sub(1) / 2
}

/// Gradients of the mean batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<R> {
    /// Per feature, per internal table.
    pub embeddings: Vec<Vec<SparseRowGrads<R>>>,
    /// One per feature pair `(i, j)`, `i < j`, in lexicographic order.
    pub pairs: Vec<R>,
    pub bias: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrModel<R> {
    embeddings: Vec<LogicalEmbedding<R>>,
    pair_weights: Vec<R>,
    bias: R,
    /// Adagrad accumulators for `pair_weights` then `bias`.
    dense_state: Vec<R>,
}

impl<R: Real> CtrModel<R> {
    /// Random embeddings through `plans` (one per feature), pair weights 1,
    /// and the given bias.
    pub fn new(plans: Vec<HashPlan>, width: usize, bias: f64, seed: u64) -> Result<Self> {
        let embeddings = plans
            .into_iter()
            .enumerate()
            .map(|(f, p)| {
                LogicalEmbedding::new(p, width, seed.wrapping_mul(0x9E37_79B9).wrapping_add(1_000 * f as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(embeddings, None, bias)
    }

    /// Assembles a model from existing embeddings. Pair weights default to 1.
    pub fn from_parts(embeddings: Vec<LogicalEmbedding<R>>, pair_weights: Option<Vec<R>>, bias: f64) -> Result<Self> {
        let Some(first) = embeddings.first() else {
            return Err(Error::invalid("a model needs at least one feature"));
        };
        let width = first.output_width();
        if embeddings.iter().any(|e| e.output_width() != width) {
            return Err(Error::invalid("all embeddings must share one width"));
        }
        let p = num_pairs(embeddings.len());
        let pair_weights = pair_weights.unwrap_or_else(|| vec![R::one(); p]);
        if pair_weights.len() != p {
            return Err(Error::invalid(format!(
                "{} pair weights for {p} pairs",
                pair_weights.len()
            )));
        }
        Ok(CtrModel {
            embeddings,
            pair_weights,
            bias: R::of(bias),
            dense_state: vec![R::zero(); p + 1],
        })
    }

    pub fn num_features(&self) -> usize {
        self.embeddings.len()
    }

    pub fn width(&self) -> usize {
        self.embeddings[0].output_width()
    }

    pub fn embeddings(&self) -> &[LogicalEmbedding<R>] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [LogicalEmbedding<R>] {
        &mut self.embeddings
    }

    pub fn pair_weights(&self) -> &[R] {
        &self.pair_weights
    }

    pub fn pair_weights_mut(&mut self) -> &mut [R] {
        &mut self.pair_weights
    }

    pub fn bias(&self) -> R {
        self.bias
    }

    pub fn set_bias(&mut self, bias: R) {
        self.bias = bias;
    }

    fn check_arity(&self, ids: &[u32]) -> Result<()> {
        if ids.len() != self.embeddings.len() {
            return Err(Error::contract(format!(
                "sample has {} ids, model has {} features",
                ids.len(),
                self.embeddings.len()
            )));
        }
        Ok(())
    }

    /// Looks up every feature into `buf` (`F × width`) and returns the logit.
    fn logit_into(&self, ids: &[u32], buf: &mut [R]) -> Result<R> {
        self.check_arity(ids)?;
        let w = self.width();
        for ((e, &id), dst) in self.embeddings.iter().zip(ids).zip(buf.chunks_exact_mut(w)) {
            e.lookup_into(id as usize, dst)?;
        }
        let mut z = self.bias;
        let mut p = 0;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let dot = dot(&buf[i * w..(i + 1) * w], &buf[j * w..(j + 1) * w]);
                z += self.pair_weights[p] * dot;
                p += 1;
            }
        }
        Ok(z)
    }

    pub fn logit(&self, ids: &[u32]) -> Result<R> {
        let mut buf = vec![R::zero(); ids.len() * self.width()];
        self.logit_into(ids, &mut buf)
    }

    /// Click probability for one sample.
    pub fn predict(&self, ids: &[u32]) -> Result<f64> {
        Ok(sigmoid(self.logit(ids)?.as_f64()))
    }

    /// Mean binary cross-entropy over `samples` of `data` and its gradient.
    pub fn loss_and_grads<D: CtrData + ?Sized>(&self, data: &D, samples: &[usize]) -> Result<(f64, Grads<R>)> {
        let f = self.num_features();
        let w = self.width();
        let mut grads = Grads {
            embeddings: self.embeddings.iter().map(|e| e.empty_grads()).collect(),
            pairs: vec![R::zero(); self.pair_weights.len()],
            bias: R::zero(),
        };
        if samples.is_empty() {
            return Ok((0.0, grads));
        }
        let inv_b = 1.0 / samples.len() as f64;
        let mut buf = vec![R::zero(); f * w];
        let mut up = vec![R::zero(); w];
        let mut loss = 0.0;
        for &s in samples {
            let ids = data.ids(s);
            let y = data.label(s) as f64;
            let z = self.logit_into(ids, &mut buf)?.as_f64();
            loss += softplus(z) - y * z;
            let dz = R::of((sigmoid(z) - y) * inv_b);
            grads.bias += dz;
            let mut p = 0;
            for i in 0..f {
                for j in i + 1..f {
                    grads.pairs[p] += dz * dot(&buf[i * w..(i + 1) * w], &buf[j * w..(j + 1) * w]);
                    p += 1;
                }
            }
            for (i, (&id, e)) in ids.iter().zip(&self.embeddings).enumerate() {
                up.fill(R::zero());
                for j in 0..f {
                    if j == i {
                        continue;
                    }
                    let c = dz * self.pair_weights[pair_index(f, i.min(j), i.max(j))];
                    for (u, &x) in up.iter_mut().zip(&buf[j * w..(j + 1) * w]) {
                        *u += c * x;
                    }
                }
                e.accumulate(id as usize, &up, &mut grads.embeddings[i])?;
            }
        }
        Ok((loss * inv_b, grads))
    }

    /// One optimizer step: rowwise Adagrad on embeddings, scalar Adagrad on
    /// pair weights and bias.
    pub fn apply(&mut self, grads: &Grads<R>, cfg: &ModelConfig) {
        let (lr_emb, lr_dense, eps) = (R::of(cfg.lr_emb), R::of(cfg.lr_dense), R::of(cfg.eps));
        for (e, g) in self.embeddings.iter_mut().zip(&grads.embeddings) {
            e.apply_adagrad(g, lr_emb, eps);
        }
        let params = self.pair_weights.iter_mut().chain(std::iter::once(&mut self.bias));
        let g = grads.pairs.iter().chain(std::iter::once(&grads.bias));
        for ((param, &g), state) in params.zip(g).zip(&mut self.dense_state) {
            *state += g * g;
            *param -= lr_dense * g / (*state + eps).sqrt();
        }
    }
}

#[inline]
fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Position of pair `(i, j)`, `i < j`, among the `F(F-1)/2` pairs.
#[inline]
fn pair_index(f: usize, i: usize, j: usize) -> usize {
    i * (2 * f - i - 1) / 2 + (j - i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::InternalTable;
    use crate::plan::identity_plan;

    fn model(rows: &[Vec<f64>], pair: Vec<f64>, bias: f64) -> CtrModel<f64> {
        let w = rows[0].len();
        let embeddings = rows
            .iter()
            .map(|r| {
                let t = InternalTable::from_weights(1, w, r.clone());
                LogicalEmbedding::from_tables(identity_plan(1).unwrap(), vec![t], w).unwrap()
            })
            .collect();
        CtrModel::from_parts(embeddings, Some(pair), bias).unwrap()
    }

    #[test]
    fn pair_index_enumerates_lexicographically() {
        let f = 4;
        let mut expect = 0;
        for i in 0..f {
            for j in i + 1..f {
                assert_eq!(pair_index(f, i, j), expect);
                expect += 1;
            }
        }
        assert_eq!(expect, num_pairs(f));
    }

    #[test]
    fn zero_embeddings_give_sigmoid_bias() {
        let m = model(&[vec![0.0; 3], vec![0.0; 3]], vec![1.0], -1.2);
        assert!((m.predict(&[0, 0]).unwrap() - sigmoid(-1.2)).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_pair_gives_one_half() {
        let m = model(&[vec![1.0, 0.0], vec![0.0, 2.0]], vec![1.0], 0.0);
        assert_eq!(m.predict(&[0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_two_features() {
        // z = 0.3 + 2 · (0.5·1.5 + (−1)·0.25) = 1.3
        let m = model(&[vec![0.5, -1.0], vec![1.5, 0.25]], vec![2.0], 0.3);
        assert!((m.predict(&[0, 0]).unwrap() - 1.0 / (1.0 + (-1.3f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn arity_mismatch_is_a_contract_error() {
        let m = model(&[vec![0.0; 2], vec![0.0; 2]], vec![1.0], 0.0);
        assert!(matches!(m.predict(&[0]), Err(Error::Contract(_))));
    }
}
