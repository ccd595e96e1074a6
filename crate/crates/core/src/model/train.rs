use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auc, logloss, CtrData, CtrModel, ModelConfig};
use crate::embedding::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean training loss of every epoch, measured before
    /// each batch's update.
    pub epoch_loss: Vec<f64>,
    /// Lookups of every id of every feature across all epochs.
    pub counts: Vec<Vec<u64>>,
    pub samples_seen: u64,
}

/// Minibatch training over `samples` of `data`. Each epoch visits the
/// samples in a fresh order drawn from `cfg.seed` and the epoch number.
pub fn train<R: Real, D: CtrData + ?Sized>(
    model: &mut CtrModel<R>,
    data: &D,
    samples: &[usize],
    cfg: &ModelConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.num_features() != model.num_features() {
        return Err(Error::invalid(format!(
            "data has {} features, model has {}",
            data.num_features(),
            model.num_features()
        )));
    }
    let mut counts: Vec<Vec<u64>> = model.embeddings().iter().map(|e| vec![0; e.height()]).collect();
    let mut order = samples.to_vec();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.copy_from_slice(samples);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = model.loss_and_grads(data, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, epoch, batch: b });
            }
            total += loss * batch.len() as f64;
            model.apply(&grads, cfg);
            for &s in batch {
                for (c, &id) in counts.iter_mut().zip(data.ids(s)) {
                    c[id as usize] += 1;
                }
            }
        }
        epoch_loss.push(total / order.len() as f64);
    }
    Ok(TrainReport {
        epoch_loss,
        counts,
        samples_seen: (cfg.epochs * samples.len()) as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub logloss: f64,
    pub samples: usize,
}

/// AUC and log loss of `model` on `samples`. Read-only, evaluated in parallel.
pub fn evaluate<R: Real, D: CtrData + ?Sized>(model: &CtrModel<R>, data: &D, samples: &[usize]) -> Result<EvalReport> {
    let probs = samples
        .par_iter()
        .map(|&s| model.predict(data.ids(s)))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<u8> = samples.iter().map(|&s| data.label(s)).collect();
    Ok(EvalReport {
        auc: auc(&probs, &labels)?,
        logloss: logloss(&probs, &labels)?,
        samples: samples.len(),
    })
}
