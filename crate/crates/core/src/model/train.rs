//! Mini-batch training with Adam, cosine annealing and best-validation
//! checkpointing.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{cosine_lr, AdamState};
use super::loss::LossWeights;
use super::network::Network;
use super::{ModelError, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            lr0: 1e-3,
            lr_min: 1e-5,
            epochs: 100,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr0) {
            return bad("lr_min must lie in [0, lr0]");
        }
        if !(self.weights.w_reg >= 0.0 && self.weights.w_cls >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean joint loss over the epoch's batches, in training mode.
    pub train_loss: f64,
    /// Mean squared error of the regression head in training mode,
    /// standardized units.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Mean squared error of standardized predictions over `samples`.
pub fn eval_mse(net: &Network, params: &[f64], samples: &[Sample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut sq = 0.0;
    for s in samples {
        sq += (net.predict_speed(params, s)? - s.label).powi(2);
    }
    Ok(sq / samples.len() as f64)
}

/// Train on a fixed sample set.
pub fn train(
    net: &Network,
    init: Vec<f64>,
    train_set: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    train_resampled(net, init, |_| Ok(Cow::Borrowed(train_set)), val, cfg)
}

/// Train with a sample set drawn anew for each epoch. Every draw must have the
/// same length as the first. Parameters with the lowest validation MSE (or
/// training MSE when `val` is empty) are returned.
pub fn train_resampled<'a, F>(
    net: &Network,
    init: Vec<f64>,
    mut draw: F,
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError>
where
    F: FnMut(u64) -> Result<Cow<'a, [Sample]>, ModelError>,
{
    cfg.validate()?;
    if init.len() != net.n_params() {
        return Err(ModelError::ShapeMismatch {
            what: "parameters",
            got: init.len(),
            expected: net.n_params(),
        });
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params: init,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    let mut data = draw(0)?;
    let n = data.len();
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let batches = n.div_ceil(cfg.batch_size);
    let total = (cfg.epochs * batches) as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    let mut adam = AdamState::new(net.n_params());
    let mut grad = vec![0.0; net.n_params()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            data = draw(epoch as u64)?;
            if data.len() != n {
                return Err(ModelError::ShapeMismatch {
                    what: "resampled training set",
                    got: data.len(),
                    expected: n,
                });
            }
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut sq_sum = 0.0;
        let mut lr = cfg.lr0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            grad.fill(0.0);
            let (loss, mse) = net.loss_and_grad(&params, &batch, &cfg.weights, &mut rng, &mut grad)?;
            lr = cosine_lr(step, total, cfg.lr0, cfg.lr_min)?;
            adam.step(&mut params, &grad, lr)?;
            step += 1;
            let w = chunk.len() as f64;
            loss_sum += loss * w;
            sq_sum += mse * w;
        }
        let train_mse = sq_sum / n as f64;
        let val_mse = if val.is_empty() {
            None
        } else {
            Some(eval_mse(net, &params, val)?)
        };
        let score = val_mse.unwrap_or(train_mse);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
        }
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_mse,
            val_mse,
        });
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch: Some(best_epoch),
    })
}
