//! Joint regression and classification loss.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Criterion applied to the classification logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClsCriterion {
    /// Softmax cross-entropy.
    #[default]
    CrossEntropy,
    /// Mean squared error between softmax probabilities and the one-hot label.
    OneHotMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_reg: f64,
    pub w_cls: f64,
    #[serde(default)]
    pub criterion: ClsCriterion,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_reg: 1.0,
            w_cls: 0.1,
            criterion: ClsCriterion::CrossEntropy,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss of one sample.
pub fn joint_loss(
    speed_pred: f64,
    speed_label: f64,
    logits: &[f64],
    cluster_label: usize,
    w_reg: f64,
    w_cls: f64,
) -> Result<f64, ModelError> {
    let weights = LossWeights {
        w_reg,
        w_cls,
        criterion: ClsCriterion::CrossEntropy,
    };
    let mut dlogits = vec![0.0; logits.len()];
    joint_loss_grad(speed_pred, speed_label, logits, cluster_label, &weights, 1.0, &mut dlogits)
        .map(|(loss, _)| loss)
}

/// Loss of one sample and its gradient, both multiplied by `scale`.
/// Returns `(scaled loss, d loss / d speed_pred)` and overwrites `dlogits`.
pub(crate) fn joint_loss_grad(
    speed_pred: f64,
    speed_label: f64,
    logits: &[f64],
    cluster_label: usize,
    weights: &LossWeights,
    scale: f64,
    dlogits: &mut [f64],
) -> Result<(f64, f64), ModelError> {
    let err = speed_pred - speed_label;
    let mut loss = weights.w_reg * err * err;
    let dpred = scale * weights.w_reg * 2.0 * err;
    dlogits.fill(0.0);
    if logits.is_empty() {
        return Ok((scale * loss, dpred));
    }
    if cluster_label >= logits.len() {
        return Err(ModelError::LabelOutOfRange {
            label: cluster_label,
            k: logits.len(),
        });
    }
    if weights.w_cls == 0.0 {
        return Ok((scale * loss, dpred));
    }
    let p = softmax(logits);
    match weights.criterion {
        ClsCriterion::CrossEntropy => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += weights.w_cls * (lse - logits[cluster_label]);
            for (j, d) in dlogits.iter_mut().enumerate() {
                let y = f64::from(u8::from(j == cluster_label));
                *d = scale * weights.w_cls * (p[j] - y);
            }
        }
        ClsCriterion::OneHotMse => {
            let k = logits.len() as f64;
            let g: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(j, pj)| {
                    let y = f64::from(u8::from(j == cluster_label));
                    loss += weights.w_cls * (pj - y) * (pj - y) / k;
                    2.0 * (pj - y) / k
                })
                .collect();
            let dot: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
            for (j, d) in dlogits.iter_mut().enumerate() {
                *d = scale * weights.w_cls * p[j] * (g[j] - dot);
            }
        }
    }
    Ok((scale * loss, dpred))
}
