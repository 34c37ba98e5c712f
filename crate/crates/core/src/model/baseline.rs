//! Constant-prediction baseline.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Predicts the mean training speed everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanBaseline {
    pub mean: f64,
}

impl MeanBaseline {
    pub fn fit(labels: &[f64]) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        Ok(Self {
            mean: labels.iter().sum::<f64>() / labels.len() as f64,
        })
    }

    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.mean; n]
    }
}
