//! Recurrent speed model, feedforward and constant baselines, and training.

mod adam;
mod baseline;
mod checkpoint;
mod layers;
mod loss;
mod network;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{cosine_lr, AdamState};
pub use baseline::MeanBaseline;
pub use checkpoint::{predict_trip, Checkpoint, PredictError, Predictor};
pub use layers::ParamBlock;
pub use loss::{joint_loss, softmax, ClsCriterion, LossWeights};
pub use network::{
    Arch, ArchKind, Network, DEFAULT_CLS_HIDDEN, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
    DEFAULT_REG_HIDDEN,
};
pub use train::{eval_mse, train, train_resampled, EpochRecord, TrainConfig, TrainOutcome};

use crate::features::{FeatureSpec, LabelScaler, Standardizer, TripFeatures};
use crate::roppa::RoppaInput;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what} has size {got}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("cluster label {label} outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("schedule step {step} outside 0..={total}")]
    InvalidStep { step: u64, total: u64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid architecture {0}")]
    InvalidArch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// One standardized model input: `steps` vectors stored back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seq: Vec<f64>,
    pub steps: usize,
    /// Standardized speed label.
    pub label: f64,
    pub cluster: usize,
}

impl Sample {
    /// Project each vector of a sequence to `spec` and standardize it.
    pub fn from_sequence<'v>(
        vectors: impl IntoIterator<Item = &'v [f64]>,
        spec: &FeatureSpec,
        standardizer: &Standardizer,
        label: f64,
        cluster: usize,
    ) -> Self {
        let mut seq = Vec::new();
        let mut steps = 0;
        for v in vectors {
            seq.extend(standardizer.apply(&v[..spec.dim()]));
            steps += 1;
        }
        Self {
            seq,
            steps,
            label,
            cluster,
        }
    }
}

/// Samples for the recurrent model, one per ROPPA input.
pub fn sequence_samples(
    inputs: &[RoppaInput],
    spec: &FeatureSpec,
    standardizer: &Standardizer,
    labels: &LabelScaler,
) -> Vec<Sample> {
    inputs
        .iter()
        .map(|inp| {
            Sample::from_sequence(
                inp.sequence.iter().map(Vec::as_slice),
                spec,
                standardizer,
                labels.apply(inp.speed_label),
                inp.cluster_label,
            )
        })
        .collect()
}

/// Single-vector samples, one per point, for feedforward models.
pub fn point_samples(
    trips: &[TripFeatures],
    spec: &FeatureSpec,
    standardizer: &Standardizer,
    labels: &LabelScaler,
) -> Vec<Sample> {
    trips
        .iter()
        .flat_map(|t| t.vectors.iter().zip(&t.speeds))
        .map(|(v, &y)| {
            Sample::from_sequence(
                [v.values.as_slice()],
                spec,
                standardizer,
                labels.apply(y),
                v.cluster_label,
            )
        })
        .collect()
}
