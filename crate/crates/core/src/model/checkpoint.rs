//! Serialized trained models and per-trip speed profile prediction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layers::ParamBlock;
use super::network::{Arch, ArchKind, Network};
use super::train::TrainConfig;
use super::{ModelError, Sample};
use crate::clustering::KMeansModel;
use crate::dictionary::ClusterDictionarySet;
use crate::domain::{validate_trip, DomainError, LinkTable, Trip};
use crate::features::{FeatureAssembler, FeatureError, FeatureSpec, LabelScaler, Standardizer, TripFeatures};
use crate::roppa::{build_roppa_input, input_rng, RoppaError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("trip failed validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<DomainError>),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Roppa(#[from] RoppaError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to rebuild and apply a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Method name used in reports.
    pub name: String,
    pub arch: Arch,
    /// Order and shapes of the blocks in `weights`.
    pub layout: Vec<ParamBlock>,
    pub weights: Vec<f64>,
    pub features: FeatureSpec,
    pub standardizer: Standardizer,
    pub label_scaler: LabelScaler,
    pub config: TrainConfig,
    /// ROPPA length and maximum gap; ignored by feedforward models.
    pub sz: usize,
    pub max_skip: u32,
    pub seed: u64,
}

/// A checkpoint with its network rebuilt and checked.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub checkpoint: Checkpoint,
    net: Network,
}

impl Predictor {
    pub fn new(checkpoint: Checkpoint) -> Result<Self, ModelError> {
        let net = Network::new(checkpoint.arch.clone())?;
        if net.layout() != checkpoint.layout.as_slice() {
            return Err(ModelError::InvalidArch("layout does not match architecture".into()));
        }
        if checkpoint.weights.len() != net.n_params() {
            return Err(ModelError::ShapeMismatch {
                what: "weights",
                got: checkpoint.weights.len(),
                expected: net.n_params(),
            });
        }
        if checkpoint.standardizer.dim() != checkpoint.arch.input_dim
            || checkpoint.features.dim() != checkpoint.arch.input_dim
        {
            return Err(ModelError::ShapeMismatch {
                what: "standardizer",
                got: checkpoint.standardizer.dim(),
                expected: checkpoint.arch.input_dim,
            });
        }
        Ok(Self { checkpoint, net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Speeds in km/h for every point of an assembled trip, dropout disabled.
    /// `seed` keys the ROPPA draws so predictions are reproducible.
    pub fn predict_features(&self, trip: &TripFeatures, seed: u64) -> Result<Vec<f64>, PredictError> {
        let c = &self.checkpoint;
        let mut out = Vec::with_capacity(trip.vectors.len());
        for n in 0..trip.vectors.len() {
            let sample = match c.arch.kind {
                ArchKind::Rnn => {
                    let mut rng = input_rng(seed, &trip.trip_id, n, 0);
                    let inp = build_roppa_input(trip, n, c.sz, c.max_skip, &mut rng)?;
                    Sample::from_sequence(
                        inp.sequence.iter().map(Vec::as_slice),
                        &c.features,
                        &c.standardizer,
                        0.0,
                        inp.cluster_label,
                    )
                }
                ArchKind::Mlp => Sample::from_sequence(
                    [trip.vectors[n].values.as_slice()],
                    &c.features,
                    &c.standardizer,
                    0.0,
                    trip.vectors[n].cluster_label,
                ),
            };
            let z = self.net.predict_speed(&c.weights, &sample)?;
            out.push(c.label_scaler.invert(z));
        }
        Ok(out)
    }
}

/// Validate a trip, attach dictionary speeds, and predict its speed profile.
pub fn predict_trip(
    predictor: &Predictor,
    dict: &ClusterDictionarySet,
    kmeans: &KMeansModel,
    trip: &Trip,
    links: &LinkTable,
    seed: u64,
) -> Result<Vec<f64>, PredictError> {
    let trip = validate_trip(trip.clone(), links).map_err(PredictError::Invalid)?;
    let assembler = FeatureAssembler::new(links, kmeans, dict, predictor.checkpoint.features.kind);
    let feats = assembler.assemble(&trip)?;
    predictor.predict_features(&feats, seed)
}
