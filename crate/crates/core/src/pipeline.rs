//! End-to-end experiment stages: dictionary construction from the reference
//! regions, feature assembly, model training and evaluation.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, KMeansConfig, KMeansModel, LinkFeatureVector, DEFAULT_K};
use crate::dictionary::{build_cluster_dictionary, Aggregation, ClusterDictionarySet, DictionaryError};
use crate::domain::{validate_trip, DomainError, LinkId, LinkTable, TripId};
use crate::features::{FeatureAssembler, FeatureError, FeatureKind, FeatureSpec, LabelScaler, Standardizer, TripFeatures};
use crate::ilstm::{Ilstm, IlstmError, SpeedGrid, DEFAULT_PERCENT};
use crate::metrics::{evaluate, MetricsError, Report};
use crate::model::{
    point_samples, sequence_samples, train_resampled, Arch, ArchKind, Checkpoint, ClsCriterion,
    EpochRecord, LossWeights, MeanBaseline, ModelError, Network, PredictError, Predictor, Sample,
    TrainConfig,
};
use crate::roppa::{build_dataset, RoppaError, DEFAULT_MAX_SKIP, DEFAULT_SZ};
use crate::seeding::derive_seed;
use crate::synth::{Dataset, Split, WorldConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("link ids shared between the reference regions and the {split} split ({count}, e.g. {example})")]
    LinkOverlap {
        split: String,
        count: usize,
        example: LinkId,
    },
    #[error("trip {trip}: {}", .errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidTrip {
        trip: TripId,
        errors: Vec<DomainError>,
    },
    #[error("{split} split has no trips")]
    EmptySplit { split: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Ilstm(#[from] IlstmError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Roppa(#[from] RoppaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// Errors caused by bad inputs rather than by the computation itself.
    pub fn is_validation(&self) -> bool {
        match self {
            PipelineError::LinkOverlap { .. }
            | PipelineError::InvalidTrip { .. }
            | PipelineError::EmptySplit { .. }
            | PipelineError::InvalidConfig(_)
            | PipelineError::Ilstm(_)
            | PipelineError::Cluster(_) => true,
            PipelineError::Feature(FeatureError::Domain(_)) => true,
            PipelineError::Predict(PredictError::Invalid(_)) => true,
            _ => false,
        }
    }
}

fn d_k() -> usize {
    DEFAULT_K
}
fn d_percent() -> u32 {
    DEFAULT_PERCENT
}
fn d_sz() -> usize {
    DEFAULT_SZ
}
fn d_max_skip() -> u32 {
    DEFAULT_MAX_SKIP
}
fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    1000
}
fn d_lr0() -> f64 {
    1e-3
}
fn d_lr_min() -> f64 {
    1e-5
}
fn d_w_reg() -> f64 {
    1.0
}
fn d_w_cls() -> f64 {
    0.1
}

/// Settings shared by every stage after data generation. The seed has no
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_percent")]
    pub percent: u32,
    #[serde(default)]
    pub agg: Aggregation,
    #[serde(default = "default_features")]
    pub features: FeatureKind,
    #[serde(default = "d_sz")]
    pub sz: usize,
    #[serde(default = "d_max_skip")]
    pub max_skip: u32,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr0")]
    pub lr0: f64,
    #[serde(default = "d_lr_min")]
    pub lr_min: f64,
    #[serde(default = "d_w_reg")]
    pub w_reg: f64,
    #[serde(default = "d_w_cls")]
    pub w_cls: f64,
    #[serde(default)]
    pub criterion: ClsCriterion,
    /// Draw fresh ROPPA sequences every epoch instead of reusing one draw.
    #[serde(default)]
    pub resample: bool,
    /// Used by commands that also generate the data.
    #[serde(default)]
    pub world: Option<WorldConfig>,
}

fn default_features() -> FeatureKind {
    FeatureKind::Infra
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            k: d_k(),
            percent: d_percent(),
            agg: Aggregation::default(),
            features: default_features(),
            sz: d_sz(),
            max_skip: d_max_skip(),
            epochs: d_epochs(),
            batch_size: d_batch(),
            lr0: d_lr0(),
            lr_min: d_lr_min(),
            w_reg: d_w_reg(),
            w_cls: d_w_cls(),
            criterion: ClsCriterion::default(),
            resample: false,
            world: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_owned()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.sz == 0 || self.max_skip == 0 {
            return bad("sz and max_skip must be positive");
        }
        crate::ilstm::slot_count(self.percent)?;
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr0: self.lr0,
            lr_min: self.lr_min,
            epochs: self.epochs,
            weights: LossWeights {
                w_reg: self.w_reg,
                w_cls: self.w_cls,
                criterion: self.criterion,
            },
            seed,
        }
    }
}

/// Fails when any link of the reference regions also appears in one of the
/// model-facing splits.
pub fn check_disjoint(reference: &LinkTable, others: &[(&str, &LinkTable)]) -> Result<(), PipelineError> {
    for (name, table) in others {
        let shared: Vec<&LinkId> = table.ids().filter(|id| reference.contains(id)).collect();
        if let Some(first) = shared.first() {
            return Err(PipelineError::LinkOverlap {
                split: (*name).to_owned(),
                count: shared.len(),
                example: (*first).clone(),
            });
        }
    }
    Ok(())
}

pub fn check_dataset(d: &Dataset) -> Result<(), PipelineError> {
    check_disjoint(
        &d.reference.links,
        &[("train", &d.train.links), ("val", &d.val.links), ("test", &d.test.links)],
    )
}

fn validated(split: &Split) -> Result<(), PipelineError> {
    for t in &split.trips {
        validate_trip(t.clone(), &split.links).map_err(|errors| PipelineError::InvalidTrip {
            trip: t.trip_id.clone(),
            errors,
        })?;
    }
    Ok(())
}

/// One finalized speed grid per link that has registrations.
pub fn link_grids(split: &Split, percent: u32) -> Result<BTreeMap<LinkId, SpeedGrid>, PipelineError> {
    validated(split)?;
    let mut acc: BTreeMap<&LinkId, Ilstm> = BTreeMap::new();
    for t in &split.trips {
        for p in &t.points {
            let link = split.links.get(&p.link_id).expect("validated");
            let grid = match acc.get_mut(&p.link_id) {
                Some(g) => g,
                None => acc.entry(&p.link_id).or_insert(Ilstm::new(percent)?),
            };
            grid.fill(p.day, p.hour, &[p.dist_along_link], &[p.speed], link.length)?;
        }
    }
    Ok(acc.into_iter().map(|(id, g)| (id.clone(), g.finalize())).collect())
}

/// Cluster the reference links and merge their grids per cluster.
pub fn build_dictionary(
    reference: &Split,
    k: usize,
    percent: u32,
    agg: Aggregation,
    seed: u64,
) -> Result<(KMeansModel, ClusterDictionarySet), PipelineError> {
    let feats: Vec<LinkFeatureVector> = reference.links.iter().map(LinkFeatureVector::from).collect();
    let (kmeans, _) = KMeansModel::fit(&feats, &KMeansConfig::new(k, seed))?;
    let clusters: BTreeMap<LinkId, usize> = reference
        .links
        .iter()
        .map(|l| (l.link_id.clone(), kmeans.assign_link(l)))
        .collect();
    let grids = link_grids(reference, percent)?;
    let dict = build_cluster_dictionary(&grids, &clusters, k, percent, agg)?;
    Ok((kmeans, dict))
}

/// Feature vectors of every trip of a split, in trip order.
pub fn assemble_split(
    split: &Split,
    kmeans: &KMeansModel,
    dict: &ClusterDictionarySet,
    kind: FeatureKind,
) -> Result<Vec<TripFeatures>, PipelineError> {
    validated(split)?;
    let assembler = FeatureAssembler::new(&split.links, kmeans, dict, kind);
    split
        .trips
        .par_iter()
        .map(|t| assembler.assemble(t).map_err(PipelineError::from))
        .collect()
}

/// A trainable method: architecture and whether the dictionary speed is fed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub arch: ArchKind,
    pub with_cds: bool,
}

impl Method {
    pub fn new(name: &str, arch: ArchKind, with_cds: bool) -> Self {
        Self {
            name: name.to_owned(),
            arch,
            with_cds,
        }
    }

    /// Feedforward without dictionary speed, feedforward with it, and the
    /// recurrent model with it.
    pub fn standard() -> Vec<Method> {
        vec![
            Method::new("MLP", ArchKind::Mlp, false),
            Method::new("MLP_f", ArchKind::Mlp, true),
            Method::new("ROPPA_RNN", ArchKind::Rnn, true),
        ]
    }
}

pub const MEAN_METHOD: &str = "mean";

/// A trained model plus its per-epoch history.
#[derive(Debug, Clone)]
pub struct Trained {
    pub method: Method,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

pub fn train_method(
    method: &Method,
    kind: FeatureKind,
    k: usize,
    train: &[TripFeatures],
    val: &[TripFeatures],
    cfg: &PipelineConfig,
) -> Result<Trained, PipelineError> {
    if train.iter().all(|t| t.vectors.is_empty()) {
        return Err(PipelineError::EmptySplit { split: "train".into() });
    }
    let spec = FeatureSpec {
        kind,
        with_cds: method.with_cds,
    };
    let standardizer = Standardizer::fit(
        train.iter().flat_map(|t| t.vectors.iter().map(|v| spec.project(v))),
        &spec.flag_mask(),
    )?;
    let labels: Vec<f64> = train.iter().flat_map(|t| t.speeds.iter().copied()).collect();
    let label_scaler = LabelScaler::fit(&labels)?;

    let arch = match method.arch {
        ArchKind::Rnn => Arch::rnn(spec.dim(), k),
        ArchKind::Mlp => Arch::mlp(spec.dim()),
    };
    let net = Network::new(arch.clone())?;
    let init = net.init_params(derive_seed(cfg.seed, &format!("init/{}", method.name), 0));
    let tcfg = cfg.train_config(derive_seed(cfg.seed, &format!("train/{}", method.name), 0));
    let roppa_seed = derive_seed(cfg.seed, &format!("roppa/{}", method.name), 0);

    let outcome = match method.arch {
        ArchKind::Rnn => {
            let val_inputs = build_dataset(val, cfg.sz, cfg.max_skip, roppa_seed ^ 1, 0)?;
            let val_samples = sequence_samples(&val_inputs, &spec, &standardizer, &label_scaler);
            let draw = |epoch: u64| -> Result<Vec<Sample>, PipelineError> {
                let inputs = build_dataset(train, cfg.sz, cfg.max_skip, roppa_seed, epoch)?;
                Ok(sequence_samples(&inputs, &spec, &standardizer, &label_scaler))
            };
            if cfg.resample {
                train_resampled(
                    &net,
                    init,
                    |epoch| {
                        draw(epoch)
                            .map(Cow::Owned)
                            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
                    },
                    &val_samples,
                    &tcfg,
                )?
            } else {
                crate::model::train(&net, init, &draw(0)?, &val_samples, &tcfg)?
            }
        }
        ArchKind::Mlp => {
            let train_samples = point_samples(train, &spec, &standardizer, &label_scaler);
            let val_samples = point_samples(val, &spec, &standardizer, &label_scaler);
            crate::model::train(&net, init, &train_samples, &val_samples, &tcfg)?
        }
    };
    let checkpoint = Checkpoint {
        name: method.name.clone(),
        layout: net.layout().to_vec(),
        arch,
        weights: outcome.params,
        features: spec,
        standardizer,
        label_scaler,
        config: tcfg,
        sz: cfg.sz,
        max_skip: cfg.max_skip,
        seed: cfg.seed,
    };
    Ok(Trained {
        method: method.clone(),
        checkpoint,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
    })
}

/// Predictions of a checkpoint for every point of `trips`, concatenated.
pub fn predict_all(
    predictor: &Predictor,
    trips: &[TripFeatures],
    seed: u64,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    trips
        .par_iter()
        .map(|t| predictor.predict_features(t, seed).map_err(PipelineError::from))
        .collect()
}

pub fn prediction_seed(seed: u64) -> u64 {
    derive_seed(seed, "predict", 0)
}

/// Report over `test` with the mean baseline first, then each checkpoint.
pub fn evaluate_checkpoints(
    checkpoints: &[Checkpoint],
    mean: &MeanBaseline,
    test: &[TripFeatures],
    seed: u64,
) -> Result<Report, PipelineError> {
    let labels: Vec<f64> = test.iter().flat_map(|t| t.speeds.iter().copied()).collect();
    let mut methods = vec![(MEAN_METHOD.to_owned(), mean.predict(labels.len()))];
    for c in checkpoints {
        let predictor = Predictor::new(c.clone())?;
        let preds = predict_all(&predictor, test, prediction_seed(seed))?;
        methods.push((c.name.clone(), preds.concat()));
    }
    Ok(evaluate(&methods, &labels)?)
}

/// Output of one full experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub kmeans: KMeansModel,
    pub dict: ClusterDictionarySet,
    pub mean: MeanBaseline,
    pub trained: Vec<Trained>,
    pub report: Report,
}

/// Build the dictionary, train `methods` and evaluate them on the test split.
pub fn run_experiment(
    data: &Dataset,
    cfg: &PipelineConfig,
    methods: &[Method],
) -> Result<Experiment, PipelineError> {
    cfg.validate()?;
    check_dataset(data)?;
    for (name, split) in [("train", &data.train), ("test", &data.test)] {
        if split.trips.is_empty() {
            return Err(PipelineError::EmptySplit { split: name.into() });
        }
    }
    let (kmeans, dict) = build_dictionary(&data.reference, cfg.k, cfg.percent, cfg.agg, cfg.seed)?;
    let train = assemble_split(&data.train, &kmeans, &dict, cfg.features)?;
    let val = assemble_split(&data.val, &kmeans, &dict, cfg.features)?;
    let test = assemble_split(&data.test, &kmeans, &dict, cfg.features)?;
    let labels: Vec<f64> = train.iter().flat_map(|t| t.speeds.iter().copied()).collect();
    let mean = MeanBaseline::fit(&labels)?;
    let trained = methods
        .par_iter()
        .map(|m| train_method(m, cfg.features, cfg.k, &train, &val, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let checkpoints: Vec<Checkpoint> = trained.iter().map(|t| t.checkpoint.clone()).collect();
    let report = evaluate_checkpoints(&checkpoints, &mean, &test, cfg.seed)?;
    Ok(Experiment {
        kmeans,
        dict,
        mean,
        trained,
        report,
    })
}

/// One row of a cluster-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Rerun the dictionary and the recurrent model for each `k`.
pub fn sweep_k(data: &Dataset, cfg: &PipelineConfig, ks: &[usize]) -> Result<Vec<SweepRow>, PipelineError> {
    let method = Method::new("ROPPA_RNN", ArchKind::Rnn, true);
    ks.iter()
        .map(|&k| {
            let run = PipelineConfig { k, ..cfg.clone() };
            let exp = run_experiment(data, &run, std::slice::from_ref(&method))?;
            let row = exp.report.row(&method.name).expect("method evaluated");
            Ok(SweepRow {
                k,
                mse: row.mse,
                rmse: row.rmse,
                mae: row.mae,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("k,mse,rmse,mae\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.k, r.mse, r.rmse, r.mae));
    }
    s
}

/// `epoch,lr,train_loss,train_mse,val_mse`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,train_mse,val_mse\n");
    for r in history {
        s.push_str(&format!(
            "{},{:.8},{:.6},{:.6},{}\n",
            r.epoch,
            r.lr,
            r.train_loss,
            r.train_mse,
            r.val_mse.map(|v| format!("{v:.6}")).unwrap_or_default()
        ));
    }
    s
}
