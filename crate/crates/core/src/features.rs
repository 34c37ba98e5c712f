//! Per-point feature vectors with the dictionary speed attached.
//!
//! Two fixed layouts exist. Topographical: `[curv, yaw, elv, ptc, day, hour,
//! cds]`. Infrastructural: `[len, pos, sign_start, sign_stop, cc, day, hour,
//! cds]`. The layouts are a frozen contract; the `cds` entry is always last so
//! that dropping it yields the no-dictionary variant.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::KMeansModel;
use crate::dictionary::{CdsKey, CdsValue, ClusterDictionarySet, DictionaryError, Provenance};
use crate::domain::{position_percent, DomainError, Link, LinkId, LinkTable, TrajectoryPoint, Trip};
use crate::ilstm::slot_of;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("no vectors to fit")]
    EmptyInput,
    #[error("vector has {got} dimensions, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Topo,
    Infra,
}

impl FeatureKind {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureKind::Topo => &["curv", "yaw", "elv", "ptc", "day", "hour", "cds"],
            FeatureKind::Infra => &[
                "len",
                "pos",
                "sign_start",
                "sign_stop",
                "cc",
                "day",
                "hour",
                "cds",
            ],
        }
    }

    /// Full vector length, dictionary speed included.
    pub fn dim(self) -> usize {
        self.names().len()
    }

    /// Dimensions that are 0/1 flags and skip standardization.
    pub fn flag_mask(self) -> Vec<bool> {
        self.names()
            .iter()
            .map(|n| matches!(*n, "sign_start" | "sign_stop"))
            .collect()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Topo => "topo",
            FeatureKind::Infra => "infra",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topo" => Ok(Self::Topo),
            "infra" => Ok(Self::Infra),
            other => Err(format!("unknown feature kind '{other}'")),
        }
    }
}

/// Which layout a model consumes and whether the dictionary speed is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub with_cds: bool,
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        self.kind.dim() - usize::from(!self.with_cds)
    }

    pub fn names(&self) -> &'static [&'static str] {
        &self.kind.names()[..self.dim()]
    }

    pub fn flag_mask(&self) -> Vec<bool> {
        let mut m = self.kind.flag_mask();
        m.truncate(self.dim());
        m
    }

    /// The model-facing slice of a full vector.
    pub fn project<'a>(&self, v: &'a FeatureVector) -> &'a [f64] {
        &v.values[..self.dim()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    pub cluster_label: usize,
}

/// Assemble the vector of one point. `cds` must come from the lookup keyed by
/// the point's own cluster, day, hour and slot.
pub fn build_feature_vector(
    point: &TrajectoryPoint,
    link: &Link,
    cds: CdsValue,
    kind: FeatureKind,
    car_class: u8,
    cluster_label: usize,
) -> Result<FeatureVector, FeatureError> {
    let day = point.day as f64;
    let hour = point.hour as f64;
    let values = match kind {
        FeatureKind::Topo => vec![
            point.curv, point.yaw, point.elv, point.ptc, day, hour, cds.speed,
        ],
        FeatureKind::Infra => vec![
            link.length,
            position_percent(point.dist_along_link, link.length)?,
            f64::from(u8::from(link.sign_start)),
            f64::from(u8::from(link.sign_stop)),
            car_class as f64,
            day,
            hour,
            cds.speed,
        ],
    };
    Ok(FeatureVector {
        kind,
        values,
        cluster_label,
    })
}

/// Feature vectors and labels of one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripFeatures {
    pub trip_id: String,
    pub vectors: Vec<FeatureVector>,
    pub speeds: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// Runs inference clustering and dictionary lookup for every point of a trip.
pub struct FeatureAssembler<'a> {
    links: &'a LinkTable,
    kmeans: &'a KMeansModel,
    dict: &'a ClusterDictionarySet,
    kind: FeatureKind,
    clusters: BTreeMap<LinkId, usize>,
}

impl<'a> FeatureAssembler<'a> {
    pub fn new(
        links: &'a LinkTable,
        kmeans: &'a KMeansModel,
        dict: &'a ClusterDictionarySet,
        kind: FeatureKind,
    ) -> Self {
        let clusters = links
            .iter()
            .map(|l| (l.link_id.clone(), kmeans.assign_link(l)))
            .collect();
        Self {
            links,
            kmeans,
            dict,
            kind,
            clusters,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn kmeans(&self) -> &KMeansModel {
        self.kmeans
    }

    pub fn cluster_of(&self, link: &LinkId) -> Option<usize> {
        self.clusters.get(link).copied()
    }

    pub fn cds_for(&self, point: &TrajectoryPoint) -> Result<(usize, CdsValue), FeatureError> {
        let link = self
            .links
            .get(&point.link_id)
            .ok_or_else(|| DomainError::UnknownLink(point.link_id.clone()))?;
        let cluster = self.clusters[&point.link_id];
        let pct = position_percent(point.dist_along_link, link.length)?;
        let key = CdsKey {
            cluster,
            day: point.day as usize,
            hour: point.hour as usize,
            slot: slot_of(pct, self.dict.percent()),
        };
        Ok((cluster, self.dict.lookup(key)?))
    }

    pub fn assemble(&self, trip: &Trip) -> Result<TripFeatures, FeatureError> {
        let mut vectors = Vec::with_capacity(trip.len());
        let mut provenance = Vec::with_capacity(trip.len());
        for p in &trip.points {
            let link = self
                .links
                .get(&p.link_id)
                .ok_or_else(|| DomainError::UnknownLink(p.link_id.clone()))?;
            let (cluster, cds) = self.cds_for(p)?;
            vectors.push(build_feature_vector(
                p,
                link,
                cds,
                self.kind,
                trip.car_class,
                cluster,
            )?);
            provenance.push(cds.provenance);
        }
        Ok(TripFeatures {
            trip_id: trip.trip_id.0.clone(),
            vectors,
            speeds: trip.speeds(),
            provenance,
        })
    }
}

/// Per-dimension z-scoring fitted on training vectors. Flag dimensions and
/// constant dimensions pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'v>(
        vectors: impl IntoIterator<Item = &'v [f64]>,
        passthrough: &[bool],
    ) -> Result<Self, FeatureError> {
        let dim = passthrough.len();
        let mut n = 0usize;
        let mut sums = vec![0.0; dim];
        let mut rows: Vec<&[f64]> = Vec::new();
        for v in vectors {
            if v.len() != dim {
                return Err(FeatureError::DimensionMismatch {
                    got: v.len(),
                    expected: dim,
                });
            }
            for (s, x) in sums.iter_mut().zip(v) {
                *s += x;
            }
            rows.push(v);
            n += 1;
        }
        if n == 0 {
            return Err(FeatureError::EmptyInput);
        }
        let raw_means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut vars = vec![0.0; dim];
        for v in &rows {
            for ((acc, x), m) in vars.iter_mut().zip(*v).zip(&raw_means) {
                *acc += (x - m) * (x - m);
            }
        }
        let mut means = Vec::with_capacity(dim);
        let mut stds = Vec::with_capacity(dim);
        for i in 0..dim {
            let sd = (vars[i] / n as f64).sqrt();
            if passthrough[i] || sd <= 1e-12 * raw_means[i].abs().max(1.0) {
                means.push(0.0);
                stds.push(1.0);
            } else {
                means.push(raw_means[i]);
                stds.push(sd);
            }
        }
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// Z-scoring of the speed label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub mean: f64,
    pub std: f64,
}

impl LabelScaler {
    pub fn fit(labels: &[f64]) -> Result<Self, FeatureError> {
        if labels.is_empty() {
            return Err(FeatureError::EmptyInput);
        }
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let sd = (labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            mean,
            std: if sd > 1e-12 { sd } else { 1.0 },
        })
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Write vectors as CSV: one column per dimension, then `cluster_label` and
/// `speed_label`. Floats use shortest round-trip formatting.
pub fn write_feature_matrix(
    path: &Path,
    spec: FeatureSpec,
    rows: &[(&FeatureVector, f64)],
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(&spec.names().join(","));
    out.push_str(",cluster_label,speed_label\n");
    for (v, speed) in rows {
        for x in spec.project(v) {
            out.push_str(&x.to_string());
            out.push(',');
        }
        out.push_str(&format!("{},{}\n", v.cluster_label, speed));
    }
    crate::io::write_bytes(path, out.as_bytes())
}

/// Parse a matrix written by [`write_feature_matrix`].
pub fn read_feature_matrix(
    path: &Path,
    kind: FeatureKind,
) -> Result<Vec<(FeatureVector, f64)>, crate::io::IoError> {
    let fmt_err = |message: String| crate::io::IoError::Format {
        path: path.to_owned(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|source| crate::io::IoError::Csv {
        path: path.to_owned(),
        source,
    })?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| crate::io::IoError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let nums: Vec<&str> = rec.iter().collect();
        if nums.len() < 2 {
            return Err(fmt_err("row too short".into()));
        }
        let (vals, tail) = nums.split_at(nums.len() - 2);
        let values = vals
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| fmt_err(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let cluster_label = tail[0].parse().map_err(|e: std::num::ParseIntError| fmt_err(e.to_string()))?;
        let speed = tail[1].parse().map_err(|e: std::num::ParseFloatError| fmt_err(e.to_string()))?;
        rows.push((
            FeatureVector {
                kind,
                values,
                cluster_label,
            },
            speed,
        ));
    }
    Ok(rows)
}
