//! K-means over link topographical features.
//!
//! Features are z-scored with a [`Scaler`] that is frozen into the fitted
//! [`KMeansModel`], so links seen only at inference time are clustered in the
//! same space as the links the model was fitted on.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Link;

pub const N_LINK_FEATURES: usize = 9;

pub const LINK_FEATURE_NAMES: [&str; N_LINK_FEATURES] = [
    "curv_avg",
    "curv_max",
    "curv_min",
    "pitch_avg",
    "pitch_max",
    "pitch_min",
    "length",
    "functional_class",
    "speed_limit",
];

/// The k values exercised by the cluster-count sensitivity sweep.
pub const SWEEP_KS: [usize; 4] = [6, 30, 60, 120];
pub const DEFAULT_K: usize = 120;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no feature vectors")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{distinct} distinct points cannot form {k} clusters")]
    TooFewDistinctPoints { distinct: usize, k: usize },
    #[error("feature vector {0} has non-finite values")]
    NonFinite(usize),
}

/// Nine link features in [`LINK_FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFeatureVector(pub [f64; N_LINK_FEATURES]);

impl From<&Link> for LinkFeatureVector {
    fn from(l: &Link) -> Self {
        Self([
            l.curv_avg,
            l.curv_max,
            l.curv_min,
            l.pitch_avg,
            l.pitch_max,
            l.pitch_min,
            l.length,
            l.functional_class as f64,
            l.speed_limit,
        ])
    }
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: [f64; N_LINK_FEATURES],
    pub stds: [f64; N_LINK_FEATURES],
}

impl Scaler {
    pub fn transform(&self, v: &LinkFeatureVector) -> [f64; N_LINK_FEATURES] {
        std::array::from_fn(|i| (v.0[i] - self.means[i]) / self.stds[i])
    }

    pub fn inverse(&self, z: &[f64; N_LINK_FEATURES]) -> LinkFeatureVector {
        LinkFeatureVector(std::array::from_fn(|i| z[i] * self.stds[i] + self.means[i]))
    }
}

/// Standard deviations at or below this fraction of the feature's magnitude
/// are treated as zero variance.
const ZERO_VARIANCE_REL: f64 = 1e-12;

pub fn scaler_fit(features: &[LinkFeatureVector]) -> Result<Scaler, ClusterError> {
    if features.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    check_finite(features)?;
    let n = features.len() as f64;
    let means: [f64; N_LINK_FEATURES] =
        std::array::from_fn(|i| features.iter().map(|f| f.0[i]).sum::<f64>() / n);
    let stds = std::array::from_fn(|i| {
        let var = features
            .iter()
            .map(|f| (f.0[i] - means[i]).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        if sd <= ZERO_VARIANCE_REL * means[i].abs().max(1.0) {
            1.0
        } else {
            sd
        }
    });
    Ok(Scaler { means, stds })
}

fn check_finite(features: &[LinkFeatureVector]) -> Result<(), ClusterError> {
    match features
        .iter()
        .position(|f| f.0.iter().any(|x| !x.is_finite()))
    {
        Some(i) => Err(ClusterError::NonFinite(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent seedings; the run with the lowest final inertia is kept.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

/// Fitted centroids (in standardized space) together with their scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub seed: u64,
    pub scaler: Scaler,
    pub centroids: Vec<[f64; N_LINK_FEATURES]>,
    pub inertia: f64,
}

/// Diagnostics from a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Cluster of each input vector under the final centroids.
    pub labels: Vec<usize>,
    /// Inertia after seeding, then after each Lloyd update, then after the
    /// final assignment.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

type Point = [f64; N_LINK_FEATURES];

#[inline]
fn sq_dist(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(centroids: &[Point], p: &Point) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn inertia_of(points: &[Point], centroids: &[Point], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn kmeans_plus_plus(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // `pick` exists because distinct points outnumber chosen centroids.
        let c = points[pick.expect("a point with positive distance")];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One seeding followed by Lloyd iterations.
fn lloyd(points: &[Point], cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> (Vec<Point>, FitReport) {
    let mut centroids = kmeans_plus_plus(points, cfg.k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut history = vec![inertia_of(points, &centroids, &labels)];
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(&centroids, p).0;
        }
        reseed_empty(points, &centroids, &mut labels, cfg.k);
        let updated = cluster_means(points, &labels, cfg.k);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        history.push(inertia_of(points, &centroids, &labels));
        if shift < cfg.tol {
            break;
        }
    }

    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(&centroids, p).0;
    }
    history.push(inertia_of(points, &centroids, &labels));
    (
        centroids,
        FitReport {
            labels,
            inertia_history: history,
            iterations,
        },
    )
}

impl KMeansModel {
    /// Lloyd's algorithm with k-means++ seeding, restarted `n_init` times.
    pub fn fit(
        features: &[LinkFeatureVector],
        cfg: &KMeansConfig,
    ) -> Result<(Self, FitReport), ClusterError> {
        if cfg.k == 0 {
            return Err(ClusterError::InvalidK);
        }
        let scaler = scaler_fit(features)?;
        let points: Vec<Point> = features.iter().map(|f| scaler.transform(f)).collect();
        let distinct = points
            .iter()
            .map(|p| p.map(f64::to_bits))
            .collect::<HashSet<_>>()
            .len();
        if distinct < cfg.k {
            return Err(ClusterError::TooFewDistinctPoints {
                distinct,
                k: cfg.k,
            });
        }

        // One stream for all restarts: the first run matches a single-start fit.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut best: Option<(Vec<Point>, FitReport)> = None;
        for _ in 0..cfg.n_init.max(1) {
            let run = lloyd(&points, cfg, &mut rng);
            let better = best
                .as_ref()
                .is_none_or(|(_, b)| run.1.inertia_history.last() < b.inertia_history.last());
            if better {
                best = Some(run);
            }
        }
        let (centroids, report) = best.expect("at least one run");
        let inertia = *report.inertia_history.last().expect("non-empty history");

        let model = KMeansModel {
            k: cfg.k,
            seed: cfg.seed,
            scaler,
            centroids,
            inertia,
        };
        Ok((model, report))
    }

    /// Nearest centroid in standardized space, lowest index on ties.
    pub fn assign(&self, feature: &LinkFeatureVector) -> usize {
        nearest(&self.centroids, &self.scaler.transform(feature)).0
    }

    pub fn assign_link(&self, link: &Link) -> usize {
        self.assign(&LinkFeatureVector::from(link))
    }
}

/// Give every empty cluster the point currently farthest from its centroid.
fn reseed_empty(points: &[Point], centroids: &[Point], labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut taken = vec![false; points.len()];
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if taken[i] || sizes[labels[i]] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            sizes[labels[i]] -= 1;
            labels[i] = j;
            sizes[j] = 1;
            taken[i] = true;
        }
    }
}

fn cluster_means(points: &[Point], labels: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![[0.0; N_LINK_FEATURES]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| s.map(|v| v / c.max(1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per_blob: usize, centers: &[[f64; 9]], radius: f64) -> Vec<LinkFeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, radius).unwrap();
        centers
            .iter()
            .flat_map(|c| {
                (0..per_blob)
                    .map(|_| LinkFeatureVector(c.map(|x| x + noise.sample(&mut rng))))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn scaler_examples() {
        let v = LinkFeatureVector([1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let s = scaler_fit(&[v]).unwrap();
        assert_eq!(s.means, v.0);
        assert_eq!(s.stds, [1.0; 9]);

        let mut w = v;
        w.0[6] = 17.0;
        let s = scaler_fit(&[v, w]).unwrap();
        assert_eq!(s.means[6], 12.0);
        assert_eq!(s.stds[6], 5.0);
        assert_eq!(s.stds[0], 1.0);

        assert_eq!(scaler_fit(&[]), Err(ClusterError::EmptyInput));
    }

    #[test]
    fn k1_centroid_is_standardized_mean() {
        let data = blobs(3, 40, &[[0.0; 9], [5.0; 9]], 1.0);
        let (model, report) = KMeansModel::fit(&data, &KMeansConfig::new(1, 9)).unwrap();
        assert!(report.labels.iter().all(|&l| l == 0));
        // Standardized data has zero mean.
        for x in model.centroids[0] {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn separated_blobs_recovered_exactly() {
        let mut far = [0.0; 9];
        far[0] = 100.0;
        far[7] = 50.0;
        let data = blobs(11, 100, &[[0.0; 9], far], 1.0);
        let (model, report) = KMeansModel::fit(&data, &KMeansConfig::new(2, 5)).unwrap();
        let first = report.labels[0];
        for (i, &l) in report.labels.iter().enumerate() {
            assert_eq!(l == first, i < 100, "point {i}");
        }
        // Brute-force nearest-centroid oracle.
        for (f, &l) in data.iter().zip(&report.labels) {
            let z = model.scaler.transform(f);
            let d: Vec<f64> = model.centroids.iter().map(|c| sq_dist(c, &z)).collect();
            let best = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            assert_eq!(best, l);
            assert_eq!(model.assign(f), l);
        }
    }

    #[test]
    fn too_few_distinct_points() {
        let data = blobs(1, 100, &[[0.0; 9]], 1.0);
        assert_eq!(
            KMeansModel::fit(&data, &KMeansConfig::new(120, 1)).unwrap_err(),
            ClusterError::TooFewDistinctPoints { distinct: 100, k: 120 }
        );
        let dup = vec![LinkFeatureVector([1.0; 9]); 10];
        assert!(matches!(
            KMeansModel::fit(&dup, &KMeansConfig::new(2, 1)),
            Err(ClusterError::TooFewDistinctPoints { distinct: 1, .. })
        ));
        assert_eq!(
            KMeansModel::fit(&dup, &KMeansConfig::new(0, 1)).unwrap_err(),
            ClusterError::InvalidK
        );
    }

    #[test]
    fn deterministic_and_inertia_non_increasing() {
        let centers: Vec<[f64; 9]> = (0..6).map(|i| [i as f64 * 2.0; 9]).collect();
        let data = blobs(21, 30, &centers, 1.5);
        let cfg = KMeansConfig::new(6, 77);
        let (a, ra) = KMeansModel::fit(&data, &cfg).unwrap();
        let (b, rb) = KMeansModel::fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        for w in ra.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", ra.inertia_history);
        }
        assert!(a.inertia <= ra.inertia_history[0]);
    }

    #[test]
    fn assignment_matches_fit_labels_and_ties_go_low() {
        let centers: Vec<[f64; 9]> = (0..5).map(|i| [i as f64; 9]).collect();
        let data = blobs(8, 20, &centers, 0.8);
        let (model, report) = KMeansModel::fit(&data, &KMeansConfig::new(5, 2)).unwrap();
        for (f, &l) in data.iter().zip(&report.labels) {
            assert_eq!(model.assign(f), l);
        }
        // A raw feature equal to centroid 3 maps to 3.
        let c3 = model.scaler.inverse(&model.centroids[3]);
        assert_eq!(model.assign(&c3), 3);

        let mut tie = model.clone();
        tie.scaler = Scaler { means: [0.0; 9], stds: [1.0; 9] };
        tie.centroids = vec![[10.0; 9], [-1.0; 9], [10.0; 9], [10.0; 9], [1.0; 9]];
        assert_eq!(tie.assign(&LinkFeatureVector([0.0; 9])), 1);
    }

    #[test]
    fn json_layout() {
        let data = blobs(4, 10, &[[0.0; 9], [3.0; 9]], 0.5);
        let (model, _) = KMeansModel::fit(&data, &KMeansConfig::new(2, 1)).unwrap();
        let v = serde_json::to_value(&model).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["scaler"]["means"].as_array().unwrap().len(), 9);
        assert_eq!(v["centroids"].as_array().unwrap().len(), 2);
        let back: KMeansModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, model);
    }
}
