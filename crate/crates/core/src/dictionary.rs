//! Cluster speed dictionaries.
//!
//! Per-link [`SpeedGrid`]s of the dictionary regions are merged by cluster id
//! into one grid per cluster. Lookups walk a fixed fallback ladder so that a
//! speed is always available once any data exists.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{LinkId, DAYS, HOURS};
use crate::ilstm::{GridCell, IlstmError, SpeedGrid};

pub const DEFAULT_MAX_HOUR_OFFSET: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DictionaryError {
    #[error("grid for link {link} has percent {got}, expected {expected}")]
    DimensionMismatch { link: LinkId, got: u32, expected: u32 },
    #[error("cluster id {cluster} out of range for k = {k}")]
    ClusterIdOutOfRange { cluster: usize, k: usize },
    #[error("link {0} has a grid but no cluster id")]
    MissingCluster(LinkId),
    #[error("lookup index out of range: cluster {cluster}, day {day}, hour {hour}, slot {slot}")]
    IndexOutOfRange {
        cluster: usize,
        day: usize,
        hour: usize,
        slot: usize,
    },
    #[error("dictionary holds no speed records")]
    NoData,
    #[error("dictionary has {got} grids for k = {k}")]
    GridCount { got: usize, k: usize },
    #[error(transparent)]
    Grid(#[from] IlstmError),
}

/// How member link grids are merged into a cluster grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Count-weighted: the mean of all pooled underlying records.
    #[default]
    Pooled,
    /// Plain mean of member cell means.
    Unweighted,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Pooled => "pooled",
            Aggregation::Unweighted => "unweighted",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "unweighted" => Ok(Self::Unweighted),
            other => Err(format!("unknown aggregation '{other}'")),
        }
    }
}

/// Which rung of the fallback ladder produced a dictionary speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Exact,
    HourNeighbor,
    ClusterMean,
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdsValue {
    pub speed: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CdsKey {
    pub cluster: usize,
    pub day: usize,
    pub hour: usize,
    pub slot: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictionaryRepr {
    k: usize,
    percent: u32,
    global_mean: Option<f64>,
    grids: Vec<SpeedGrid>,
}

/// One aggregated grid per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionaryRepr", into = "DictionaryRepr")]
pub struct ClusterDictionarySet {
    k: usize,
    percent: u32,
    global_mean: Option<f64>,
    grids: Vec<SpeedGrid>,
    /// Count-weighted mean of each cluster grid; derived, not serialized.
    cluster_means: Vec<Option<f64>>,
}

impl TryFrom<DictionaryRepr> for ClusterDictionarySet {
    type Error = DictionaryError;

    fn try_from(r: DictionaryRepr) -> Result<Self, Self::Error> {
        if r.grids.len() != r.k {
            return Err(DictionaryError::GridCount {
                got: r.grids.len(),
                k: r.k,
            });
        }
        if let Some(g) = r.grids.iter().find(|g| g.percent() != r.percent) {
            return Err(DictionaryError::DimensionMismatch {
                link: LinkId::from("<cluster grid>"),
                got: g.percent(),
                expected: r.percent,
            });
        }
        Ok(Self::from_parts(r.k, r.percent, r.global_mean, r.grids))
    }
}

impl From<ClusterDictionarySet> for DictionaryRepr {
    fn from(d: ClusterDictionarySet) -> Self {
        DictionaryRepr {
            k: d.k,
            percent: d.percent,
            global_mean: d.global_mean,
            grids: d.grids,
        }
    }
}

impl ClusterDictionarySet {
    fn from_parts(k: usize, percent: u32, global_mean: Option<f64>, grids: Vec<SpeedGrid>) -> Self {
        let cluster_means = grids.iter().map(SpeedGrid::overall_mean).collect();
        Self {
            k,
            percent,
            global_mean,
            grids,
            cluster_means,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn percent(&self) -> u32 {
        self.percent
    }

    pub fn slots(&self) -> usize {
        (100 / self.percent) as usize
    }

    pub fn global_mean(&self) -> Option<f64> {
        self.global_mean
    }

    pub fn grid(&self, cluster: usize) -> &SpeedGrid {
        &self.grids[cluster]
    }

    pub fn grids(&self) -> &[SpeedGrid] {
        &self.grids
    }

    /// Dictionary speed for a key, using a three-hour neighbor window.
    pub fn lookup(&self, key: CdsKey) -> Result<CdsValue, DictionaryError> {
        self.lookup_with(key, DEFAULT_MAX_HOUR_OFFSET)
    }

    /// Fallback ladder: exact cell, then the nearest non-empty same-day
    /// same-slot hours within `max_hour_offset` (both sides pooled at equal
    /// offset, hours wrap), then the whole cluster grid, then the global mean.
    pub fn lookup_with(
        &self,
        key: CdsKey,
        max_hour_offset: usize,
    ) -> Result<CdsValue, DictionaryError> {
        let CdsKey {
            cluster,
            day,
            hour,
            slot,
        } = key;
        if cluster >= self.k || day >= DAYS || hour >= HOURS || slot >= self.slots() {
            return Err(DictionaryError::IndexOutOfRange {
                cluster,
                day,
                hour,
                slot,
            });
        }
        let grid = &self.grids[cluster];
        let exact = grid.cell(day, hour, slot);
        if let Some(speed) = exact.mean {
            return Ok(CdsValue {
                speed,
                provenance: Provenance::Exact,
            });
        }
        for d in 1..=max_hour_offset.min(HOURS / 2 - 1) {
            let before = grid.cell(day, (hour + HOURS - d) % HOURS, slot);
            let after = grid.cell(day, (hour + d) % HOURS, slot);
            if let Some(speed) = weighted_mean([before, after].iter()) {
                return Ok(CdsValue {
                    speed,
                    provenance: Provenance::HourNeighbor,
                });
            }
        }
        if let Some(speed) = self.cluster_means[cluster] {
            return Ok(CdsValue {
                speed,
                provenance: Provenance::ClusterMean,
            });
        }
        self.global_mean
            .map(|speed| CdsValue {
                speed,
                provenance: Provenance::GlobalMean,
            })
            .ok_or(DictionaryError::NoData)
    }
}

fn weighted_mean<'a>(cells: impl Iterator<Item = &'a GridCell>) -> Option<f64> {
    let (sum, n) = cells
        .filter_map(|c| c.mean.map(|m| (m * c.count as f64, c.count)))
        .fold((0.0, 0u64), |(s, n), (x, c)| (s + x, n + c));
    (n > 0).then(|| sum / n as f64)
}

/// Merge per-link grids into one grid per cluster.
pub fn build_cluster_dictionary(
    grids_by_link: &BTreeMap<LinkId, SpeedGrid>,
    cluster_by_link: &BTreeMap<LinkId, usize>,
    k: usize,
    percent: u32,
    aggregation: Aggregation,
) -> Result<ClusterDictionarySet, DictionaryError> {
    let empty = SpeedGrid::empty(percent)?;
    let mut members: Vec<Vec<&SpeedGrid>> = vec![Vec::new(); k];
    for (link, grid) in grids_by_link {
        if grid.percent() != percent {
            return Err(DictionaryError::DimensionMismatch {
                link: link.clone(),
                got: grid.percent(),
                expected: percent,
            });
        }
        let cluster = *cluster_by_link
            .get(link)
            .ok_or_else(|| DictionaryError::MissingCluster(link.clone()))?;
        if cluster >= k {
            return Err(DictionaryError::ClusterIdOutOfRange { cluster, k });
        }
        members[cluster].push(grid);
    }

    let grids: Vec<SpeedGrid> = members
        .iter()
        .map(|group| aggregate(group, &empty, aggregation))
        .collect();
    let global_mean = weighted_mean(grids_by_link.values().flat_map(|g| g.cells()));
    Ok(ClusterDictionarySet::from_parts(k, percent, global_mean, grids))
}

fn aggregate(group: &[&SpeedGrid], empty: &SpeedGrid, aggregation: Aggregation) -> SpeedGrid {
    let mut out = empty.clone();
    if group.is_empty() {
        return out;
    }
    for (idx, cell) in out.cells_mut().iter_mut().enumerate() {
        let members = group.iter().map(|g| &g.cells()[idx]);
        let count: u64 = members.clone().map(|c| c.count).sum();
        if count == 0 {
            continue;
        }
        let mean = match aggregation {
            Aggregation::Pooled => weighted_mean(members),
            Aggregation::Unweighted => {
                let means: Vec<f64> = members.filter_map(|c| c.mean).collect();
                Some(means.iter().sum::<f64>() / means.len() as f64)
            }
        };
        *cell = GridCell { count, mean };
    }
    out
}
