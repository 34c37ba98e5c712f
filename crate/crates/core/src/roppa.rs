//! Randomly ordered past point association.
//!
//! For a target point `n`, a random skip array of `sz` gaps in
//! `1..=max_skip` is walked backwards from `n`; the visited indices plus `n`
//! form a short ordered sequence of feature vectors whose label is the speed
//! registered at `n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::TripFeatures;
use crate::seeding::{fnv1a, splitmix};

pub const DEFAULT_SZ: usize = 5;
pub const DEFAULT_MAX_SKIP: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoppaError {
    #[error("sz and max_skip must both be at least 1 (got sz = {sz}, max_skip = {max_skip})")]
    InvalidParams { sz: usize, max_skip: u32 },
    #[error("trip has no points")]
    EmptyTrip,
    #[error("target {n} outside trip of length {len}")]
    TargetOutOfRange { n: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSkipArray(pub Vec<u32>);

pub fn generate_rsa<R: Rng + ?Sized>(
    sz: usize,
    max_skip: u32,
    rng: &mut R,
) -> Result<RandomSkipArray, RoppaError> {
    if sz == 0 || max_skip == 0 {
        return Err(RoppaError::InvalidParams { sz, max_skip });
    }
    Ok(RandomSkipArray(
        (0..sz).map(|_| rng.random_range(1..=max_skip)).collect(),
    ))
}

/// Indices visited by subtracting the skips from `n` in turn, clamped at 0,
/// returned in ascending order with `n` last.
pub fn roppa_indices(n: usize, rsa: &RandomSkipArray) -> Vec<usize> {
    let mut out = Vec::with_capacity(rsa.0.len() + 1);
    out.push(n);
    let mut idx = n;
    for &skip in &rsa.0 {
        idx = idx.saturating_sub(skip as usize);
        out.push(idx);
    }
    out.reverse();
    out
}

/// One model input: an ordered sequence ending at the target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoppaInput {
    pub indices: Vec<usize>,
    pub sequence: Vec<Vec<f64>>,
    pub speed_label: f64,
    pub cluster_label: usize,
}

pub fn build_roppa_input<R: Rng + ?Sized>(
    trip: &TripFeatures,
    n: usize,
    sz: usize,
    max_skip: u32,
    rng: &mut R,
) -> Result<RoppaInput, RoppaError> {
    if trip.vectors.is_empty() {
        return Err(RoppaError::EmptyTrip);
    }
    if n >= trip.vectors.len() {
        return Err(RoppaError::TargetOutOfRange {
            n,
            len: trip.vectors.len(),
        });
    }
    let rsa = generate_rsa(sz, max_skip, rng)?;
    let indices = roppa_indices(n, &rsa);
    let sequence = indices
        .iter()
        .map(|&i| trip.vectors[i].values.clone())
        .collect();
    Ok(RoppaInput {
        indices,
        sequence,
        speed_label: trip.speeds[n],
        cluster_label: trip.vectors[n].cluster_label,
    })
}

/// Random stream owned by one `(trip, n, epoch)` input, independent of the
/// order in which inputs are built.
pub fn input_rng(master_seed: u64, trip_id: &str, n: usize, epoch: u64) -> ChaCha8Rng {
    let mut s = splitmix(master_seed ^ fnv1a(trip_id.as_bytes()));
    s = splitmix(s ^ n as u64);
    s = splitmix(s ^ epoch);
    ChaCha8Rng::seed_from_u64(s)
}

/// Build one input per point of every trip.
pub fn build_dataset(
    trips: &[TripFeatures],
    sz: usize,
    max_skip: u32,
    master_seed: u64,
    epoch: u64,
) -> Result<Vec<RoppaInput>, RoppaError> {
    let mut out = Vec::with_capacity(trips.iter().map(|t| t.vectors.len()).sum());
    for t in trips {
        for n in 0..t.vectors.len() {
            let mut rng = input_rng(master_seed, &t.trip_id, n, epoch);
            out.push(build_roppa_input(t, n, sz, max_skip, &mut rng)?);
        }
    }
    Ok(out)
}
