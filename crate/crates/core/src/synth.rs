//! Seeded synthetic road networks and trips with a known speed oracle.
//!
//! Links are drawn from a few archetypes (highway, arterial, residential,
//! hill) whose static attributes form well separated blobs. Trip speeds follow
//! a multiplicative oracle over the link, the time of day, the position along
//! the link and the car class, smoothed along the trip and perturbed by
//! Gaussian noise.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Link, LinkId, LinkTable, TrajectoryPoint, Trip, TripId, DAYS, HOURS};
use crate::io::{self, IoError};
use crate::seeding::derive_seed;

/// 2024-01-01T00:00:00Z, a Monday.
pub const EPOCH_MONDAY: i64 = 1_704_067_200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("region {region} does not exist ({n} regions)")]
    UnknownRegion { region: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Highway,
    Arterial,
    Residential,
    Hill,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::Highway,
        Archetype::Arterial,
        Archetype::Residential,
        Archetype::Hill,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Archetype::Highway => "highway",
            Archetype::Arterial => "arterial",
            Archetype::Residential => "residential",
            Archetype::Hill => "hill",
        })
    }
}

/// Sampling ranges of one archetype's link attributes.
struct Profile {
    curv: (f64, f64),
    pitch: (f64, f64),
    length: (f64, f64),
    classes: &'static [u8],
    limits: &'static [f64],
    p_sign_start: f64,
    p_sign_stop: f64,
    /// Free-flow speed as a fraction of the limit.
    free_flow: f64,
}

fn profile(a: Archetype) -> Profile {
    match a {
        Archetype::Highway => Profile {
            curv: (0.0005, 0.002),
            pitch: (-1.0, 1.0),
            length: (200.0, 1500.0),
            classes: &[1, 2],
            limits: &[90.0, 110.0, 130.0],
            p_sign_start: 0.05,
            p_sign_stop: 0.05,
            free_flow: 0.95,
        },
        Archetype::Arterial => Profile {
            curv: (0.003, 0.006),
            pitch: (-1.0, 1.0),
            length: (120.0, 1200.0),
            classes: &[3],
            limits: &[50.0, 70.0, 90.0],
            p_sign_start: 0.4,
            p_sign_stop: 0.4,
            free_flow: 0.9,
        },
        Archetype::Residential => Profile {
            curv: (0.012, 0.02),
            pitch: (-1.5, 1.5),
            length: (60.0, 900.0),
            classes: &[5],
            limits: &[20.0, 30.0, 50.0],
            p_sign_start: 0.5,
            p_sign_stop: 0.5,
            free_flow: 0.95,
        },
        Archetype::Hill => Profile {
            curv: (0.006, 0.01),
            pitch: (4.5, 7.5),
            length: (150.0, 1200.0),
            classes: &[4],
            limits: &[50.0, 70.0, 90.0],
            p_sign_start: 0.2,
            p_sign_stop: 0.2,
            free_flow: 0.9,
        },
    }
}

/// Constants of the speed oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub rush_hours: Vec<u8>,
    /// Relative slowdown at the centre of a rush hour on weekdays.
    pub rush_depth: f64,
    /// Hours from a rush centre at which the slowdown vanishes.
    pub rush_half_width: f64,
    /// Multiplier on `rush_depth` for Saturday and Sunday.
    pub weekend_scale: f64,
    /// Width, in percent of link length, of the zone affected by a sign.
    pub sign_zone_pct: f64,
    pub sign_start_drop: f64,
    pub sign_stop_drop: f64,
    /// Speed multiplier per car class.
    pub car_factors: Vec<f64>,
    /// Free-flow speed is divided by `1 + curvature_coef * curv_avg`.
    pub curvature_coef: f64,
    /// Relative slowdown per degree of uphill pitch.
    pub pitch_coef: f64,
    /// Weight of the previous speed when smoothing along a trip.
    pub inertia: f64,
    pub min_speed: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rush_hours: vec![8, 18],
            rush_depth: 0.4,
            rush_half_width: 3.0,
            weekend_scale: 0.5,
            sign_zone_pct: 20.0,
            sign_start_drop: 0.35,
            sign_stop_drop: 0.5,
            car_factors: vec![0.9, 1.0, 1.05, 1.1],
            curvature_coef: 30.0,
            pitch_coef: 0.015,
            inertia: 0.5,
            min_speed: 1.0,
        }
    }
}

fn d_regions() -> usize {
    5
}
fn d_links() -> usize {
    400
}
fn d_archetypes() -> usize {
    4
}
fn d_trips() -> usize {
    500
}
fn d_trip_links() -> f64 {
    5.0
}
fn d_points_per_link() -> usize {
    5
}
fn d_noise() -> f64 {
    3.0
}
fn d_val_fraction() -> f64 {
    0.2
}
fn d_stay() -> f64 {
    0.8
}

/// World and trip generation settings. Regions are laid out as reference
/// regions first, then one training region, then one test region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    #[serde(default = "d_regions")]
    pub n_regions: usize,
    #[serde(default = "d_links")]
    pub links_per_region: usize,
    #[serde(default = "d_archetypes")]
    pub n_archetypes: usize,
    #[serde(default = "d_trips")]
    pub trips_per_region: usize,
    /// Mean number of links per trip.
    #[serde(default = "d_trip_links")]
    pub mean_trip_links: f64,
    /// Each traversed link receives between 1 and this many points.
    #[serde(default = "d_points_per_link")]
    pub max_points_per_link: usize,
    /// Standard deviation of the additive speed noise, km/h.
    #[serde(default = "d_noise")]
    pub noise_std: f64,
    /// Share of the training region's trips held out for validation.
    #[serde(default = "d_val_fraction")]
    pub val_fraction: f64,
    /// Probability that a trip's next link has the same archetype as the
    /// current one; otherwise the next link is drawn from the whole region.
    #[serde(default = "d_stay")]
    pub p_same_archetype: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
}

impl WorldConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_regions: d_regions(),
            links_per_region: d_links(),
            n_archetypes: d_archetypes(),
            trips_per_region: d_trips(),
            mean_trip_links: d_trip_links(),
            max_points_per_link: d_points_per_link(),
            noise_std: d_noise(),
            val_fraction: d_val_fraction(),
            p_same_archetype: d_stay(),
            oracle: OracleConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_owned()));
        if self.n_regions < 3 {
            return bad("n_regions must be at least 3 (reference, train, test)");
        }
        if self.links_per_region == 0 {
            return bad("links_per_region must be positive");
        }
        if !(1..=Archetype::ALL.len()).contains(&self.n_archetypes) {
            return bad("n_archetypes must be between 1 and 4");
        }
        if self.trips_per_region == 0 {
            return bad("trips_per_region must be positive");
        }
        if !(self.mean_trip_links >= 1.0 && self.mean_trip_links.is_finite()) {
            return bad("mean_trip_links must be at least 1");
        }
        if self.max_points_per_link == 0 {
            return bad("max_points_per_link must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.p_same_archetype) {
            return bad("p_same_archetype must lie in [0, 1]");
        }
        let o = &self.oracle;
        if o.car_factors.is_empty() || o.car_factors.iter().any(|f| !(*f > 0.0)) {
            return bad("car_factors must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&o.inertia) {
            return bad("inertia must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&o.rush_depth) || !(0.0..=1.0).contains(&o.weekend_scale) {
            return bad("rush_depth must lie in [0, 1) and weekend_scale in [0, 1]");
        }
        if !(o.rush_half_width > 0.0) || o.rush_hours.iter().any(|&h| h as usize >= HOURS) {
            return bad("rush hours must be valid hours with a positive half width");
        }
        if !(o.sign_zone_pct > 0.0 && o.sign_zone_pct <= 50.0)
            || !(0.0..1.0).contains(&o.sign_start_drop)
            || !(0.0..1.0).contains(&o.sign_stop_drop)
        {
            return bad("sign zone must lie in (0, 50] and drops in [0, 1)");
        }
        if !(o.min_speed > 0.0) || !(o.curvature_coef >= 0.0) || !(o.pitch_coef >= 0.0) {
            return bad("min_speed must be positive and coefficients non-negative");
        }
        Ok(())
    }

    pub fn n_reference_regions(&self) -> usize {
        self.n_regions - 2
    }

    pub fn train_region(&self) -> usize {
        self.n_regions - 2
    }

    pub fn test_region(&self) -> usize {
        self.n_regions - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub index: usize,
    pub links: LinkTable,
    /// Generator-side ground truth, never used as a model input.
    pub archetypes: BTreeMap<LinkId, Archetype>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub regions: Vec<Region>,
}

fn sample_link<R: Rng>(id: LinkId, a: Archetype, rng: &mut R) -> Link {
    let p = profile(a);
    let curv_avg = rng.random_range(p.curv.0..p.curv.1);
    let pitch_avg = rng.random_range(p.pitch.0..p.pitch.1);
    Link {
        link_id: id,
        length: rng.random_range(p.length.0..p.length.1),
        curv_avg,
        curv_max: curv_avg * rng.random_range(1.5..3.0),
        curv_min: curv_avg * rng.random_range(0.1..0.6),
        pitch_avg,
        pitch_max: pitch_avg + rng.random_range(0.5..2.0),
        pitch_min: pitch_avg - rng.random_range(0.5..2.0),
        functional_class: *p.classes.choose(rng).expect("non-empty"),
        speed_limit: *p.limits.choose(rng).expect("non-empty"),
        sign_start: rng.random_bool(p.p_sign_start),
        sign_stop: rng.random_bool(p.p_sign_stop),
    }
}

/// Draw every region's links. Archetypes are assigned round-robin so each
/// region holds them in equal shares.
pub fn gen_world(cfg: &WorldConfig) -> Result<World, SynthError> {
    cfg.validate()?;
    let regions = (0..cfg.n_regions)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "links", r as u64));
            let mut links = Vec::with_capacity(cfg.links_per_region);
            let mut archetypes = BTreeMap::new();
            for i in 0..cfg.links_per_region {
                let a = Archetype::ALL[i % cfg.n_archetypes];
                let id = LinkId::from(format!("r{r}_l{i:04}"));
                archetypes.insert(id.clone(), a);
                links.push(sample_link(id, a, &mut rng));
            }
            let links = LinkTable::from_links(links).expect("generated links are valid and unique");
            Region {
                index: r,
                links,
                archetypes,
            }
        })
        .collect();
    Ok(World {
        config: cfg.clone(),
        regions,
    })
}

/// Diurnal multiplier: 1 away from rush hours, `1 - depth` at their centre.
pub fn diurnal_factor(o: &OracleConfig, day: usize, hour: usize) -> f64 {
    let depth = if day >= 5 {
        o.rush_depth * o.weekend_scale
    } else {
        o.rush_depth
    };
    let mut dip = 0.0;
    for &c in &o.rush_hours {
        let raw = (hour as f64 - c as f64).abs();
        let d = raw.min(HOURS as f64 - raw);
        if d < o.rush_half_width {
            dip += (1.0 + (std::f64::consts::PI * d / o.rush_half_width).cos()) / 2.0;
        }
    }
    (1.0 - depth * dip).max(0.05)
}

/// Multiplier for the position along a link given its sign flags.
pub fn slot_factor(o: &OracleConfig, link: &Link, pos_pct: f64) -> f64 {
    let z = o.sign_zone_pct;
    let mut f = 1.0;
    if link.sign_start && pos_pct < z {
        f *= 1.0 - o.sign_start_drop * (1.0 - pos_pct / z);
    }
    if link.sign_stop && pos_pct > 100.0 - z {
        f *= 1.0 - o.sign_stop_drop * (pos_pct - (100.0 - z)) / z;
    }
    f
}

/// Noise-free speed a vehicle tends to at one point.
pub fn oracle_target(
    o: &OracleConfig,
    link: &Link,
    archetype: Archetype,
    day: usize,
    hour: usize,
    pos_pct: f64,
    car_class: u8,
    pitch: f64,
) -> f64 {
    let base = link.speed_limit * profile(archetype).free_flow
        / (1.0 + o.curvature_coef * link.curv_avg);
    let car = o.car_factors[(car_class as usize).min(o.car_factors.len() - 1)];
    let grade = (1.0 - o.pitch_coef * pitch.max(0.0)).max(0.3);
    base * diurnal_factor(o, day, hour) * slot_factor(o, link, pos_pct) * car * grade
}

/// A generated trip plus its noise-free speeds and per-point archetypes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrip {
    pub trip: Trip,
    pub oracle: Vec<f64>,
    pub archetypes: Vec<Archetype>,
}

fn day_hour(ts: i64) -> (u8, u8) {
    let secs = (ts - EPOCH_MONDAY).rem_euclid(DAYS as i64 * 86_400);
    ((secs / 86_400) as u8, ((secs % 86_400) / 3600) as u8)
}

fn gen_trip(world: &World, region: &Region, trip_idx: usize, rng: &mut ChaCha8Rng) -> GeneratedTrip {
    let cfg = &world.config;
    let o = &cfg.oracle;
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise");
    let link_ids: Vec<&LinkId> = region.links.ids().collect();
    let mut by_archetype: BTreeMap<Archetype, Vec<&LinkId>> = BTreeMap::new();
    for id in &link_ids {
        by_archetype.entry(region.archetypes[*id]).or_default().push(id);
    }
    let trip_id = TripId::from(format!("r{}_t{trip_idx:04}", region.index));
    let car_class = rng.random_range(0..o.car_factors.len()) as u8;
    let max_links = (2.0 * cfg.mean_trip_links - 1.0).round().max(1.0) as usize;
    let n_links = rng.random_range(1..=max_links);

    let mut t = EPOCH_MONDAY as f64 + rng.random_range(0.0..(DAYS * 86_400) as f64);
    let mut v_prev: Option<f64> = None;
    let mut points = Vec::new();
    let mut oracle = Vec::new();
    let mut archetypes = Vec::new();
    // remaining distance on the previous link after its last point
    let mut carry = 0.0;
    let mut elv: f64 = rng.random_range(0.0..300.0);
    let mut current: Option<Archetype> = None;
    for _ in 0..n_links {
        let pool = match current {
            Some(a) if rng.random_bool(cfg.p_same_archetype) => &by_archetype[&a],
            _ => &link_ids,
        };
        let id = *pool.choose(rng).expect("region has links");
        let link = region.links.get(id).expect("id from table");
        let a = region.archetypes[id];
        current = Some(a);
        let heading = rng.random_range(0.0..360.0);
        let m = rng.random_range(1..=cfg.max_points_per_link);
        let mut dists: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..=link.length)).collect();
        dists.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for d in dists {
            let gap = carry + (d - last);
            carry = 0.0;
            last = d;
            let pitch = (link.pitch_avg + rng.random_range(-0.5..0.5))
                .clamp(link.pitch_min, link.pitch_max);
            let curv = (link.curv_avg * rng.random_range(0.5..1.5)).clamp(link.curv_min, link.curv_max);
            let yaw = (heading + rng.random_range(-5.0..5.0f64)).rem_euclid(360.0);
            if let Some(v) = v_prev {
                t += gap / (v / 3.6);
                elv += gap * pitch.to_radians().tan();
            }
            let ts = t.floor() as i64;
            let (day, hour) = day_hour(ts);
            let pos = d * 100.0 / link.length;
            let target = oracle_target(o, link, a, day as usize, hour as usize, pos, car_class, pitch);
            let v = match v_prev {
                Some(p) => o.inertia * p + (1.0 - o.inertia) * target,
                None => target,
            };
            v_prev = Some(v);
            let observed = (v + noise.sample(rng)).max(o.min_speed);
            points.push(TrajectoryPoint {
                trip_id: trip_id.clone(),
                step_index: points.len() as u32,
                timestamp: ts,
                day,
                hour,
                link_id: id.clone(),
                dist_along_link: d,
                speed: observed,
                curv,
                yaw,
                elv,
                ptc: pitch,
                lat: None,
                lon: None,
            });
            oracle.push(v);
            archetypes.push(a);
        }
        carry = link.length - last;
    }
    GeneratedTrip {
        trip: Trip {
            trip_id,
            car_class,
            points,
        },
        oracle,
        archetypes,
    }
}

/// `n_trips` trips over the links of `region`, each with its own stream.
pub fn gen_trips(
    world: &World,
    region: usize,
    n_trips: usize,
    seed: u64,
) -> Result<Vec<GeneratedTrip>, SynthError> {
    let r = world.regions.get(region).ok_or(SynthError::UnknownRegion {
        region,
        n: world.regions.len(),
    })?;
    let base = derive_seed(seed, "trips", region as u64);
    Ok((0..n_trips)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, "trip", i as u64));
            gen_trip(world, r, i, &mut rng)
        })
        .collect())
}

/// Links and trips of one data split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub links: LinkTable,
    pub trips: Vec<Trip>,
}

/// The four splits used by the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Reference regions: build the dictionary only.
    pub reference: Split,
    pub train: Split,
    /// Trip-level hold-out of the training region.
    pub val: Split,
    pub test: Split,
}

pub const SPLIT_NAMES: [&str; 4] = ["reference", "train", "val", "test"];

impl Dataset {
    pub fn splits(&self) -> [(&'static str, &Split); 4] {
        [
            (SPLIT_NAMES[0], &self.reference),
            (SPLIT_NAMES[1], &self.train),
            (SPLIT_NAMES[2], &self.val),
            (SPLIT_NAMES[3], &self.test),
        ]
    }

    /// Write `<split>/links.csv` and `<split>/trips.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        for (name, split) in self.splits() {
            io::write_links(&dir.join(name).join("links.csv"), split.links.iter())?;
            io::write_trips(&dir.join(name).join("trips.csv"), &split.trips)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, IoError> {
        let read = |name: &str| -> Result<Split, IoError> {
            Ok(Split {
                links: io::read_links(&dir.join(name).join("links.csv"))?,
                trips: io::read_trips(&dir.join(name).join("trips.csv"))?,
            })
        };
        Ok(Self {
            reference: read(SPLIT_NAMES[0])?,
            train: read(SPLIT_NAMES[1])?,
            val: read(SPLIT_NAMES[2])?,
            test: read(SPLIT_NAMES[3])?,
        })
    }
}

/// Everything `generate` produces, ground truth included.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub world: World,
    pub dataset: Dataset,
    pub oracle: BTreeMap<TripId, Vec<f64>>,
}

impl SynthOutput {
    /// `link_id,region,archetype` for every link.
    pub fn archetypes_csv(&self) -> String {
        let mut s = String::from("link_id,region,archetype\n");
        for r in &self.world.regions {
            for (id, a) in &r.archetypes {
                s.push_str(&format!("{id},{},{a}\n", r.index));
            }
        }
        s
    }
}

/// Generate the world, all trips, and the reference/train/val/test splits.
pub fn generate(cfg: &WorldConfig) -> Result<SynthOutput, SynthError> {
    let world = gen_world(cfg)?;
    let mut oracle = BTreeMap::new();
    let mut per_region = Vec::with_capacity(cfg.n_regions);
    for r in 0..cfg.n_regions {
        let trips = gen_trips(&world, r, cfg.trips_per_region, cfg.seed)?;
        let mut plain = Vec::with_capacity(trips.len());
        for g in trips {
            oracle.insert(g.trip.trip_id.clone(), g.oracle);
            plain.push(g.trip);
        }
        per_region.push(plain);
    }

    let mut reference_links = LinkTable::default();
    let mut reference_trips = Vec::new();
    for r in 0..cfg.n_reference_regions() {
        reference_links
            .merge(world.regions[r].links.clone())
            .expect("regions have disjoint link ids");
        reference_trips.append(&mut per_region[r]);
    }

    let mut train_trips = std::mem::take(&mut per_region[cfg.train_region()]);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "validation", 0));
    let mut order: Vec<usize> = (0..train_trips.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (train_trips.len() as f64 * cfg.val_fraction).round() as usize;
    let mut is_val = vec![false; train_trips.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let mut val_trips = Vec::with_capacity(n_val);
    let mut kept = Vec::with_capacity(train_trips.len() - n_val);
    for (t, v) in train_trips.drain(..).zip(is_val) {
        if v {
            val_trips.push(t);
        } else {
            kept.push(t);
        }
    }
    let train_links = world.regions[cfg.train_region()].links.clone();
    let dataset = Dataset {
        reference: Split {
            links: reference_links,
            trips: reference_trips,
        },
        train: Split {
            links: train_links.clone(),
            trips: kept,
        },
        val: Split {
            links: train_links,
            trips: val_trips,
        },
        test: Split {
            links: world.regions[cfg.test_region()].links.clone(),
            trips: std::mem::take(&mut per_region[cfg.test_region()]),
        },
    };
    Ok(SynthOutput {
        world,
        dataset,
        oracle,
    })
}

/// Standardized link attribute vectors, grouped by archetype.
fn standardized_by_archetype(world: &World) -> BTreeMap<Archetype, Vec<[f64; 9]>> {
    use crate::clustering::{scaler_fit, LinkFeatureVector};
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for r in &world.regions {
        for l in r.links.iter() {
            feats.push(LinkFeatureVector::from(l));
            labels.push(r.archetypes[&l.link_id]);
        }
    }
    let scaler = scaler_fit(&feats).expect("world has links");
    let mut out: BTreeMap<Archetype, Vec<[f64; 9]>> = BTreeMap::new();
    for (f, a) in feats.iter().zip(labels) {
        out.entry(a).or_default().push(scaler.transform(f));
    }
    out
}

/// Smallest ratio, over archetype pairs, of the centroid distance to the
/// larger within-archetype spread. The spread of an archetype is the
/// root-mean-square over dimensions of its per-dimension standard deviation,
/// all in standardized attribute space.
pub fn archetype_separation(world: &World) -> f64 {
    let groups = standardized_by_archetype(world);
    let stats: Vec<([f64; 9], f64)> = groups
        .values()
        .map(|pts| {
            let n = pts.len() as f64;
            let mut c = [0.0; 9];
            for p in pts {
                for d in 0..9 {
                    c[d] += p[d] / n;
                }
            }
            let var: f64 = pts
                .iter()
                .map(|p| (0..9).map(|d| (p[d] - c[d]).powi(2)).sum::<f64>())
                .sum::<f64>()
                / n;
            (c, (var / 9.0).sqrt())
        })
        .collect();
    let mut worst = f64::INFINITY;
    for i in 0..stats.len() {
        for j in i + 1..stats.len() {
            let dist = (0..9)
                .map(|d| (stats[i].0[d] - stats[j].0[d]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.min(dist / stats[i].1.max(stats[j].1));
        }
    }
    worst
}
