//! Trajectory, trip and link data model.
//!
//! Points arrive already associated with a road link and a distance along it;
//! every downstream stage works in link-relative coordinates. Speeds are km/h,
//! distances meters, days are 0 = Monday .. 6 = Sunday.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a road link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

/// Identifier of a trip.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripId(pub String);

macro_rules! string_id {
    ($name:ident) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(LinkId);
string_id!(TripId);

pub const DAYS: usize = 7;
pub const HOURS: usize = 24;

/// One GPS registration, associated with a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub trip_id: TripId,
    pub step_index: u32,
    /// Epoch seconds.
    pub timestamp: i64,
    pub day: u8,
    pub hour: u8,
    pub link_id: LinkId,
    pub dist_along_link: f64,
    /// Registered speed, km/h.
    pub speed: f64,
    /// Point curvature, 1/m.
    pub curv: f64,
    /// Heading, degrees.
    pub yaw: f64,
    /// Elevation, meters.
    pub elv: f64,
    /// Pitch, degrees.
    pub ptc: f64,
    /// Optional raw coordinates; carried through for plotting only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

/// An ordered sequence of points recorded by one car.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: TripId,
    /// Car class code (0..=3 for generated data).
    pub car_class: u8,
    pub points: Vec<TrajectoryPoint>,
}

impl Trip {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.speed).collect()
    }
}

/// Static attributes of a road link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub link_id: LinkId,
    pub length: f64,
    pub curv_avg: f64,
    pub curv_max: f64,
    pub curv_min: f64,
    pub pitch_avg: f64,
    pub pitch_max: f64,
    pub pitch_min: f64,
    /// Ordinal road importance, 1 (most important) ..= 5.
    pub functional_class: u8,
    pub speed_limit: f64,
    pub sign_start: bool,
    pub sign_stop: bool,
}

impl Link {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |what: &str| DomainError::InvalidLink {
            link_id: self.link_id.clone(),
            reason: what.to_owned(),
        };
        let values = [
            self.length,
            self.curv_avg,
            self.curv_max,
            self.curv_min,
            self.pitch_avg,
            self.pitch_max,
            self.pitch_min,
            self.speed_limit,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite attribute"));
        }
        if !(self.length > 0.0) {
            return Err(bad("length must be positive"));
        }
        if !(self.speed_limit > 0.0) {
            return Err(bad("speed limit must be positive"));
        }
        if !(self.curv_min <= self.curv_avg && self.curv_avg <= self.curv_max) {
            return Err(bad("curvature statistics out of order"));
        }
        if !(self.pitch_min <= self.pitch_avg && self.pitch_avg <= self.pitch_max) {
            return Err(bad("pitch statistics out of order"));
        }
        if !(1..=5).contains(&self.functional_class) {
            return Err(bad("functional class outside 1..=5"));
        }
        Ok(())
    }
}

/// All links known to a region (or a union of regions), ordered by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTable {
    links: BTreeMap<LinkId, Link>,
}

impl LinkTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_links(links: impl IntoIterator<Item = Link>) -> Result<Self, DomainError> {
        let mut table = Self::new();
        for link in links {
            table.insert(link)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, link: Link) -> Result<(), DomainError> {
        link.validate()?;
        if self.links.contains_key(&link.link_id) {
            return Err(DomainError::DuplicateLink(link.link_id));
        }
        self.links.insert(link.link_id.clone(), link);
        Ok(())
    }

    /// Union of two tables; duplicate ids are an error.
    pub fn merge(&mut self, other: LinkTable) -> Result<(), DomainError> {
        for (_, link) in other.links {
            self.insert(link)?;
        }
        Ok(())
    }

    pub fn get(&self, id: &LinkId) -> Option<&Link> {
        self.links.get(id)
    }

    pub fn contains(&self, id: &LinkId) -> bool {
        self.links.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &LinkId> {
        self.links.keys()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("step {step}: distance along link exceeds link length")]
    DistanceExceedsLength { step: u32 },
    #[error("step {step}: step indices must be contiguous from 0")]
    NonContiguousSteps { step: u32 },
    #[error("step {step}: {field} out of range")]
    FieldOutOfRange { step: u32, field: &'static str },
    #[error("link length must be positive")]
    NonPositiveLength,
    #[error("distance {dist} outside [0, {length}]")]
    DistOutOfRange { dist: f64, length: f64 },
    #[error("invalid link {link_id}: {reason}")]
    InvalidLink { link_id: LinkId, reason: String },
    #[error("duplicate link {0}")]
    DuplicateLink(LinkId),
}

/// Check every trip invariant against `links`, collecting all violations.
pub fn validate_trip(trip: Trip, links: &LinkTable) -> Result<Trip, Vec<DomainError>> {
    let mut errors = Vec::new();
    for (expected, p) in trip.points.iter().enumerate() {
        let step = p.step_index;
        if step as usize != expected {
            errors.push(DomainError::NonContiguousSteps { step });
        }
        if p.day as usize >= DAYS {
            errors.push(DomainError::FieldOutOfRange { step, field: "day" });
        }
        if p.hour as usize >= HOURS {
            errors.push(DomainError::FieldOutOfRange { step, field: "hour" });
        }
        if !(p.speed >= 0.0) || !p.speed.is_finite() {
            errors.push(DomainError::FieldOutOfRange { step, field: "speed" });
        }
        if !(p.dist_along_link >= 0.0) {
            errors.push(DomainError::FieldOutOfRange {
                step,
                field: "dist_along_link",
            });
        }
        match links.get(&p.link_id) {
            None => errors.push(DomainError::UnknownLink(p.link_id.clone())),
            Some(link) if p.dist_along_link > link.length => {
                errors.push(DomainError::DistanceExceedsLength { step })
            }
            Some(_) => {}
        }
    }
    if errors.is_empty() {
        Ok(trip)
    } else {
        Err(errors)
    }
}

/// Position of `dist` along a link of `length`, as a percentage.
pub fn position_percent(dist: f64, length: f64) -> Result<f64, DomainError> {
    if !(length > 0.0) {
        return Err(DomainError::NonPositiveLength);
    }
    if !(0.0..=length).contains(&dist) {
        return Err(DomainError::DistOutOfRange { dist, length });
    }
    Ok(dist * 100.0 / length)
}
