//! CSV readers and writers for links and trips, plus JSON helpers.
//!
//! Trip columns: `trip_id, step_index, timestamp, day, hour, link_id,
//! dist_along_link_m, speed_kmh, curv, yaw, elv, ptc`, optionally followed by
//! `car_class`, `lat`, `lon`. Link columns: `link_id, length_m, curv_avg,
//! curv_max, curv_min, pitch_avg, pitch_max, pitch_min, functional_class,
//! speed_limit_kmh, sign_start, sign_stop`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, Link, LinkTable, TrajectoryPoint, Trip, TripId};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Domain {
        path: PathBuf,
        #[source]
        source: DomainError,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    link_id: String,
    length_m: f64,
    curv_avg: f64,
    curv_max: f64,
    curv_min: f64,
    pitch_avg: f64,
    pitch_max: f64,
    pitch_min: f64,
    functional_class: u8,
    speed_limit_kmh: f64,
    sign_start: u8,
    sign_stop: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    trip_id: String,
    step_index: u32,
    timestamp: i64,
    day: u8,
    hour: u8,
    link_id: String,
    dist_along_link_m: f64,
    speed_kmh: f64,
    curv: f64,
    yaw: f64,
    elv: f64,
    ptc: f64,
    #[serde(default)]
    car_class: Option<u8>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
}

fn flag(path: &Path, v: u8) -> Result<bool, IoError> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(IoError::Format {
            path: path.to_owned(),
            message: format!("sign flag must be 0 or 1, got {other}"),
        }),
    }
}

pub fn read_links(path: &Path) -> Result<LinkTable, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut table = LinkTable::new();
    for row in rdr.deserialize::<LinkRow>() {
        let row = row.map_err(csv_err)?;
        let link = Link {
            link_id: row.link_id.into(),
            length: row.length_m,
            curv_avg: row.curv_avg,
            curv_max: row.curv_max,
            curv_min: row.curv_min,
            pitch_avg: row.pitch_avg,
            pitch_max: row.pitch_max,
            pitch_min: row.pitch_min,
            functional_class: row.functional_class,
            speed_limit: row.speed_limit_kmh,
            sign_start: flag(path, row.sign_start)?,
            sign_stop: flag(path, row.sign_stop)?,
        };
        table.insert(link).map_err(|source| IoError::Domain {
            path: path.to_owned(),
            source,
        })?;
    }
    Ok(table)
}

pub fn write_links<'a>(
    path: &Path,
    links: impl IntoIterator<Item = &'a Link>,
) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for l in links {
        wtr.serialize(LinkRow {
            link_id: l.link_id.0.clone(),
            length_m: l.length,
            curv_avg: l.curv_avg,
            curv_max: l.curv_max,
            curv_min: l.curv_min,
            pitch_avg: l.pitch_avg,
            pitch_max: l.pitch_max,
            pitch_min: l.pitch_min,
            functional_class: l.functional_class,
            speed_limit_kmh: l.speed_limit,
            sign_start: l.sign_start as u8,
            sign_stop: l.sign_stop as u8,
        })
        .map_err(csv_err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    write_bytes(path, &bytes).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Read trips; rows of one trip must be adjacent. Trip order follows first
/// appearance in the file.
pub fn read_trips(path: &Path) -> Result<Vec<Trip>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut trips: Vec<Trip> = Vec::new();
    for row in rdr.deserialize::<TripRow>() {
        let row = row.map_err(csv_err)?;
        let trip_id = TripId(row.trip_id);
        let point = TrajectoryPoint {
            trip_id: trip_id.clone(),
            step_index: row.step_index,
            timestamp: row.timestamp,
            day: row.day,
            hour: row.hour,
            link_id: row.link_id.into(),
            dist_along_link: row.dist_along_link_m,
            speed: row.speed_kmh,
            curv: row.curv,
            yaw: row.yaw,
            elv: row.elv,
            ptc: row.ptc,
            lat: row.lat,
            lon: row.lon,
        };
        let car_class = row.car_class.unwrap_or(0);
        match trips.last_mut() {
            Some(t) if t.trip_id == trip_id => {
                if t.car_class != car_class {
                    return Err(IoError::Format {
                        path: path.to_owned(),
                        message: format!("trip {trip_id}: car_class changes within trip"),
                    });
                }
                t.points.push(point);
            }
            _ => {
                if trips.iter().any(|t| t.trip_id == trip_id) {
                    return Err(IoError::Format {
                        path: path.to_owned(),
                        message: format!("trip {trip_id}: rows are not contiguous"),
                    });
                }
                trips.push(Trip {
                    trip_id,
                    car_class,
                    points: vec![point],
                });
            }
        }
    }
    Ok(trips)
}

pub fn write_trips(path: &Path, trips: &[Trip]) -> Result<(), IoError> {
    let io_err = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let with_coords = trips
        .iter()
        .flat_map(|t| &t.points)
        .any(|p| p.lat.is_some() || p.lon.is_some());
    let mut out = Vec::new();
    out.extend_from_slice(
        b"trip_id,step_index,timestamp,day,hour,link_id,dist_along_link_m,speed_kmh,curv,yaw,elv,ptc,car_class",
    );
    if with_coords {
        out.extend_from_slice(b",lat,lon");
    }
    out.push(b'\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in trips {
        for p in &t.points {
            let mut line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.trip_id,
                p.step_index,
                p.timestamp,
                p.day,
                p.hour,
                p.link_id,
                p.dist_along_link,
                p.speed,
                p.curv,
                p.yaw,
                p.elv,
                p.ptc,
                t.car_class
            );
            if with_coords {
                line.push_str(&format!(",{},{}", opt(p.lat), opt(p.lon)));
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    write_bytes(path, &out).map_err(io_err)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = File::create(path)?;
    f.write_all(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|source| IoError::Toml {
        path: path.to_owned(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IoError::Io {
            path: path.to_owned(),
            source,
        })?;
    Ok(s)
}
