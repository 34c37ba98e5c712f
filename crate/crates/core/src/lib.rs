//! Link-level vehicle speed prediction from trajectory data.
//!
//! Historical GPS traces from reference regions are accumulated per link into
//! day x hour x position grids, links are grouped by K-means on their static
//! attributes, and per-cluster grids supply a dictionary speed for each point.
//! A recurrent model consumes randomly spaced sequences of past points ending
//! at the point to predict.

pub mod cli;
pub mod clustering;
pub mod dictionary;
pub mod domain;
pub mod features;
pub mod ilstm;
pub mod io;
pub mod metrics;
pub mod model;
pub mod roppa;
pub mod pipeline;
mod seeding;
pub mod synth;
