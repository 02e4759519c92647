//! Driver-trait estimation from road-type segmented driving telemetry.

pub mod cohortgen;
pub mod evaluation;
pub mod features;
pub mod geo;
pub mod importance;
pub mod models;
pub mod segmentation;
pub mod signals;

pub use nalgebra;
