//! Land-use inference from gridded mobile phone activity.
//!
//! Point events are binned onto a square lattice, turned into per-cell weekly
//! activity profiles, normalized and reduced to 49 features, and classified
//! with a class-weighted random forest. Predictions can be smoothed with a
//! neighbour-majority pass and scored against zoning ground truth.

pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod postprocess;
pub mod rforest;
pub mod signal;
pub mod synth;
pub mod zoning;

pub use error::{Error, Result};
pub use grid::{GridSpec, LandUseClass, ZoningGrid};
pub use ingest::{ActivityCube, ActivityEvent, ObservationWindow};
pub use postprocess::{PredictionGrid, Provenance};
