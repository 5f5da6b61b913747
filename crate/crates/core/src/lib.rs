//! Relational event models with sender/receiver frailties: event ingestion,
//! stratification by reciprocity and triadic closure, simulation, frailty
//! estimation, and smoothed stratum baseline hazards.

pub mod baseline;
pub mod error;
pub mod estimation;
pub mod events;
pub mod experiments;
pub mod network;
pub mod report;
pub mod simulate;
pub mod strata;

pub use error::{
    BaselineError, DataError, EstimationError, ExperimentError, SimulationError, StrataError,
};
