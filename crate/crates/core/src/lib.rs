//! Federated learning simulator for comparing server-side aggregation
//! strategies under IID and label-skewed client data.

pub mod adversary;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod results;
pub mod runner;
pub mod seed;
pub mod strategy;

pub use error::{FedError, Result};
