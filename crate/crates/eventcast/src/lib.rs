//! Forecasting toolkit for rare extreme events in chaotic dynamical systems.

pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod observables;
pub mod seeds;
pub mod spectral_flow;
pub mod systems;

pub use error::{Error, Result};
