//! Simulation engine for a contaminant-dispersion digital twin of a built
//! environment: parametric wind fields (full and reduced order), stabilized
//! contaminant transport, Bayesian source inversion from sparse sensors and
//! contamination-aware crowd evacuation.

pub mod error;
pub mod evac;
pub mod linalg;
pub mod flow;
pub mod inverse;
pub mod meshfem;
pub mod pipeline;
pub mod rom;
pub mod sensing;
pub mod transport;

pub use error::{Error, Result};
