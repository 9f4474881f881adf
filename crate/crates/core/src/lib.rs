//! Rate coverage analysis of inter-tier interference nulling in two-tier
//! multi-antenna heterogeneous networks, with simple-offloading and
//! almost-blank-subframe baselines, design-parameter optimization and a
//! Monte Carlo simulator used as an independent oracle.

pub mod association;
pub mod config;
pub mod coverage;
pub mod error;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;
pub mod specfun;

pub use config::{validate, Config, NumericsParams, Scheme, SchemeParams, SystemParams, Violation};
pub use error::{Error, Result};
