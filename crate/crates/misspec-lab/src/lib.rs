//! A numerical laboratory for comparing data-driven stochastic-optimization
//! pipelines (sample-average approximation, estimate-then-optimize, and
//! integrated estimation-optimization) under locally misspecified sampling
//! distributions.

pub mod asymptotics;
pub mod calibration;
pub mod checks;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod model;
pub mod opt;
pub mod perturbation;
pub mod problems;
pub mod quad;

pub use error::{Error, Result};
