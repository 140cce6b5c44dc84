//! Finite beta-mixture density estimation on [0, 1] under the h-lifted
//! Kullback–Leibler divergence.

pub mod config;
pub mod densities;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod mixture;
pub mod numerics;
pub mod regression;
pub mod report;

pub use densities::{ComponentParams, Density, ParamBox};
pub use error::{Error, Result};
pub use mixture::MixtureParams;
pub use numerics::QuadratureSpec;
