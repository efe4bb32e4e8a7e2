//! Orbital MCMC: transition kernels built from iterated invertible maps.

pub mod adaptation;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod targets;

pub use error::{Error, Result};
