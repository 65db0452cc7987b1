//! Simulation and verification toolkit for Type-II fractional processes and
//! the d-derivatives of fractional Brownian motion.

pub mod cli;
pub mod error;
pub mod exec;
pub mod fraccoef;
pub mod limitoracle;
pub mod mcharness;
pub mod mfcvar;
pub mod procsim;
pub mod specfun;

pub use error::{Error, Result};
