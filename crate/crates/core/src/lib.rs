//! KLIEP density-ratio estimation and importance-weighted adversarial
//! training on vector domains.

pub mod adversarial;
pub mod cli;
pub mod cohorts;
pub mod cycle;
pub mod dataio;
pub mod error;
pub mod kernels;
pub mod kliep;
pub mod metrics;
pub mod neural;

pub use error::{Error, Result};
