//! Exposure profiles (EE / PFE) for path-dependent instruments via nested
//! Monte-Carlo, with a least-squares regression proxy replacing the inner
//! pricing loop and the associated variance-estimation machinery.

pub mod config;
pub mod engine;
pub mod error;
pub mod instruments;
pub mod models;
pub mod output;
pub mod regression;
pub mod rng;
pub mod studies;
pub mod variance;

pub use error::{Error, Result};
