//! Generalized logit-normal autoregressive (GLNAR) modelling of
//! double-bounded time series, with batch and online maximum-likelihood
//! estimation, reference forecasters and probabilistic verification tools.

pub mod archive;
pub mod batch;
pub mod benchmarks;
pub mod cv;
pub mod data;
pub mod error;
pub(crate) mod forget;
pub mod gln;
pub mod metrics;
pub mod models;
pub mod predictive;
pub mod quad;
pub mod recursive;
pub mod sim;

pub use error::{Error, Result};
