//! Per-node solar radiation forecasting toolkit.
//!
//! The pipeline: a weather station POSTs reports to [`ingest`], which
//! joins a sun-position feature from [`solar`] and stores one JSON record
//! per report. [`dataset`] turns the record store into a training table,
//! [`nn`] and [`train`] fit a small ReLU regressor to predict surface
//! solar radiation from seven weather features, and [`bridge`] feeds the
//! trained model from global-forecast grid points for inference.

pub mod bridge;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod ingest;
pub mod nn;
pub mod solar;
pub mod train;

pub use error::{Error, Result};
