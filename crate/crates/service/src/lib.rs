//! Prediction service and command-line pipeline.

pub mod api;
pub mod cli;
