//! Hybrid quantum-classical image classification: an exact statevector
//! simulator, quantum self-attention, classical and quanvolutional baselines,
//! a metric suite and a training pipeline.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pqc;
pub mod qattention;
pub mod qsim;
pub mod quanvolution;
pub mod train;

pub use error::{Error, Result};
