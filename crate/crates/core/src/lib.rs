//! Heartbeat classification from two-lead ambulatory ECG: record ingestion,
//! wavelet denoising, fiducial detection, feature fusion, compact recurrent
//! classifiers, and post-training quantization.

pub mod error;
pub mod eval;
pub mod features;
pub mod fiducials;
pub mod nn;
pub mod pipeline;
pub mod quant;
pub mod synth;
pub mod wavelet;
pub mod wfdb;

pub use error::{Error, Result};
