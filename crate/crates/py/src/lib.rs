//! Python bindings for the heartbeat-classification pipeline. Exposes
//! the record reader, denoiser, fiducial detector, feature pipeline,
//! and model presets as plain functions returning Python-native types.

use std::path::PathBuf;

use pyo3::exceptions::PyRuntimeError;
use pyo3::prelude::*;

use ecgfusion_core::features::FeatureMode;
use ecgfusion_core::fiducials::{detect_fiducials, DetectorConfig};
use ecgfusion_core::nn::train::TrainSpec;
use ecgfusion_core::nn::{count_params, weights_only_bytes, ModelConfig, Preset};
use ecgfusion_core::pipeline::{
    stage_denoise, stage_detect, stage_eval, stage_features, stage_ingest, stage_train, ModelTag,
    PipelineConfig,
};
use ecgfusion_core::quant::QuantScheme;
use ecgfusion_core::synth::{generate_dataset, SynthSpec};
use ecgfusion_core::wavelet::{denoise, make_db4_filters};
use ecgfusion_core::wfdb::read_record;

fn err(e: ecgfusion_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Generates a synthetic two-lead corpus and returns the record names.
#[pyfunction]
#[pyo3(signature = (dir, n_records=30, duration_s=120.0, seed=2024))]
fn synth_dataset(dir: &str, n_records: usize, duration_s: f64, seed: u64) -> PyResult<Vec<String>> {
    let spec = SynthSpec { seed, n_records, duration_s, ..SynthSpec::default() };
    let records = generate_dataset(std::path::Path::new(dir), &spec).map_err(err)?;
    Ok(records.into_iter().map(|r| r.name).collect())
}

/// Reads one lead of a record in millivolts plus its annotation list as
/// (sample_index, symbol_code, channel) tuples.
#[pyfunction]
#[pyo3(signature = (dir, name, lead=0))]
fn read_lead(dir: &str, name: &str, lead: usize) -> PyResult<(Vec<f64>, Vec<(usize, u8, u8)>)> {
    let (signal, annotations) =
        read_record(std::path::Path::new(dir), name, lead).map_err(err)?;
    let anns = annotations
        .entries
        .iter()
        .map(|a| (a.sample_index, a.symbol_code, a.channel))
        .collect();
    Ok((signal.samples, anns))
}

/// Nine-level DB4 denoising keeping the QRS-band details.
#[pyfunction]
fn denoise_signal(samples: Vec<f64>) -> PyResult<Vec<f64>> {
    let filters = make_db4_filters();
    denoise(&samples, &filters).map_err(err)
}

/// Per-beat fiducials on a denoised signal: (r, p, q, s, t) sample
/// indices with None where a wave was not found.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn detect(
    samples: Vec<f64>,
) -> PyResult<Vec<(usize, Option<usize>, Option<usize>, Option<usize>, Option<usize>)>> {
    let beats = detect_fiducials(&samples, &DetectorConfig::default());
    Ok(beats.into_iter().map(|b| (b.r, b.p, b.q, b.s, b.t)).collect())
}

/// Parameter count of a preset (T, S, M, or L) with ten input features.
#[pyfunction]
fn preset_params(preset: &str) -> PyResult<usize> {
    let preset: Preset = preset.parse().map_err(err)?;
    Ok(count_params(&ModelConfig::preset(preset, 10, 0.25)))
}

/// Weights-only FP32 size in bytes for a preset.
#[pyfunction]
fn preset_weight_bytes(preset: &str) -> PyResult<usize> {
    Ok(weights_only_bytes(preset_params(preset)?, 4))
}

/// Runs ingest, denoise, detect, and feature extraction; returns
/// (total_rows, train_rows, test_rows).
#[pyfunction]
fn run_front_half(data_dir: &str, out_dir: &str) -> PyResult<(usize, usize, usize)> {
    let cfg = PipelineConfig::new(PathBuf::from(data_dir), PathBuf::from(out_dir));
    stage_ingest(&cfg).map_err(err)?;
    stage_denoise(&cfg).map_err(err)?;
    stage_detect(&cfg).map_err(err)?;
    let features = stage_features(&cfg).map_err(err)?;
    Ok((features.n_rows, features.n_train, features.n_test))
}

/// Trains a preset on a prepared feature split and returns the test
/// accuracy of the saved model.
#[pyfunction]
#[pyo3(signature = (data_dir, out_dir, preset="T", epochs=10, seed=0))]
fn train_preset(
    data_dir: &str,
    out_dir: &str,
    preset: &str,
    epochs: usize,
    seed: u64,
) -> PyResult<f64> {
    let cfg = PipelineConfig::new(PathBuf::from(data_dir), PathBuf::from(out_dir));
    let preset: Preset = preset.parse().map_err(err)?;
    let config = ModelConfig::preset(preset, FeatureMode::Ten.len(), 0.25);
    let spec = TrainSpec { epochs, seed, ..TrainSpec::default() };
    stage_train(&cfg, preset.name(), &config, FeatureMode::Ten, &spec).map_err(err)?;
    let tag = ModelTag { arch: preset.name().to_string(), mode: FeatureMode::Ten };
    let report = stage_eval(&cfg, &tag, QuantScheme::Fp32).map_err(err)?;
    Ok(report.accuracy)
}

#[pymodule]
fn ecgfusion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_lead, m)?)?;
    m.add_function(wrap_pyfunction!(denoise_signal, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(preset_params, m)?)?;
    m.add_function(wrap_pyfunction!(preset_weight_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(run_front_half, m)?)?;
    m.add_function(wrap_pyfunction!(train_preset, m)?)?;
    Ok(())
}
