//! From-scratch dense/LSTM/Bi-LSTM networks: layer configs, parameter
//! and FLOP counting, forward/backward passes, training, serialization.

pub mod io;
pub mod layers;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

/// One layer of a model stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Lstm { units: usize },
    Bilstm { units: usize },
    Dropout { rate: f64 },
    Dense { units: usize, activation: Activation },
}

/// Number of output classes.
pub const N_CLASSES: usize = 5;

/// Ordered layer stack plus the input sequence geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    /// Sequence length (10 for full fusion, 6 for the time-only ablation).
    pub input_len: usize,
    /// Width of each timestep (1: one fused feature per step).
    pub input_width: usize,
}

/// The four published model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Tiny,
    Small,
    Medium,
    Large,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Tiny, Preset::Small, Preset::Medium, Preset::Large];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tiny => "T",
            Preset::Small => "S",
            Preset::Medium => "M",
            Preset::Large => "L",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" | "tiny" => Ok(Preset::Tiny),
            "S" | "s" | "small" => Ok(Preset::Small),
            "M" | "m" | "medium" => Ok(Preset::Medium),
            "L" | "l" | "large" => Ok(Preset::Large),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl ModelConfig {
    /// Two Bi-LSTM layers, dropout, a ReLU dense layer, softmax output.
    fn bilstm_stack(n1: usize, n2: usize, dense: usize, dropout: f64, input_len: usize) -> Self {
        Self {
            layers: vec![
                LayerSpec::Bilstm { units: n1 },
                LayerSpec::Bilstm { units: n2 },
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::Dense { units: dense, activation: Activation::Relu },
                LayerSpec::Dense { units: N_CLASSES, activation: Activation::Softmax },
            ],
            input_len,
            input_width: 1,
        }
    }

    pub fn preset(preset: Preset, input_len: usize, dropout: f64) -> Self {
        match preset {
            Preset::Tiny => Self::bilstm_stack(64, 32, 128, dropout, input_len),
            Preset::Small => Self::bilstm_stack(64, 64, 128, dropout, input_len),
            Preset::Medium => Self::bilstm_stack(128, 112, 64, dropout, input_len),
            Preset::Large => Self::bilstm_stack(192, 176, 453, dropout, input_len),
        }
    }

    /// The unidirectional reference network of the LSTM/Bi-LSTM comparison.
    pub fn lstm_reference(units: usize, input_len: usize, dropout: f64) -> Self {
        Self {
            layers: vec![
                LayerSpec::Lstm { units },
                LayerSpec::Lstm { units },
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::Dense { units: 128, activation: Activation::Relu },
                LayerSpec::Dense { units: N_CLASSES, activation: Activation::Softmax },
            ],
            input_len,
            input_width: 1,
        }
    }

    /// The bidirectional counterpart with the same stack shape.
    pub fn bilstm_reference(units: usize, input_len: usize, dropout: f64) -> Self {
        Self::bilstm_stack(units, units, 128, dropout, input_len)
    }

    /// Output width of each layer given the input geometry.
    pub fn layer_output_widths(&self) -> Vec<usize> {
        let mut width = self.input_width;
        self.layers
            .iter()
            .map(|layer| {
                width = match layer {
                    LayerSpec::Lstm { units } => *units,
                    LayerSpec::Bilstm { units } => 2 * units,
                    LayerSpec::Dropout { .. } => width,
                    LayerSpec::Dense { units, .. } => *units,
                };
                width
            })
            .collect()
    }
}

/// One LSTM direction: 4*units*(input + units + 1) parameters.
fn lstm_dir_params(input: usize, units: usize) -> usize {
    4 * units * (input + units + 1)
}

/// Total trainable parameter count for a config.
pub fn count_params(config: &ModelConfig) -> usize {
    let mut width = config.input_width;
    let mut total = 0;
    for layer in &config.layers {
        match layer {
            LayerSpec::Lstm { units } => {
                total += lstm_dir_params(width, *units);
                width = *units;
            }
            LayerSpec::Bilstm { units } => {
                total += 2 * lstm_dir_params(width, *units);
                width = 2 * units;
            }
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Dense { units, .. } => {
                total += width * units + units;
                width = *units;
            }
        }
    }
    total
}

/// FLOP-counting conventions. The published FLOPs column follows an
/// undetermined convention, so both of ours are reported alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopConvention {
    /// One MAC per weight (biases excluded), sequence length ignored.
    WeightsOnlyMacs,
    /// Two FLOPs per MAC, recurrent layers unrolled over the sequence.
    MacsPerStepX2,
}

pub fn count_flops(config: &ModelConfig, convention: FlopConvention) -> usize {
    let mut width = config.input_width;
    let mut total = 0;
    for layer in &config.layers {
        match layer {
            LayerSpec::Lstm { units } => {
                let macs = 4 * units * (width + units);
                total += match convention {
                    FlopConvention::WeightsOnlyMacs => macs,
                    FlopConvention::MacsPerStepX2 => 2 * macs * config.input_len,
                };
                width = *units;
            }
            LayerSpec::Bilstm { units } => {
                let macs = 2 * 4 * units * (width + units);
                total += match convention {
                    FlopConvention::WeightsOnlyMacs => macs,
                    FlopConvention::MacsPerStepX2 => 2 * macs * config.input_len,
                };
                width = 2 * units;
            }
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Dense { units, .. } => {
                let macs = width * units;
                total += match convention {
                    FlopConvention::WeightsOnlyMacs => macs,
                    FlopConvention::MacsPerStepX2 => 2 * macs,
                };
                width = *units;
            }
        }
    }
    total
}

/// Published FLOPs reference constants (convention undetermined).
pub fn paper_flops_reference(preset: Preset) -> usize {
    match preset {
        Preset::Tiny => 71_584,
        Preset::Small => 121_472,
        Preset::Medium => 351_872,
        Preset::Large => 996_992,
    }
}

/// Bytes per weight under each storage width.
pub fn weights_only_bytes(param_count: usize, bytes_per_weight: usize) -> usize {
    param_count * bytes_per_weight
}
