//! Mini-batch training loop with SGD and Adam optimizers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{
    argmax_classes, model_backward, model_forward, sparse_ce_loss, ForwardMode, GradLayer,
    ModelGrads, ModelParameters,
};
use crate::nn::ModelConfig;

/// Optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            optimizer: Optimizer::adam_default(),
            seed: 0,
        }
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Flat first- and second-moment buffers for Adam.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

fn flatten_grads(grads: &ModelGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &grads.layers {
        match layer {
            GradLayer::Lstm(g) => {
                out.extend(g.w.iter());
                out.extend(g.u.iter());
                out.extend(g.b.iter());
            }
            GradLayer::Bilstm { fwd, bwd } => {
                for g in [fwd, bwd] {
                    out.extend(g.w.iter());
                    out.extend(g.u.iter());
                    out.extend(g.b.iter());
                }
            }
            GradLayer::Dropout => {}
            GradLayer::Dense { w, b } => {
                out.extend(w.iter());
                out.extend(b.iter());
            }
        }
    }
    out
}

fn apply_update(params: &mut ModelParameters, update: &[f64]) {
    let mut offset = 0;
    params.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            // Round through f32 so saved and in-memory weights agree bitwise.
            *v = (*v - update[offset]) as f32 as f64;
            offset += 1;
        }
    });
    debug_assert_eq!(offset, update.len());
}

/// Number of optimizer steps per epoch: ceil(n / batch_size).
pub fn iterations_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Loss and argmax accuracy over a dataset in eval mode, batched.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParameters,
    inputs: &Array2<f64>,
    labels: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::ShapeMismatch { context: "empty evaluation set".into() });
    }
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let batch = inputs.slice(ndarray::s![start..end, ..]).to_owned();
        let batch_labels = &labels[start..end];
        let cache = model_forward(config, params, &batch, ForwardMode::Eval)?;
        total_loss += sparse_ce_loss(&cache.probabilities, batch_labels)? * (end - start) as f64;
        for (pred, &truth) in argmax_classes(&cache.probabilities).iter().zip(batch_labels) {
            if *pred == truth {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((total_loss / n as f64, correct as f64 / n as f64))
}

/// Trains a model from scratch. Deterministic for a fixed spec: data order,
/// initialization, and dropout masks all derive from `spec.seed`.
pub fn train(
    config: &ModelConfig,
    train_inputs: &Array2<f64>,
    train_labels: &[usize],
    test_inputs: &Array2<f64>,
    test_labels: &[usize],
    spec: &TrainSpec,
) -> Result<(ModelParameters, Vec<EpochMetrics>)> {
    if train_inputs.nrows() != train_labels.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "{} training rows vs {} labels",
                train_inputs.nrows(),
                train_labels.len()
            ),
        });
    }
    if train_inputs.nrows() == 0 {
        return Err(Error::ShapeMismatch { context: "empty training set".into() });
    }
    let mut params = ModelParameters::init(config, spec.seed);
    let n = train_inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut adam = AdamState {
        m: vec![0.0; params.param_count()],
        v: vec![0.0; params.param_count()],
        step: 0,
    };
    let mut history = Vec::with_capacity(spec.epochs);
    // Distinct dropout mask per optimizer step, derived from the seed.
    let mut dropout_counter = spec.seed.wrapping_mul(0x9e3779b97f4a7c15);

    for epoch in 0..spec.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(spec.batch_size) {
            let mut batch = Array2::zeros((chunk.len(), train_inputs.ncols()));
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for (row, &idx) in chunk.iter().enumerate() {
                batch.row_mut(row).assign(&train_inputs.row(idx));
                batch_labels.push(train_labels[idx]);
            }
            dropout_counter = dropout_counter.wrapping_add(1);
            let cache = model_forward(
                config,
                &params,
                &batch,
                ForwardMode::Train { dropout_seed: dropout_counter },
            )?;
            let loss = sparse_ce_loss(&cache.probabilities, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}"),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            for (pred, &truth) in argmax_classes(&cache.probabilities).iter().zip(&batch_labels) {
                if *pred == truth {
                    correct += 1;
                }
            }
            let grads = model_backward(config, &params, &cache, &batch_labels)?;
            let flat = flatten_grads(&grads);
            let update = match spec.optimizer {
                Optimizer::Sgd { lr } => flat.iter().map(|g| lr * g).collect::<Vec<_>>(),
                Optimizer::Adam { lr, beta1, beta2, eps } => {
                    adam.step += 1;
                    let bc1 = 1.0 - beta1.powi(adam.step as i32);
                    let bc2 = 1.0 - beta2.powi(adam.step as i32);
                    flat.iter()
                        .enumerate()
                        .map(|(i, &g)| {
                            adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
                            adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g * g;
                            lr * (adam.m[i] / bc1) / ((adam.v[i] / bc2).sqrt() + eps)
                        })
                        .collect()
                }
            };
            apply_update(&mut params, &update);
        }
        let train_loss = epoch_loss / n as f64;
        let train_accuracy = correct as f64 / n as f64;
        let (test_loss, test_accuracy) = if test_labels.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(config, &params, test_inputs, test_labels, spec.batch_size)?
        };
        history.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
        });
    }
    Ok((params, history))
}
