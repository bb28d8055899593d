//! Whole-model forward and backward passes over the layer stack.

use ndarray::{Array1, Array2, Axis};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    bilstm_layer_backward, bilstm_layer_forward, lstm_direction_backward,
    lstm_direction_forward, BilstmCache, LstmCache, LstmGrads, LstmWeights,
};
use crate::nn::{count_params, Activation, LayerSpec, ModelConfig};

/// Trainable tensors for one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Lstm(LstmWeights),
    Bilstm { fwd: LstmWeights, bwd: LstmWeights },
    Dropout,
    Dense { w: Array2<f64>, b: Array1<f64> },
}

/// All model parameters, one entry per config layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub layers: Vec<LayerParams>,
}

/// Rounds through f32 so that in-memory values are exactly what an FP32
/// model file stores.
fn quantize_to_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl ModelParameters {
    /// Seeded initialization: uniform fan-in scaling for kernels, zero
    /// biases except the forget gate at 1.0.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut width = config.input_width;
        let mut layers = Vec::with_capacity(config.layers.len());
        for layer in &config.layers {
            match layer {
                LayerSpec::Lstm { units } => {
                    layers.push(LayerParams::Lstm(init_lstm(width, *units, &mut rng)));
                    width = *units;
                }
                LayerSpec::Bilstm { units } => {
                    layers.push(LayerParams::Bilstm {
                        fwd: init_lstm(width, *units, &mut rng),
                        bwd: init_lstm(width, *units, &mut rng),
                    });
                    width = 2 * units;
                }
                LayerSpec::Dropout { .. } => layers.push(LayerParams::Dropout),
                LayerSpec::Dense { units, .. } => {
                    let scale = (6.0 / (width + units) as f64).sqrt();
                    let w = Array2::from_shape_fn((width, *units), |_| {
                        quantize_to_f32(rng.random_range(-scale..scale))
                    });
                    layers.push(LayerParams::Dense {
                        w,
                        b: Array1::zeros(*units),
                    });
                    width = *units;
                }
            }
        }
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Lstm(w) => w.param_count(),
                LayerParams::Bilstm { fwd, bwd } => fwd.param_count() + bwd.param_count(),
                LayerParams::Dropout => 0,
                LayerParams::Dense { w, b } => w.len() + b.len(),
            })
            .sum()
    }

    /// Flat views of every tensor with canonical names, in file order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut push_lstm = |dir: &str, w: &LstmWeights| {
                out.push((format!("layer{idx}.{dir}.w"), w.w.iter().copied().collect()));
                out.push((format!("layer{idx}.{dir}.u"), w.u.iter().copied().collect()));
                out.push((format!("layer{idx}.{dir}.b"), w.b.to_vec()));
            };
            match layer {
                LayerParams::Lstm(w) => push_lstm("fwd", w),
                LayerParams::Bilstm { fwd, bwd } => {
                    push_lstm("fwd", fwd);
                    push_lstm("bwd", bwd);
                }
                LayerParams::Dropout => {}
                LayerParams::Dense { w, b } => {
                    out.push((format!("layer{idx}.w"), w.iter().copied().collect()));
                    out.push((format!("layer{idx}.b"), b.to_vec()));
                }
            }
        }
        out
    }

    /// Rounds every parameter to its nearest f32 value.
    pub fn clamp_to_f32(&mut self) {
        self.for_each_tensor_mut(|t| t.mapv_inplace(quantize_to_f32));
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut ndarray::ArrayViewMutD<f64>)) {
        for layer in &mut self.layers {
            match layer {
                LayerParams::Lstm(w) => {
                    f(&mut w.w.view_mut().into_dyn());
                    f(&mut w.u.view_mut().into_dyn());
                    f(&mut w.b.view_mut().into_dyn());
                }
                LayerParams::Bilstm { fwd, bwd } => {
                    for w in [fwd, bwd] {
                        f(&mut w.w.view_mut().into_dyn());
                        f(&mut w.u.view_mut().into_dyn());
                        f(&mut w.b.view_mut().into_dyn());
                    }
                }
                LayerParams::Dropout => {}
                LayerParams::Dense { w, b } => {
                    f(&mut w.view_mut().into_dyn());
                    f(&mut b.view_mut().into_dyn());
                }
            }
        }
    }
}

fn init_lstm(input: usize, units: usize, rng: &mut ChaCha20Rng) -> LstmWeights {
    let mut weights = LstmWeights::zeros(input, units);
    let w_scale = (6.0 / (input + units) as f64).sqrt();
    let u_scale = (6.0 / (2 * units) as f64).sqrt();
    weights.w.mapv_inplace(|_| quantize_to_f32(rng.random_range(-w_scale..w_scale)));
    weights.u.mapv_inplace(|_| quantize_to_f32(rng.random_range(-u_scale..u_scale)));
    // Forget-gate bias 1.0 stabilizes early training.
    for j in units..2 * units {
        weights.b[j] = 1.0;
    }
    weights
}

/// Forward execution mode.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    /// Dropout masks sampled with the given seed; survivors scaled 1/(1-p).
    Train { dropout_seed: u64 },
    /// Dropout is the identity.
    Eval,
}

/// Per-layer cached state for the backward pass.
pub enum LayerCache {
    Lstm(LstmCache),
    Bilstm(BilstmCache),
    /// Scaled dropout mask actually applied (empty in eval mode).
    Dropout(Option<Array2<f64>>),
    Dense {
        input: Array2<f64>,
        /// Post-activation output.
        output: Array2<f64>,
    },
}

pub struct ForwardCache {
    pub layer_caches: Vec<LayerCache>,
    /// Softmax probabilities (batch, classes).
    pub probabilities: Array2<f64>,
    /// Timestep index whose recurrent output feeds the head.
    pub seq_len: usize,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Full forward pass. `batch` is (batch, seq_len) of width-1 timesteps
/// (the fused feature sequence). The recurrent stack consumes the
/// sequence; the final timestep's output feeds the dense head.
pub fn model_forward(
    config: &ModelConfig,
    params: &ModelParameters,
    batch: &Array2<f64>,
    mode: ForwardMode,
) -> Result<ForwardCache> {
    if batch.ncols() != config.input_len * config.input_width {
        return Err(Error::ShapeMismatch {
            context: format!(
                "input has {} columns, config wants {}x{}",
                batch.ncols(),
                config.input_len,
                config.input_width
            ),
        });
    }
    let n = batch.nrows();
    let seq_len = config.input_len;
    // Sequence as one (batch, width) array per timestep.
    let mut sequence: Option<Vec<Array2<f64>>> = Some(
        (0..seq_len)
            .map(|t| {
                let mut x = Array2::zeros((n, config.input_width));
                for b in 0..n {
                    for w in 0..config.input_width {
                        x[[b, w]] = batch[[b, t * config.input_width + w]];
                    }
                }
                x
            })
            .collect(),
    );
    let mut vector: Option<Array2<f64>> = None;
    let mut dropout_rng = match mode {
        ForwardMode::Train { dropout_seed } => Some(ChaCha20Rng::seed_from_u64(dropout_seed)),
        ForwardMode::Eval => None,
    };

    let mut caches = Vec::with_capacity(config.layers.len());
    for (spec, layer) in config.layers.iter().zip(&params.layers) {
        match (spec, layer) {
            (LayerSpec::Lstm { .. }, LayerParams::Lstm(weights)) => {
                let seq = sequence.as_ref().ok_or_else(|| Error::ShapeMismatch {
                    context: "recurrent layer after the sequence was collapsed".into(),
                })?;
                let cache = lstm_direction_forward(seq, weights)?;
                sequence = Some(cache.hiddens.clone());
                caches.push(LayerCache::Lstm(cache));
            }
            (LayerSpec::Bilstm { .. }, LayerParams::Bilstm { fwd, bwd }) => {
                let seq = sequence.as_ref().ok_or_else(|| Error::ShapeMismatch {
                    context: "recurrent layer after the sequence was collapsed".into(),
                })?;
                let (outputs, cache) = bilstm_layer_forward(seq, fwd, bwd)?;
                sequence = Some(outputs);
                caches.push(LayerCache::Bilstm(cache));
            }
            (LayerSpec::Dropout { rate }, LayerParams::Dropout) => {
                let x = collapse(&mut sequence, &mut vector);
                let mask = match &mut dropout_rng {
                    Some(rng) if *rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let mask = Array2::from_shape_fn(x.dim(), |_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        });
                        vector = Some(&x * &mask);
                        Some(mask)
                    }
                    _ => {
                        vector = Some(x);
                        None
                    }
                };
                caches.push(LayerCache::Dropout(mask));
            }
            (LayerSpec::Dense { activation, .. }, LayerParams::Dense { w, b }) => {
                let x = collapse(&mut sequence, &mut vector);
                let mut out = x.dot(w);
                out += b;
                let out = match activation {
                    Activation::Relu => out.mapv(|v| v.max(0.0)),
                    Activation::Softmax => softmax_rows(&out),
                };
                vector = Some(out.clone());
                caches.push(LayerCache::Dense { input: x, output: out });
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "config and parameters disagree on layer kinds".into(),
                })
            }
        }
    }
    let probabilities = vector.ok_or_else(|| Error::ShapeMismatch {
        context: "model has no dense head".into(),
    })?;
    if probabilities.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "model output".into(),
        });
    }
    Ok(ForwardCache {
        layer_caches: caches,
        probabilities,
        seq_len,
    })
}

/// Takes the final timestep's output when leaving the recurrent stage.
fn collapse(sequence: &mut Option<Vec<Array2<f64>>>, vector: &mut Option<Array2<f64>>) -> Array2<f64> {
    if let Some(v) = vector.take() {
        v
    } else {
        let seq = sequence.take().expect("either sequence or vector present");
        seq.last().expect("non-empty sequence").clone()
    }
}

/// Mean negative log-likelihood of the true classes. Probabilities are
/// clamped to 1e-12 before the log.
pub fn sparse_ce_loss(probabilities: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if probabilities.nrows() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "{} probability rows vs {} labels",
                probabilities.nrows(),
                labels.len()
            ),
        });
    }
    let mut total = 0.0;
    for (row, &label) in probabilities.rows().into_iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::BadLabel {
                label: label as i64,
            });
        }
        total -= row[label].max(1e-12).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Gradients with the same structure as the parameters.
pub struct ModelGrads {
    pub layers: Vec<GradLayer>,
}

pub enum GradLayer {
    Lstm(LstmGrads),
    Bilstm { fwd: LstmGrads, bwd: LstmGrads },
    Dropout,
    Dense { w: Array2<f64>, b: Array1<f64> },
}

/// Exact gradients of the mean cross-entropy loss for every parameter.
pub fn model_backward(
    config: &ModelConfig,
    params: &ModelParameters,
    cache: &ForwardCache,
    labels: &[usize],
) -> Result<ModelGrads> {
    let n = cache.probabilities.nrows();
    // Softmax + cross-entropy head gradient: (p - onehot) / n.
    let mut delta = cache.probabilities.clone();
    for (i, &label) in labels.iter().enumerate() {
        delta[[i, label]] -= 1.0;
    }
    delta.mapv_inplace(|v| v / n as f64);

    let mut grad_layers: Vec<GradLayer> = Vec::with_capacity(params.layers.len());
    // Gradient flowing backward; starts as the head delta, switches to a
    // per-timestep sequence when entering the recurrent stack.
    let mut d_vector: Option<Array2<f64>> = Some(delta);
    let mut d_sequence: Option<Vec<Array2<f64>>> = None;

    for (idx, (spec, layer)) in config.layers.iter().zip(&params.layers).enumerate().rev() {
        let layer_cache = &cache.layer_caches[idx];
        match (spec, layer, layer_cache) {
            (
                LayerSpec::Dense { activation, .. },
                LayerParams::Dense { w, .. },
                LayerCache::Dense { input, output },
            ) => {
                let mut d_out = d_vector.take().expect("dense sees a vector gradient");
                if *activation == Activation::Relu {
                    // Softmax+CE is already folded into the incoming delta.
                    d_out.zip_mut_with(output, |d, &o| {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                let dw = input.t().dot(&d_out);
                let db = d_out.sum_axis(Axis(0));
                d_vector = Some(d_out.dot(&w.t()));
                grad_layers.push(GradLayer::Dense { w: dw, b: db });
            }
            (LayerSpec::Dropout { .. }, LayerParams::Dropout, LayerCache::Dropout(mask)) => {
                let mut d_out = d_vector.take().expect("dropout sees a vector gradient");
                if let Some(mask) = mask {
                    d_out *= mask;
                }
                d_vector = Some(d_out);
                grad_layers.push(GradLayer::Dropout);
            }
            (LayerSpec::Lstm { .. }, LayerParams::Lstm(weights), LayerCache::Lstm(c)) => {
                let dh_out = take_sequence_grad(&mut d_vector, &mut d_sequence, c.hiddens.len(), n, weights.units());
                let (grads, dx) = lstm_direction_backward(c, weights, &dh_out);
                d_sequence = Some(dx);
                grad_layers.push(GradLayer::Lstm(grads));
            }
            (
                LayerSpec::Bilstm { .. },
                LayerParams::Bilstm { fwd, bwd },
                LayerCache::Bilstm(c),
            ) => {
                let steps = c.fwd.hiddens.len();
                let dh_out = take_sequence_grad(&mut d_vector, &mut d_sequence, steps, n, 2 * fwd.units());
                let (gf, gb, dx) = bilstm_layer_backward(c, fwd, bwd, &dh_out);
                d_sequence = Some(dx);
                grad_layers.push(GradLayer::Bilstm { fwd: gf, bwd: gb });
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "config/parameter/cache disagreement in backward".into(),
                })
            }
        }
    }
    grad_layers.reverse();
    Ok(ModelGrads { layers: grad_layers })
}

/// The head consumes only the final timestep, so when the vector gradient
/// crosses back into the recurrent stage only that timestep is nonzero.
fn take_sequence_grad(
    d_vector: &mut Option<Array2<f64>>,
    d_sequence: &mut Option<Vec<Array2<f64>>>,
    steps: usize,
    batch: usize,
    width: usize,
) -> Vec<Array2<f64>> {
    if let Some(seq) = d_sequence.take() {
        seq
    } else {
        let head = d_vector.take().expect("gradient present");
        let mut seq = vec![Array2::zeros((batch, width)); steps];
        seq[steps - 1] = head;
        seq
    }
}

/// Convenience: probabilities only, eval mode.
pub fn predict(
    config: &ModelConfig,
    params: &ModelParameters,
    batch: &Array2<f64>,
) -> Result<Array2<f64>> {
    Ok(model_forward(config, params, batch, ForwardMode::Eval)?.probabilities)
}

/// Argmax class per row.
pub fn argmax_classes(probabilities: &Array2<f64>) -> Vec<usize> {
    probabilities
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}

/// Checks that the declared parameter structure matches the config.
pub fn validate_params(config: &ModelConfig, params: &ModelParameters) -> Result<()> {
    if params.param_count() != count_params(config) {
        return Err(Error::ShapeMismatch {
            context: format!(
                "parameter count {} does not match config count {}",
                params.param_count(),
                count_params(config)
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Preset;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            layers: vec![
                LayerSpec::Bilstm { units: 3 },
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Dense { units: 4, activation: Activation::Relu },
                LayerSpec::Dense { units: 5, activation: Activation::Softmax },
            ],
            input_len: 6,
            input_width: 1,
        }
    }

    fn random_batch(n: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, 1);
        let batch = random_batch(7, 6, 2);
        let probs = predict(&config, &params, &batch).unwrap();
        for row in probs.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut config = tiny_config();
        config.layers[1] = LayerSpec::Dropout { rate: 0.0 };
        let params = ModelParameters::init(&config, 3);
        let batch = random_batch(4, 6, 4);
        let train = model_forward(&config, &params, &batch, ForwardMode::Train { dropout_seed: 9 })
            .unwrap()
            .probabilities;
        let eval = predict(&config, &params, &batch).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn eval_mode_ignores_dropout_seed() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, 3);
        let batch = random_batch(4, 6, 4);
        let a = predict(&config, &params, &batch).unwrap();
        let b = predict(&config, &params, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Independent scalar-arithmetic evaluation of an LSTM(2) -> Dense
        // softmax stack on one sample.
        let config = ModelConfig {
            layers: vec![
                LayerSpec::Lstm { units: 2 },
                LayerSpec::Dense { units: 5, activation: Activation::Softmax },
            ],
            input_len: 3,
            input_width: 1,
        };
        let params = ModelParameters::init(&config, 42);
        let x = [0.3, -0.8, 0.5];
        let batch = Array2::from_shape_vec((1, 3), x.to_vec()).unwrap();
        let probs = predict(&config, &params, &batch).unwrap();

        // Oracle: straight-line recurrence on scalars.
        let (w, u, b) = match &params.layers[0] {
            LayerParams::Lstm(l) => (&l.w, &l.u, &l.b),
            _ => unreachable!(),
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = [0.0f64; 2];
        let mut c = [0.0f64; 2];
        for &xv in &x {
            let mut a = [0.0f64; 8];
            for (j, av) in a.iter_mut().enumerate() {
                *av = xv * w[[0, j]] + h[0] * u[[0, j]] + h[1] * u[[1, j]] + b[j];
            }
            for k in 0..2 {
                let i = sig(a[k]);
                let f = sig(a[2 + k]);
                let g = a[4 + k].tanh();
                let o = sig(a[6 + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
        }
        let (dw, db) = match &params.layers[1] {
            LayerParams::Dense { w, b } => (w, b),
            _ => unreachable!(),
        };
        let mut logits = [0.0f64; 5];
        for (j, l) in logits.iter_mut().enumerate() {
            *l = h[0] * dw[[0, j]] + h[1] * dw[[1, j]] + db[j];
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..5 {
            assert!((probs[[0, j]] - exps[j] / sum).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_of_uniform_predictor_is_ln5() {
        let probs = Array2::from_elem((8, 5), 0.2);
        let labels = vec![0, 1, 2, 3, 4, 0, 1, 2];
        let loss = sparse_ce_loss(&probs, &labels).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_of_perfect_predictions_is_zero() {
        let mut probs = Array2::zeros((3, 5));
        let labels = vec![0, 3, 4];
        for (i, &l) in labels.iter().enumerate() {
            probs[[i, l]] = 1.0;
        }
        assert!(sparse_ce_loss(&probs, &labels).unwrap().abs() < 1e-12);
    }

    #[test]
    fn loss_direct_substitution() {
        let mut probs = Array2::from_elem((2, 5), 0.125);
        probs[[0, 0]] = 0.5;
        probs[[1, 1]] = 0.25;
        let loss = sparse_ce_loss(&probs, &[0, 1]).unwrap();
        let expect = -(0.5f64.ln() + 0.25f64.ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-9);
        assert!((expect - 1.0397207708399179).abs() < 1e-10);
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let probs = Array2::from_elem((1, 5), 0.2);
        assert!(matches!(
            sparse_ce_loss(&probs, &[7]),
            Err(Error::BadLabel { label: 7 })
        ));
    }

    #[test]
    fn dense_bias_gradient_at_zero_weights() {
        // Dense-only head with all-zero weights: softmax(0) = 0.2, so the
        // bias gradient is mean(softmax(0) - onehot).
        let config = ModelConfig {
            layers: vec![LayerSpec::Dense { units: 5, activation: Activation::Softmax }],
            input_len: 4,
            input_width: 1,
        };
        let mut params = ModelParameters::init(&config, 0);
        if let LayerParams::Dense { w, b } = &mut params.layers[0] {
            w.fill(0.0);
            b.fill(0.0);
        }
        let batch = random_batch(5, 4, 1);
        let labels = vec![0, 1, 2, 3, 4];
        let cache = model_forward(&config, &params, &batch, ForwardMode::Eval).unwrap();
        let grads = model_backward(&config, &params, &cache, &labels).unwrap();
        if let GradLayer::Dense { b, .. } = &grads.layers[0] {
            // Each class is the truth exactly once in 5 samples.
            for j in 0..5 {
                assert!((b[j] - (0.2 - 0.2)).abs() < 1e-12, "b[{j}] = {}", b[j]);
            }
        } else {
            panic!("expected dense gradient");
        }
    }

    #[test]
    fn gradient_of_unused_input_rows_is_zero() {
        // An input kernel row fed only by zeros gets an exactly-zero gradient.
        let config = ModelConfig {
            layers: vec![
                LayerSpec::Lstm { units: 3 },
                LayerSpec::Dense { units: 5, activation: Activation::Softmax },
            ],
            input_len: 4,
            input_width: 2,
        };
        let params = ModelParameters::init(&config, 5);
        let mut batch = random_batch(3, 8, 6);
        // Zero the second width channel at every timestep.
        for b in 0..3 {
            for t in 0..4 {
                batch[[b, t * 2 + 1]] = 0.0;
            }
        }
        let cache = model_forward(&config, &params, &batch, ForwardMode::Eval).unwrap();
        let grads = model_backward(&config, &params, &cache, &[0, 1, 2]).unwrap();
        if let GradLayer::Lstm(g) = &grads.layers[0] {
            for j in 0..12 {
                assert_eq!(g.w[[1, j]], 0.0);
            }
        } else {
            panic!("expected lstm gradient");
        }
    }

    #[test]
    fn preset_params_match_counts() {
        for preset in Preset::ALL {
            let config = ModelConfig::preset(preset, 10, 0.25);
            let params = ModelParameters::init(&config, 0);
            validate_params(&config, &params).unwrap();
        }
    }

    /// Central finite-difference gradient check over every parameter of a
    /// small model containing every layer kind.
    #[test]
    fn finite_difference_gradient_check() {
        let config = ModelConfig {
            layers: vec![
                LayerSpec::Bilstm { units: 2 },
                LayerSpec::Lstm { units: 2 },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 3, activation: Activation::Relu },
                LayerSpec::Dense { units: 5, activation: Activation::Softmax },
            ],
            input_len: 4,
            input_width: 1,
        };
        let mut params = ModelParameters::init(&config, 17);
        // Nudge every parameter off zero so no relu pre-activation sits
        // exactly at the kink, where central differences disagree with
        // the one-sided analytic subgradient.
        let mut shift = 0.013f64;
        params.for_each_tensor_mut(|tensor| {
            for v in tensor.iter_mut() {
                *v = (*v + shift) as f32 as f64;
                shift = -shift * 0.9 + 0.003;
            }
        });
        let batch = random_batch(3, 4, 18);
        let labels = vec![0, 2, 4];
        let mode = ForwardMode::Train { dropout_seed: 99 };

        let cache = model_forward(&config, &params, &batch, mode).unwrap();
        let grads = model_backward(&config, &params, &cache, &labels).unwrap();

        let loss_at = |p: &ModelParameters| {
            let c = model_forward(&config, p, &batch, mode).unwrap();
            sparse_ce_loss(&c.probabilities, &labels).unwrap()
        };

        let eps = 1e-4;
        let analytic = flatten_grads(&grads);
        let mut max_rel = 0.0f64;
        let n_params = params.param_count();
        for idx in 0..n_params {
            let mut plus = params.clone();
            perturb(&mut plus, idx, eps);
            let mut minus = params.clone();
            perturb(&mut minus, idx, -eps);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let denom = numeric.abs().max(analytic[idx].abs()).max(1e-6);
            let rel = (numeric - analytic[idx]).abs() / denom;
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel <= 1e-4, "max relative gradient error {max_rel}");
    }

    pub(crate) fn flatten_grads(grads: &ModelGrads) -> Vec<f64> {
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

    pub(crate) fn perturb(params: &mut ModelParameters, flat_index: usize, delta: f64) {
        let mut remaining = flat_index;
        let mut done = false;
        params.for_each_tensor_mut(|t| {
            if done {
                return;
            }
            if remaining < t.len() {
                if let Some(v) = t.iter_mut().nth(remaining) {
                    *v += delta;
                }
                done = true;
            } else {
                remaining -= t.len();
            }
        });
        assert!(done, "flat index out of range");
    }
}
