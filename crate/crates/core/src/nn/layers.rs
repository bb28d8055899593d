//! LSTM cell and layer arithmetic: batched forward passes with cached
//! activations and exact backpropagation through time.

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};

/// One LSTM direction. Gate order in the concatenated dimension is
/// i, f, g, o. Shapes: `w` (input, 4*units), `u` (units, 4*units),
/// `b` (4*units).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmWeights {
    pub fn zeros(input: usize, units: usize) -> Self {
        Self {
            w: Array2::zeros((input, 4 * units)),
            u: Array2::zeros((units, 4 * units)),
            b: Array1::zeros(4 * units),
        }
    }

    pub fn units(&self) -> usize {
        self.u.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cached activations from one direction's pass over a sequence.
pub struct LstmCache {
    /// Gate activations per timestep: (batch, 4*units), post-nonlinearity.
    pub gates: Vec<Array2<f64>>,
    /// Cell states c_t per timestep.
    pub cells: Vec<Array2<f64>>,
    /// Hidden states h_t per timestep.
    pub hiddens: Vec<Array2<f64>>,
    /// Inputs x_t per timestep.
    pub inputs: Vec<Array2<f64>>,
}

/// One LSTM step: i,f,o = sigmoid, g = tanh, c = f*c_prev + i*g,
/// h = o * tanh(c).
pub fn lstm_cell_forward(
    x_t: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
    weights: &LstmWeights,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let units = weights.units();
    if x_t.ncols() != weights.input_dim() || h_prev.ncols() != units || c_prev.ncols() != units {
        return Err(Error::ShapeMismatch {
            context: format!(
                "lstm step: x {:?}, h {:?}, c {:?} vs weights ({}, {})",
                x_t.dim(),
                h_prev.dim(),
                c_prev.dim(),
                weights.input_dim(),
                units
            ),
        });
    }
    let mut a = x_t.dot(&weights.w) + h_prev.dot(&weights.u);
    a += &weights.b;
    // In-place gate nonlinearities.
    let mut gates = a;
    gates.slice_mut(s![.., ..2 * units]).mapv_inplace(sigmoid);
    gates
        .slice_mut(s![.., 2 * units..3 * units])
        .mapv_inplace(f64::tanh);
    gates.slice_mut(s![.., 3 * units..]).mapv_inplace(sigmoid);

    let i = gates.slice(s![.., ..units]);
    let f = gates.slice(s![.., units..2 * units]);
    let g = gates.slice(s![.., 2 * units..3 * units]);
    let o = gates.slice(s![.., 3 * units..]);

    let c_t = &f * c_prev + &i * &g;
    let h_t = &o.to_owned() * &c_t.mapv(f64::tanh);
    Ok((h_t, c_t, gates))
}

/// Runs one direction over `inputs` (one (batch, input_dim) array per
/// timestep, already in processing order). States start at zero.
pub fn lstm_direction_forward(
    inputs: &[Array2<f64>],
    weights: &LstmWeights,
) -> Result<LstmCache> {
    if inputs.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "empty sequence".into(),
        });
    }
    let batch = inputs[0].nrows();
    let units = weights.units();
    let mut h = Array2::zeros((batch, units));
    let mut c = Array2::zeros((batch, units));
    let mut cache = LstmCache {
        gates: Vec::with_capacity(inputs.len()),
        cells: Vec::with_capacity(inputs.len()),
        hiddens: Vec::with_capacity(inputs.len()),
        inputs: inputs.to_vec(),
    };
    for x_t in inputs {
        let (h_t, c_t, gates) = lstm_cell_forward(x_t, &h, &c, weights)?;
        cache.gates.push(gates);
        cache.cells.push(c_t.clone());
        cache.hiddens.push(h_t.clone());
        h = h_t;
        c = c_t;
    }
    Ok(cache)
}

/// Gradients for one direction.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

/// Backpropagation through time for one direction. `dh_out[t]` is the
/// loss gradient w.r.t. h_t as exposed to the next layer. Returns
/// parameter gradients and per-timestep input gradients (in the same
/// order as the cached inputs).
pub fn lstm_direction_backward(
    cache: &LstmCache,
    weights: &LstmWeights,
    dh_out: &[Array2<f64>],
) -> (LstmGrads, Vec<Array2<f64>>) {
    let steps = cache.inputs.len();
    let batch = cache.inputs[0].nrows();
    let units = weights.units();
    let mut grads = LstmGrads {
        w: Array2::zeros(weights.w.dim()),
        u: Array2::zeros(weights.u.dim()),
        b: Array1::zeros(weights.b.dim()),
    };
    let mut dx = vec![Array2::zeros((batch, 0)); steps];
    let mut dh_next: Array2<f64> = Array2::zeros((batch, units));
    let mut dc_next: Array2<f64> = Array2::zeros((batch, units));

    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let i = gates.slice(s![.., ..units]);
        let f = gates.slice(s![.., units..2 * units]);
        let g = gates.slice(s![.., 2 * units..3 * units]);
        let o = gates.slice(s![.., 3 * units..]);
        let c_t = &cache.cells[t];
        let tanh_c = c_t.mapv(f64::tanh);

        let dh = &dh_out[t] + &dh_next;
        let d_o = &dh * &tanh_c;
        let dc = &dc_next + &(&dh * &o.to_owned() * tanh_c.mapv(|v| 1.0 - v * v));

        let c_prev = if t > 0 {
            cache.cells[t - 1].clone()
        } else {
            Array2::zeros((batch, units))
        };
        let d_i = &dc * &g.to_owned();
        let d_f = &dc * &c_prev;
        let d_g = &dc * &i.to_owned();

        // Pre-activation gradients, gate order i,f,g,o.
        let mut da = Array2::zeros((batch, 4 * units));
        da.slice_mut(s![.., ..units])
            .assign(&(&d_i * &i.mapv(|v| v * (1.0 - v))));
        da.slice_mut(s![.., units..2 * units])
            .assign(&(&d_f * &f.mapv(|v| v * (1.0 - v))));
        da.slice_mut(s![.., 2 * units..3 * units])
            .assign(&(&d_g * &g.mapv(|v| 1.0 - v * v)));
        da.slice_mut(s![.., 3 * units..])
            .assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));

        grads.w += &cache.inputs[t].t().dot(&da);
        let h_prev = if t > 0 {
            cache.hiddens[t - 1].clone()
        } else {
            Array2::zeros((batch, units))
        };
        grads.u += &h_prev.t().dot(&da);
        grads.b += &da.sum_axis(Axis(0));

        dx[t] = da.dot(&weights.w.t());
        dh_next = da.dot(&weights.u.t());
        dc_next = &dc * &f.to_owned();
    }
    (grads, dx)
}

/// Bi-LSTM cache: forward direction in sequence order, backward
/// direction in reversed order.
pub struct BilstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
}

/// Bidirectional pass: forward left-to-right, backward right-to-left,
/// outputs concatenated per timestep (width 2*units).
pub fn bilstm_layer_forward(
    inputs: &[Array2<f64>],
    weights_fwd: &LstmWeights,
    weights_bwd: &LstmWeights,
) -> Result<(Vec<Array2<f64>>, BilstmCache)> {
    let fwd = lstm_direction_forward(inputs, weights_fwd)?;
    let reversed: Vec<Array2<f64>> = inputs.iter().rev().cloned().collect();
    let bwd = lstm_direction_forward(&reversed, weights_bwd)?;
    let steps = inputs.len();
    let outputs = (0..steps)
        .map(|t| {
            ndarray::concatenate(
                Axis(1),
                &[fwd.hiddens[t].view(), bwd.hiddens[steps - 1 - t].view()],
            )
            .expect("concat shapes agree")
        })
        .collect();
    Ok((outputs, BilstmCache { fwd, bwd }))
}

/// BPTT through a Bi-LSTM layer. `dh_out[t]` has width 2*units with the
/// forward half first.
pub fn bilstm_layer_backward(
    cache: &BilstmCache,
    weights_fwd: &LstmWeights,
    weights_bwd: &LstmWeights,
    dh_out: &[Array2<f64>],
) -> (LstmGrads, LstmGrads, Vec<Array2<f64>>) {
    let units = weights_fwd.units();
    let steps = dh_out.len();
    let dh_fwd: Vec<Array2<f64>> = dh_out
        .iter()
        .map(|d| d.slice(s![.., ..units]).to_owned())
        .collect();
    // Backward direction processed the sequence reversed; reorder its
    // output gradients to match.
    let dh_bwd: Vec<Array2<f64>> = (0..steps)
        .map(|t| dh_out[steps - 1 - t].slice(s![.., units..]).to_owned())
        .collect();
    let (grads_fwd, dx_fwd) = lstm_direction_backward(&cache.fwd, weights_fwd, &dh_fwd);
    let (grads_bwd, dx_bwd_rev) = lstm_direction_backward(&cache.bwd, weights_bwd, &dh_bwd);
    let dx = (0..steps)
        .map(|t| &dx_fwd[t] + &dx_bwd_rev[steps - 1 - t])
        .collect();
    (grads_fwd, grads_bwd, dx)
}
