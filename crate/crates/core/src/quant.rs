//! Post-training quantization: FP16 storage, full INT8 with calibrated
//! activation ranges, and dynamic-range INT8 (static weights, runtime
//! activation scales). Integer matmuls accumulate in i32; gate
//! nonlinearities and LSTM cell state stay in floating point.

use std::io::{Read, Write};
use std::path::Path;

use half::f16;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::LstmWeights;
use crate::nn::model::{predict, LayerCache, LayerParams, ModelParameters};
use crate::nn::{count_params, Activation, LayerSpec, ModelConfig};

/// Storage scheme for a deployed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantScheme {
    Fp32,
    Fp16,
    Int8Full,
    Drq,
}

impl QuantScheme {
    pub const ALL: [QuantScheme; 4] =
        [QuantScheme::Fp32, QuantScheme::Fp16, QuantScheme::Int8Full, QuantScheme::Drq];

    pub fn name(self) -> &'static str {
        match self {
            QuantScheme::Fp32 => "fp32",
            QuantScheme::Fp16 => "fp16",
            QuantScheme::Int8Full => "int8_full",
            QuantScheme::Drq => "drq",
        }
    }

    /// Bytes used per weight in the weights-only accounting.
    pub fn bytes_per_weight(self) -> usize {
        match self {
            QuantScheme::Fp32 => 4,
            QuantScheme::Fp16 => 2,
            QuantScheme::Int8Full | QuantScheme::Drq => 1,
        }
    }
}

impl std::str::FromStr for QuantScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(QuantScheme::Fp32),
            "fp16" => Ok(QuantScheme::Fp16),
            "int8_full" | "int8" => Ok(QuantScheme::Int8Full),
            "drq" => Ok(QuantScheme::Drq),
            other => Err(Error::Config(format!("unknown quantization scheme {other:?}"))),
        }
    }
}

/// Affine activation quantization parameters over the i8 range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorQuant {
    pub scale: f64,
    pub zero_point: i32,
}

/// Minimum representable scale; avoids division by zero on constant tensors.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Affine parameters from an observed range, widened to include zero so
/// that zero activations are exactly representable.
pub fn affine_params(min: f64, max: f64) -> TensorQuant {
    let min = min.min(0.0);
    let max = max.max(0.0);
    let scale = ((max - min) / 255.0).max(SCALE_FLOOR);
    let zero_point = (-128.0 - min / scale).round().clamp(-128.0, 127.0) as i32;
    TensorQuant { scale, zero_point }
}

/// Symmetric per-tensor INT8 weight quantization: scale = max|w| / 127,
/// zero point 0, values clamped to [-127, 127].
pub fn symmetric_quantize(values: &[f64]) -> (Vec<i8>, f64) {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = (max_abs / 127.0).max(SCALE_FLOOR);
    let q = values
        .iter()
        .map(|v| (v / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    (q, scale)
}

/// A symmetric INT8 matrix with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Int8Matrix {
    pub data: Vec<i8>,
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
}

impl Int8Matrix {
    pub fn from_f64(m: &Array2<f64>) -> Self {
        let values: Vec<f64> = m.iter().copied().collect();
        let (data, scale) = symmetric_quantize(&values);
        Self { data, rows: m.nrows(), cols: m.ncols(), scale }
    }

    pub fn dequantize(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.rows, self.cols),
            self.data.iter().map(|&q| q as f64 * self.scale).collect(),
        )
        .expect("shape matches storage")
    }
}

/// Quantized tensors for one layer (INT8 schemes). Biases stay in float.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantLayer {
    Lstm { w: Int8Matrix, u: Int8Matrix, b: Vec<f64> },
    Bilstm { fwd: Box<QuantLayer>, bwd: Box<QuantLayer> },
    Dropout,
    Dense { w: Int8Matrix, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantPayload {
    /// Unquantized baseline; inference is the plain float engine.
    Fp32(ModelParameters),
    /// Every parameter rounded to its nearest f16 value.
    Fp16(ModelParameters),
    /// INT8 weights. `act_params` holds one entry per activation site
    /// (model input, then each layer output) for the full scheme, and is
    /// None for dynamic-range quantization.
    Int8 { layers: Vec<QuantLayer>, act_params: Option<Vec<TensorQuant>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ModelConfig,
    pub scheme: QuantScheme,
    pub payload: QuantPayload,
}

/// Weights-only footprint under a scheme.
pub fn weights_only_size(config: &ModelConfig, scheme: QuantScheme) -> usize {
    count_params(config) * scheme.bytes_per_weight()
}

fn check_fp16_value(v: f64, name: &str) -> Result<f64> {
    let h = f16::from_f64(v);
    if h.is_infinite() || !v.is_finite() {
        return Err(Error::Fp16Overflow(format!("{name}: value {v} exceeds the f16 range")));
    }
    Ok(h.to_f64())
}

/// Rounds every parameter through f16. Values beyond 65504 in magnitude
/// are an error rather than a silent infinity.
pub fn quantize_fp16(config: &ModelConfig, params: &ModelParameters) -> Result<QuantizedModel> {
    let mut rounded = params.clone();
    let mut failure: Option<Error> = None;
    let mut index = 0usize;
    rounded.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            if failure.is_none() {
                match check_fp16_value(*v, &format!("parameter {index}")) {
                    Ok(r) => *v = r,
                    Err(e) => failure = Some(e),
                }
            }
            index += 1;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(QuantizedModel {
        config: config.clone(),
        scheme: QuantScheme::Fp16,
        payload: QuantPayload::Fp16(rounded),
    })
}

fn quantize_lstm_weights(w: &LstmWeights) -> QuantLayer {
    QuantLayer::Lstm {
        w: Int8Matrix::from_f64(&w.w),
        u: Int8Matrix::from_f64(&w.u),
        b: w.b.to_vec(),
    }
}

fn quantize_layers(params: &ModelParameters) -> Vec<QuantLayer> {
    params
        .layers
        .iter()
        .map(|layer| match layer {
            LayerParams::Lstm(w) => quantize_lstm_weights(w),
            LayerParams::Bilstm { fwd, bwd } => QuantLayer::Bilstm {
                fwd: Box::new(quantize_lstm_weights(fwd)),
                bwd: Box::new(quantize_lstm_weights(bwd)),
            },
            LayerParams::Dropout => QuantLayer::Dropout,
            LayerParams::Dense { w, b } => QuantLayer::Dense {
                w: Int8Matrix::from_f64(w),
                b: b.to_vec(),
            },
        })
        .collect()
}

/// Observes activation ranges of the float model on a calibration set.
/// Returns one affine parameter set per site: index 0 is the model input,
/// index i+1 the output of layer i.
pub fn calibrate_activations(
    config: &ModelConfig,
    params: &ModelParameters,
    calibration: &Array2<f64>,
) -> Result<Vec<TensorQuant>> {
    if calibration.nrows() == 0 {
        return Err(Error::EmptyCalibration);
    }
    let n_sites = config.layers.len() + 1;
    let mut mins = vec![f64::INFINITY; n_sites];
    let mut maxs = vec![f64::NEG_INFINITY; n_sites];
    let mut observe = |site: usize, values: &mut dyn Iterator<Item = f64>| {
        for v in values {
            mins[site] = mins[site].min(v);
            maxs[site] = maxs[site].max(v);
        }
    };
    let batch_size = 256;
    let mut start = 0;
    while start < calibration.nrows() {
        let end = (start + batch_size).min(calibration.nrows());
        let batch = calibration.slice(s![start..end, ..]).to_owned();
        let cache = crate::nn::model::model_forward(
            config,
            params,
            &batch,
            crate::nn::model::ForwardMode::Eval,
        )?;
        observe(0, &mut batch.iter().copied());
        for (idx, layer_cache) in cache.layer_caches.iter().enumerate() {
            match layer_cache {
                LayerCache::Lstm(c) => {
                    observe(idx + 1, &mut c.hiddens.iter().flat_map(|h| h.iter().copied()));
                }
                LayerCache::Bilstm(c) => {
                    observe(idx + 1, &mut c.fwd.hiddens.iter().flat_map(|h| h.iter().copied()));
                    observe(idx + 1, &mut c.bwd.hiddens.iter().flat_map(|h| h.iter().copied()));
                }
                LayerCache::Dropout(_) => {
                    // Identity in eval mode; copy the previous site later.
                }
                LayerCache::Dense { output, .. } => {
                    observe(idx + 1, &mut output.iter().copied());
                }
            }
        }
        start = end;
    }
    let mut sites = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        if mins[i].is_infinite() {
            // Dropout site: identical to its input site.
            let prev = *sites.last().expect("site 0 always observed");
            sites.push(prev);
        } else {
            sites.push(affine_params(mins[i], maxs[i]));
        }
    }
    Ok(sites)
}

/// Full INT8: static weights plus calibrated activation parameters.
pub fn quantize_int8_full(
    config: &ModelConfig,
    params: &ModelParameters,
    calibration: &Array2<f64>,
) -> Result<QuantizedModel> {
    let act = calibrate_activations(config, params, calibration)?;
    Ok(QuantizedModel {
        config: config.clone(),
        scheme: QuantScheme::Int8Full,
        payload: QuantPayload::Int8 { layers: quantize_layers(params), act_params: Some(act) },
    })
}

/// Dynamic-range quantization: static INT8 weights, activation scales
/// computed per tensor at inference time.
pub fn quantize_drq(config: &ModelConfig, params: &ModelParameters) -> QuantizedModel {
    QuantizedModel {
        config: config.clone(),
        scheme: QuantScheme::Drq,
        payload: QuantPayload::Int8 { layers: quantize_layers(params), act_params: None },
    }
}

pub fn quantize(
    config: &ModelConfig,
    params: &ModelParameters,
    scheme: QuantScheme,
    calibration: Option<&Array2<f64>>,
) -> Result<QuantizedModel> {
    match scheme {
        QuantScheme::Fp32 => Ok(QuantizedModel {
            config: config.clone(),
            scheme,
            payload: QuantPayload::Fp32(params.clone()),
        }),
        QuantScheme::Fp16 => quantize_fp16(config, params),
        QuantScheme::Int8Full => {
            let calib = calibration.ok_or(Error::EmptyCalibration)?;
            quantize_int8_full(config, params, calib)
        }
        QuantScheme::Drq => Ok(quantize_drq(config, params)),
    }
}

/// Quantizes an activation tensor to i8 codes under affine parameters.
fn quantize_activation(x: &Array2<f64>, qp: TensorQuant) -> Array2<i32> {
    x.mapv(|v| ((v / qp.scale).round() + qp.zero_point as f64).clamp(-128.0, 127.0) as i32)
}

/// Runtime per-tensor parameters for dynamic-range quantization.
fn dynamic_params(x: &Array2<f64>) -> TensorQuant {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in x {
        min = min.min(v);
        max = max.max(v);
    }
    if min.is_infinite() {
        return affine_params(0.0, 0.0);
    }
    affine_params(min, max)
}

/// Integer matmul: i32 accumulation of (q_x - zp) * q_w, rescaled to float.
fn int8_matmul(xq: &Array2<i32>, qp: TensorQuant, w: &Int8Matrix) -> Array2<f64> {
    assert_eq!(xq.ncols(), w.rows, "integer matmul shape mismatch");
    let n = xq.nrows();
    let mut out = Array2::zeros((n, w.cols));
    let rescale = qp.scale * w.scale;
    for i in 0..n {
        for k in 0..w.rows {
            let xv = xq[[i, k]] - qp.zero_point;
            if xv == 0 {
                continue;
            }
            let row = &w.data[k * w.cols..(k + 1) * w.cols];
            for (j, &wq) in row.iter().enumerate() {
                out[[i, j]] += (xv * wq as i32) as f64;
            }
        }
    }
    out.mapv_inplace(|acc| acc * rescale);
    out
}

struct ActSites<'a> {
    fixed: Option<&'a [TensorQuant]>,
}

impl ActSites<'_> {
    fn params_for(&self, site: usize, tensor: &Array2<f64>) -> TensorQuant {
        match self.fixed {
            Some(sites) => sites[site],
            None => dynamic_params(tensor),
        }
    }
}

fn int8_lstm_direction(
    inputs: &[Array2<f64>],
    w: &Int8Matrix,
    u: &Int8Matrix,
    b: &[f64],
    sites: &ActSites,
    input_site: usize,
    hidden_site: usize,
) -> Vec<Array2<f64>> {
    let n = inputs.first().map_or(0, |x| x.nrows());
    let units = u.rows;
    let mut h = Array2::zeros((n, units));
    let mut c: Array2<f64> = Array2::zeros((n, units));
    let mut hiddens = Vec::with_capacity(inputs.len());
    for x in inputs {
        let xq = quantize_activation(x, sites.params_for(input_site, x));
        let hq = quantize_activation(&h, sites.params_for(hidden_site, &h));
        let mut a = int8_matmul(&xq, sites.params_for(input_site, x), w)
            + int8_matmul(&hq, sites.params_for(hidden_site, &h), u);
        for mut row in a.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += b[j];
            }
        }
        // Gate math and the cell state stay in floating point.
        let mut h_next = Array2::zeros((n, units));
        for bi in 0..n {
            for k in 0..units {
                let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
                let i_g = sig(a[[bi, k]]);
                let f_g = sig(a[[bi, units + k]]);
                let g_g = a[[bi, 2 * units + k]].tanh();
                let o_g = sig(a[[bi, 3 * units + k]]);
                c[[bi, k]] = f_g * c[[bi, k]] + i_g * g_g;
                h_next[[bi, k]] = o_g * c[[bi, k]].tanh();
            }
        }
        h = h_next;
        hiddens.push(h.clone());
    }
    hiddens
}

/// Eval-mode forward pass under the model's quantization scheme.
pub fn quantized_forward(model: &QuantizedModel, batch: &Array2<f64>) -> Result<Array2<f64>> {
    match &model.payload {
        QuantPayload::Fp32(params) | QuantPayload::Fp16(params) => {
            predict(&model.config, params, batch)
        }
        QuantPayload::Int8 { layers, act_params } => {
            int8_forward(&model.config, layers, act_params.as_deref(), batch)
        }
    }
}

fn int8_forward(
    config: &ModelConfig,
    layers: &[QuantLayer],
    act_params: Option<&[TensorQuant]>,
    batch: &Array2<f64>,
) -> Result<Array2<f64>> {
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
    let sites = ActSites { fixed: act_params };
    let n = batch.nrows();
    let mut sequence: Option<Vec<Array2<f64>>> = Some(
        (0..config.input_len)
            .map(|t| {
                let mut x = Array2::zeros((n, config.input_width));
                for bi in 0..n {
                    for wi in 0..config.input_width {
                        x[[bi, wi]] = batch[[bi, t * config.input_width + wi]];
                    }
                }
                x
            })
            .collect(),
    );
    let mut vector: Option<Array2<f64>> = None;
    let collapse = |sequence: &mut Option<Vec<Array2<f64>>>, vector: &mut Option<Array2<f64>>| {
        if let Some(v) = vector.take() {
            v
        } else {
            sequence.take().expect("sequence present").pop().expect("non-empty")
        }
    };

    for (idx, (spec, layer)) in config.layers.iter().zip(layers).enumerate() {
        match (spec, layer) {
            (LayerSpec::Lstm { .. }, QuantLayer::Lstm { w, u, b }) => {
                let seq = sequence.as_ref().ok_or_else(|| Error::ShapeMismatch {
                    context: "recurrent layer after collapse".into(),
                })?;
                sequence = Some(int8_lstm_direction(seq, w, u, b, &sites, idx, idx + 1));
            }
            (LayerSpec::Bilstm { .. }, QuantLayer::Bilstm { fwd, bwd }) => {
                let seq = sequence.take().ok_or_else(|| Error::ShapeMismatch {
                    context: "recurrent layer after collapse".into(),
                })?;
                let (QuantLayer::Lstm { w: wf, u: uf, b: bf }, QuantLayer::Lstm { w: wb, u: ub, b: bb }) =
                    (fwd.as_ref(), bwd.as_ref())
                else {
                    return Err(Error::ShapeMismatch {
                        context: "malformed bidirectional quantized layer".into(),
                    });
                };
                let fwd_h = int8_lstm_direction(&seq, wf, uf, bf, &sites, idx, idx + 1);
                let reversed: Vec<Array2<f64>> = seq.iter().rev().cloned().collect();
                let bwd_h = int8_lstm_direction(&reversed, wb, ub, bb, &sites, idx, idx + 1);
                let steps = seq.len();
                let units = uf.rows;
                let outputs = (0..steps)
                    .map(|t| {
                        let mut out = Array2::zeros((n, 2 * units));
                        out.slice_mut(s![.., ..units]).assign(&fwd_h[t]);
                        out.slice_mut(s![.., units..]).assign(&bwd_h[steps - 1 - t]);
                        out
                    })
                    .collect();
                sequence = Some(outputs);
            }
            (LayerSpec::Dropout { .. }, QuantLayer::Dropout) => {
                vector = Some(collapse(&mut sequence, &mut vector));
            }
            (LayerSpec::Dense { activation, .. }, QuantLayer::Dense { w, b }) => {
                let x = collapse(&mut sequence, &mut vector);
                let xq = quantize_activation(&x, sites.params_for(idx, &x));
                let mut out = int8_matmul(&xq, sites.params_for(idx, &x), w);
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += b[j];
                    }
                }
                let out = match activation {
                    Activation::Relu => out.mapv(|v| v.max(0.0)),
                    Activation::Softmax => {
                        let mut sm = out;
                        for mut row in sm.rows_mut() {
                            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            row.mapv_inplace(|v| (v - max).exp());
                            let sum: f64 = row.sum();
                            row.mapv_inplace(|v| v / sum);
                        }
                        sm
                    }
                };
                vector = Some(out);
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "quantized layers disagree with the config".into(),
                })
            }
        }
    }
    vector.ok_or_else(|| Error::ShapeMismatch { context: "model has no dense head".into() })
}

pub const QUANT_MAGIC: &[u8; 8] = b"ECGFQNT\0";
pub const QUANT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct QuantHeader {
    scheme: QuantScheme,
    config: ModelConfig,
    act_params: Option<Vec<TensorQuant>>,
    /// Symmetric scales for weight matrices in canonical order (INT8 only).
    weight_scales: Vec<f64>,
}

fn push_int8_blocks(layer: &QuantLayer, scales: &mut Vec<f64>, blocks: &mut Vec<Vec<u8>>) {
    match layer {
        QuantLayer::Lstm { w, u, b } => {
            for m in [w, u] {
                scales.push(m.scale);
                blocks.push(m.data.iter().map(|&v| v as u8).collect());
            }
            let mut bias = Vec::with_capacity(b.len() * 4);
            for &v in b {
                bias.extend_from_slice(&(v as f32).to_le_bytes());
            }
            blocks.push(bias);
        }
        QuantLayer::Bilstm { fwd, bwd } => {
            push_int8_blocks(fwd, scales, blocks);
            push_int8_blocks(bwd, scales, blocks);
        }
        QuantLayer::Dropout => {}
        QuantLayer::Dense { w, b } => {
            scales.push(w.scale);
            blocks.push(w.data.iter().map(|&v| v as u8).collect());
            let mut bias = Vec::with_capacity(b.len() * 4);
            for &v in b {
                bias.extend_from_slice(&(v as f32).to_le_bytes());
            }
            blocks.push(bias);
        }
    }
}

pub fn save_quantized(path: &Path, model: &QuantizedModel) -> Result<()> {
    let mut scales = Vec::new();
    let mut blocks: Vec<Vec<u8>> = Vec::new();
    let mut act = None;
    match &model.payload {
        QuantPayload::Fp32(params) => {
            for (_, values) in params.named_tensors() {
                let mut buf = Vec::with_capacity(values.len() * 4);
                for v in values {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
                blocks.push(buf);
            }
        }
        QuantPayload::Fp16(params) => {
            for (_, values) in params.named_tensors() {
                let mut buf = Vec::with_capacity(values.len() * 2);
                for v in values {
                    buf.extend_from_slice(&f16::from_f64(v).to_le_bytes());
                }
                blocks.push(buf);
            }
        }
        QuantPayload::Int8 { layers, act_params } => {
            act = act_params.clone();
            for layer in layers {
                push_int8_blocks(layer, &mut scales, &mut blocks);
            }
        }
    }
    let header = QuantHeader {
        scheme: model.scheme,
        config: model.config.clone(),
        act_params: act,
        weight_scales: scales,
    };
    let json = serde_json::to_vec(&header)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(QUANT_MAGIC)?;
    file.write_all(&QUANT_VERSION.to_le_bytes())?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    for block in blocks {
        file.write_all(&block)?;
    }
    Ok(())
}

struct BlockReader<'a> {
    file: &'a mut std::fs::File,
}

impl BlockReader<'_> {
    fn bytes(&mut self, count: usize, name: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; count];
        self.file.read_exact(&mut buf).map_err(|_| {
            Error::ModelFile(format!("file truncated while reading block {name}"))
        })?;
        Ok(buf)
    }

    fn f32s(&mut self, count: usize, name: &str) -> Result<Vec<f64>> {
        Ok(self
            .bytes(count * 4, name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    fn f16s(&mut self, count: usize, name: &str) -> Result<Vec<f64>> {
        Ok(self
            .bytes(count * 2, name)?
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect())
    }

    fn i8s(&mut self, count: usize, name: &str) -> Result<Vec<i8>> {
        Ok(self.bytes(count, name)?.into_iter().map(|b| b as i8).collect())
    }
}

fn read_int8_lstm(
    reader: &mut BlockReader,
    scales: &mut std::slice::Iter<f64>,
    input: usize,
    units: usize,
    name: &str,
) -> Result<QuantLayer> {
    let mut matrix = |rows: usize, cols: usize, part: &str| -> Result<Int8Matrix> {
        let scale = *scales.next().ok_or_else(|| {
            Error::ModelFile(format!("missing weight scale for {name}.{part}"))
        })?;
        Ok(Int8Matrix {
            data: reader.i8s(rows * cols, &format!("{name}.{part}"))?,
            rows,
            cols,
            scale,
        })
    };
    let w = matrix(input, 4 * units, "w")?;
    let u = matrix(units, 4 * units, "u")?;
    let b = reader.f32s(4 * units, &format!("{name}.b"))?;
    Ok(QuantLayer::Lstm { w, u, b })
}

pub fn load_quantized(path: &Path) -> Result<QuantizedModel> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::ModelFile("file too short for magic".into()))?;
    if &magic != QUANT_MAGIC {
        return Err(Error::ModelFile("bad magic".into()));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)
        .map_err(|_| Error::ModelFile("file too short for version".into()))?;
    if u32::from_le_bytes(word) != QUANT_VERSION {
        return Err(Error::ModelFile("unsupported version".into()));
    }
    file.read_exact(&mut word)
        .map_err(|_| Error::ModelFile("file too short for header length".into()))?;
    let json_len = u32::from_le_bytes(word) as usize;
    let mut json = vec![0u8; json_len];
    file.read_exact(&mut json)
        .map_err(|_| Error::ModelFile("file truncated in header".into()))?;
    let header: QuantHeader =
        serde_json::from_slice(&json).map_err(|e| Error::ModelFile(format!("bad header: {e}")))?;

    let mut reader = BlockReader { file: &mut file };
    let config = header.config;
    let payload = match header.scheme {
        QuantScheme::Fp32 | QuantScheme::Fp16 => {
            let fp16 = header.scheme == QuantScheme::Fp16;
            let mut width = config.input_width;
            let mut layers = Vec::new();
            let tensor = |r: &mut BlockReader, count: usize, name: &str| -> Result<Vec<f64>> {
                if fp16 {
                    r.f16s(count, name)
                } else {
                    r.f32s(count, name)
                }
            };
            for (idx, layer) in config.layers.iter().enumerate() {
                match layer {
                    LayerSpec::Lstm { units } | LayerSpec::Bilstm { units } => {
                        let dirs: &[&str] = if matches!(layer, LayerSpec::Bilstm { .. }) {
                            &["fwd", "bwd"]
                        } else {
                            &["fwd"]
                        };
                        let mut parts = Vec::new();
                        for dir in dirs {
                            let w = tensor(&mut reader, width * 4 * units, &format!("layer{idx}.{dir}.w"))?;
                            let u = tensor(&mut reader, units * 4 * units, &format!("layer{idx}.{dir}.u"))?;
                            let b = tensor(&mut reader, 4 * units, &format!("layer{idx}.{dir}.b"))?;
                            parts.push(LstmWeights {
                                w: Array2::from_shape_vec((width, 4 * units), w)
                                    .map_err(|e| Error::ModelFile(e.to_string()))?,
                                u: Array2::from_shape_vec((*units, 4 * units), u)
                                    .map_err(|e| Error::ModelFile(e.to_string()))?,
                                b: ndarray::Array1::from_vec(b),
                            });
                        }
                        if parts.len() == 2 {
                            let bwd = parts.pop().unwrap();
                            let fwd = parts.pop().unwrap();
                            layers.push(LayerParams::Bilstm { fwd, bwd });
                            width = 2 * units;
                        } else {
                            layers.push(LayerParams::Lstm(parts.pop().unwrap()));
                            width = *units;
                        }
                    }
                    LayerSpec::Dropout { .. } => layers.push(LayerParams::Dropout),
                    LayerSpec::Dense { units, .. } => {
                        let w = tensor(&mut reader, width * units, &format!("layer{idx}.w"))?;
                        let b = tensor(&mut reader, *units, &format!("layer{idx}.b"))?;
                        layers.push(LayerParams::Dense {
                            w: Array2::from_shape_vec((width, *units), w)
                                .map_err(|e| Error::ModelFile(e.to_string()))?,
                            b: ndarray::Array1::from_vec(b),
                        });
                        width = *units;
                    }
                }
            }
            let params = ModelParameters { layers };
            if fp16 {
                QuantPayload::Fp16(params)
            } else {
                QuantPayload::Fp32(params)
            }
        }
        QuantScheme::Int8Full | QuantScheme::Drq => {
            let mut width = config.input_width;
            let mut layers = Vec::new();
            let mut scales = header.weight_scales.iter();
            for (idx, layer) in config.layers.iter().enumerate() {
                match layer {
                    LayerSpec::Lstm { units } => {
                        layers.push(read_int8_lstm(
                            &mut reader,
                            &mut scales,
                            width,
                            *units,
                            &format!("layer{idx}.fwd"),
                        )?);
                        width = *units;
                    }
                    LayerSpec::Bilstm { units } => {
                        let fwd = read_int8_lstm(&mut reader, &mut scales, width, *units, &format!("layer{idx}.fwd"))?;
                        let bwd = read_int8_lstm(&mut reader, &mut scales, width, *units, &format!("layer{idx}.bwd"))?;
                        layers.push(QuantLayer::Bilstm { fwd: Box::new(fwd), bwd: Box::new(bwd) });
                        width = 2 * units;
                    }
                    LayerSpec::Dropout { .. } => layers.push(QuantLayer::Dropout),
                    LayerSpec::Dense { units, .. } => {
                        let scale = *scales.next().ok_or_else(|| {
                            Error::ModelFile(format!("missing weight scale for layer{idx}.w"))
                        })?;
                        let data = reader.i8s(width * units, &format!("layer{idx}.w"))?;
                        let b = reader.f32s(*units, &format!("layer{idx}.b"))?;
                        layers.push(QuantLayer::Dense {
                            w: Int8Matrix { data, rows: width, cols: *units, scale },
                            b,
                        });
                        width = *units;
                    }
                }
            }
            QuantPayload::Int8 { layers, act_params: header.act_params }
        }
    };
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::ModelFile("trailing bytes after parameters".into()));
    }
    Ok(QuantizedModel { config, scheme: header.scheme, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ForwardMode;
    use crate::nn::Preset;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            layers: vec![
                LayerSpec::Bilstm { units: 4 },
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Dense { units: 8, activation: Activation::Relu },
                LayerSpec::Dense { units: 5, activation: Activation::Softmax },
            ],
            input_len: 6,
            input_width: 1,
        }
    }

    fn random_batch(n: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, cols), |_| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn fp16_rounds_point_one_to_the_frozen_constant() {
        let h = f16::from_f64(0.1);
        assert_eq!(h.to_f64(), 0.0999755859375);
    }

    #[test]
    fn fp16_overflow_is_an_error() {
        let config = ModelConfig {
            layers: vec![LayerSpec::Dense { units: 5, activation: Activation::Softmax }],
            input_len: 2,
            input_width: 1,
        };
        let mut params = ModelParameters::init(&config, 0);
        if let LayerParams::Dense { w, .. } = &mut params.layers[0] {
            w[[0, 0]] = 70_000.0;
        }
        assert!(matches!(quantize_fp16(&config, &params), Err(Error::Fp16Overflow(_))));
    }

    #[test]
    fn symmetric_unit_range_gives_scale_one_over_127() {
        let (q, scale) = symmetric_quantize(&[-1.0, 0.0, 1.0]);
        assert_eq!(scale, 1.0 / 127.0);
        assert_eq!(q, vec![-127, 0, 127]);
    }

    #[test]
    fn symmetric_zero_tensor_uses_the_scale_floor() {
        let (q, scale) = symmetric_quantize(&[0.0, 0.0]);
        assert_eq!(scale, SCALE_FLOOR);
        assert_eq!(q, vec![0, 0]);
    }

    #[test]
    fn affine_range_is_widened_to_include_zero() {
        let qp = affine_params(0.5, 2.0);
        // Effective range [0, 2]: zero must quantize exactly.
        let z = ((0.0 / qp.scale).round() as i32 + qp.zero_point).clamp(-128, 127);
        assert_eq!((z - qp.zero_point) as f64 * qp.scale, 0.0);
        assert_eq!(qp.zero_point, -128);
    }

    #[test]
    fn int8_matmul_matches_hand_computation() {
        // x = [2.0, -1.0], W = [[1.0], [0.5]]; exact in both domains.
        let w = Int8Matrix::from_f64(&Array2::from_shape_vec((2, 1), vec![1.0, 0.5]).unwrap());
        assert_eq!(w.scale, 1.0 / 127.0);
        assert_eq!(w.data, vec![127, 64]);
        let qp = affine_params(-2.0, 2.0);
        let x = Array2::from_shape_vec((1, 2), vec![2.0, -1.0]).unwrap();
        let xq = quantize_activation(&x, qp);
        let y = int8_matmul(&xq, qp, &w);
        // Hand: scale_x = 4/255, zp = -128 - (-2)/(4/255) = -0.5 -> round -1 (ties to even? -0.5 rounds to -1 in Rust away-from-zero)
        let sx = 4.0f64 / 255.0;
        let zp = (-128.0 - (-2.0) / sx).round() as i32;
        let q2 = ((2.0 / sx).round() as i32 + zp).clamp(-128, 127);
        let qm1 = ((-1.0 / sx).round() as i32 + zp).clamp(-128, 127);
        let acc = (q2 - zp) * 127 + (qm1 - zp) * 64;
        let expect = sx * (1.0 / 127.0) * acc as f64;
        assert!((y[[0, 0]] - expect).abs() < 1e-12);
        // And close to the float result 2*1 + (-1)*0.5 = 1.5.
        assert!((y[[0, 0]] - 1.5).abs() < 0.05);
    }

    #[test]
    fn fp32_scheme_is_bitwise_identical_to_the_float_engine() {
        let config = small_config();
        let params = ModelParameters::init(&config, 5);
        let model = quantize(&config, &params, QuantScheme::Fp32, None).unwrap();
        let batch = random_batch(9, 6, 6);
        let a = quantized_forward(&model, &batch).unwrap();
        let b = predict(&config, &params, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fp16_predictions_stay_close_to_float() {
        let config = small_config();
        let params = ModelParameters::init(&config, 7);
        let model = quantize(&config, &params, QuantScheme::Fp16, None).unwrap();
        let batch = random_batch(16, 6, 8);
        let a = quantized_forward(&model, &batch).unwrap();
        let b = predict(&config, &params, &batch).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-2, "{x} vs {y}");
        }
    }

    #[test]
    fn int8_full_mostly_agrees_with_float_argmax() {
        let config = small_config();
        let params = ModelParameters::init(&config, 11);
        let calib = random_batch(64, 6, 12);
        let model = quantize(&config, &params, QuantScheme::Int8Full, Some(&calib)).unwrap();
        let batch = random_batch(64, 6, 13);
        let q = quantized_forward(&model, &batch).unwrap();
        let f = predict(&config, &params, &batch).unwrap();
        let qa = crate::nn::model::argmax_classes(&q);
        let fa = crate::nn::model::argmax_classes(&f);
        let agree = qa.iter().zip(&fa).filter(|(a, b)| a == b).count();
        assert!(agree * 10 >= 64 * 9, "agreement {agree}/64");
    }

    #[test]
    fn drq_mostly_agrees_with_float_argmax() {
        let config = small_config();
        let params = ModelParameters::init(&config, 11);
        let model = quantize(&config, &params, QuantScheme::Drq, None).unwrap();
        let batch = random_batch(64, 6, 13);
        let q = quantized_forward(&model, &batch).unwrap();
        let f = predict(&config, &params, &batch).unwrap();
        let qa = crate::nn::model::argmax_classes(&q);
        let fa = crate::nn::model::argmax_classes(&f);
        let agree = qa.iter().zip(&fa).filter(|(a, b)| a == b).count();
        assert!(agree * 10 >= 64 * 9, "agreement {agree}/64");
    }

    #[test]
    fn empty_calibration_is_an_error() {
        let config = small_config();
        let params = ModelParameters::init(&config, 1);
        let empty = Array2::zeros((0, 6));
        assert!(matches!(
            calibrate_activations(&config, &params, &empty),
            Err(Error::EmptyCalibration)
        ));
    }

    #[test]
    fn calibration_covers_every_site() {
        let config = small_config();
        let params = ModelParameters::init(&config, 2);
        let calib = random_batch(32, 6, 3);
        let sites = calibrate_activations(&config, &params, &calib).unwrap();
        assert_eq!(sites.len(), config.layers.len() + 1);
        for qp in sites {
            assert!(qp.scale >= SCALE_FLOOR);
        }
    }

    #[test]
    fn weights_only_sizes_scale_by_storage_width() {
        let config = ModelConfig::preset(Preset::Tiny, 10, 0.25);
        assert_eq!(weights_only_size(&config, QuantScheme::Fp32), 83_973 * 4);
        assert_eq!(weights_only_size(&config, QuantScheme::Fp16), 83_973 * 2);
        assert_eq!(weights_only_size(&config, QuantScheme::Int8Full), 83_973);
        assert_eq!(weights_only_size(&config, QuantScheme::Drq), 83_973);
    }

    #[test]
    fn save_load_round_trips_every_scheme() {
        let config = small_config();
        let params = ModelParameters::init(&config, 21);
        let calib = random_batch(16, 6, 22);
        let dir = tempfile::tempdir().unwrap();
        for scheme in QuantScheme::ALL {
            let model = quantize(&config, &params, scheme, Some(&calib)).unwrap();
            let path = dir.path().join(format!("{}.bin", scheme.name()));
            save_quantized(&path, &model).unwrap();
            let loaded = load_quantized(&path).unwrap();
            assert_eq!(loaded.scheme, scheme);
            assert_eq!(loaded.config, model.config);
            // Behavior must survive the round trip exactly.
            let batch = random_batch(5, 6, 23);
            let a = quantized_forward(&model, &batch).unwrap();
            let b = quantized_forward(&loaded, &batch).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn int8_file_is_roughly_a_quarter_of_fp32() {
        let config = ModelConfig::preset(Preset::Tiny, 10, 0.25);
        let params = ModelParameters::init(&config, 31);
        let calib = random_batch(8, 10, 32);
        let dir = tempfile::tempdir().unwrap();
        let mut sizes = std::collections::HashMap::new();
        for scheme in QuantScheme::ALL {
            let model = quantize(&config, &params, scheme, Some(&calib)).unwrap();
            let path = dir.path().join(format!("{}.bin", scheme.name()));
            save_quantized(&path, &model).unwrap();
            sizes.insert(scheme, std::fs::metadata(&path).unwrap().len() as f64);
        }
        let fp32 = sizes[&QuantScheme::Fp32];
        assert!((fp32 / sizes[&QuantScheme::Fp16] - 2.0).abs() < 0.1);
        assert!((fp32 / sizes[&QuantScheme::Int8Full] - 4.0).abs() < 0.4);
        assert!((fp32 / sizes[&QuantScheme::Drq] - 4.0).abs() < 0.4);
    }

    #[test]
    fn drq_and_fp16_run_after_training_style_updates() {
        // Parameters touched by an optimizer step remain quantizable.
        let config = small_config();
        let mut params = ModelParameters::init(&config, 41);
        params.for_each_tensor_mut(|t| t.mapv_inplace(|v| (v + 1e-3) as f32 as f64));
        let batch = random_batch(4, 6, 42);
        let _ = crate::nn::model::model_forward(&config, &params, &batch, ForwardMode::Eval).unwrap();
        let drq = quantize_drq(&config, &params);
        assert!(quantized_forward(&drq, &batch).is_ok());
        let fp16 = quantize_fp16(&config, &params).unwrap();
        assert!(quantized_forward(&fp16, &batch).is_ok());
    }
}
