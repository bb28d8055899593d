//! DB4 discrete wavelet transform with periodic extension, 9-level
//! decomposition, and selective reconstruction for ECG denoising.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Number of decomposition levels used by the denoiser.
pub const DENOISE_LEVELS: usize = 9;

/// Normalized central frequency of the DB4 wavelet.
pub const DB4_CENTRAL_FREQUENCY: f64 = 0.7;

/// The db4 scaling filter (8 taps, four vanishing moments), low-pass
/// reconstruction orientation. Sum is sqrt(2), norm is 1.
const DB4_SCALING: [f64; 8] = [
    0.230377813308855230,
    0.714846570552541500,
    0.630880767929590400,
    -0.027983769416983850,
    -0.187034811718881140,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
];

/// Analysis/synthesis filter pairs for an orthogonal wavelet.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub lowpass_dec: Vec<f64>,
    pub highpass_dec: Vec<f64>,
    pub lowpass_rec: Vec<f64>,
    pub highpass_rec: Vec<f64>,
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.lowpass_rec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass_rec.is_empty()
    }
}

/// Builds the standard 8-tap Daubechies-4 filter bank.
pub fn make_db4_filters() -> FilterBank {
    let h = DB4_SCALING.to_vec();
    let len = h.len();
    // Quadrature mirror: g[k] = (-1)^k h[len-1-k].
    let g: Vec<f64> = (0..len)
        .map(|k| if k % 2 == 0 { h[len - 1 - k] } else { -h[len - 1 - k] })
        .collect();
    let rev = |f: &[f64]| f.iter().rev().copied().collect::<Vec<f64>>();
    FilterBank {
        lowpass_dec: rev(&h),
        highpass_dec: rev(&g),
        lowpass_rec: h,
        highpass_rec: g,
    }
}

/// Pseudo-frequency rule f_n = k_c * f_s / 2^n.
#[derive(Debug, Clone, Copy)]
pub struct PseudoFrequencyRule {
    pub k_c: f64,
    pub f_s: f64,
}

impl PseudoFrequencyRule {
    pub fn new(k_c: f64, f_s: f64) -> Self {
        assert!(k_c > 0.0 && k_c < 1.0, "k_c must be in (0,1)");
        assert!(f_s > 0.0, "sampling rate must be positive");
        Self { k_c, f_s }
    }
}

/// Characteristic frequency associated with decomposition scale `level`.
pub fn pseudo_frequency(level: u32, rule: PseudoFrequencyRule) -> f64 {
    assert!(level >= 1, "level must be >= 1");
    rule.k_c * rule.f_s / f64::powi(2.0, level as i32)
}

/// Wavelet coefficients from a multi-level decomposition.
///
/// `details[0]` is D1 (finest), `details[levels-1]` is the coarsest detail;
/// `approximation` is the final approximation band. `pad_flags[l]` records
/// whether the input to level l+1 was padded by one repeated sample.
#[derive(Debug, Clone)]
pub struct WaveletCoeffs {
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
    pub pad_flags: Vec<bool>,
    pub input_len: usize,
}

impl WaveletCoeffs {
    pub fn levels(&self) -> usize {
        self.details.len()
    }
}

/// Which coefficient bands to retain during reconstruction.
#[derive(Debug, Clone)]
pub struct KeepSet {
    pub detail_levels: BTreeSet<usize>,
    pub approximation: bool,
}

impl KeepSet {
    pub fn all(levels: usize) -> Self {
        Self {
            detail_levels: (1..=levels).collect(),
            approximation: true,
        }
    }

    pub fn none() -> Self {
        Self {
            detail_levels: BTreeSet::new(),
            approximation: false,
        }
    }

    /// D4, D5, D6 and A9: the ECG denoising selection.
    pub fn denoise_default() -> Self {
        Self {
            detail_levels: [4, 5, 6].into_iter().collect(),
            approximation: true,
        }
    }
}

fn analysis_step(input: &[f64], filters: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let n = input.len();
    debug_assert!(n % 2 == 0);
    let half = n / 2;
    let h = &filters.lowpass_rec;
    let g = &filters.highpass_rec;
    let taps = h.len();
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for i in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for k in 0..taps {
            let x = input[(2 * i + k) % n];
            a += h[k] * x;
            d += g[k] * x;
        }
        approx[i] = a;
        detail[i] = d;
    }
    (approx, detail)
}

fn synthesis_step(approx: &[f64], detail: &[f64], filters: &FilterBank) -> Vec<f64> {
    let half = approx.len();
    let n = half * 2;
    let h = &filters.lowpass_rec;
    let g = &filters.highpass_rec;
    let taps = h.len();
    let mut out = vec![0.0; n];
    for i in 0..half {
        let a = approx[i];
        let d = detail[i];
        for k in 0..taps {
            out[(2 * i + k) % n] += a * h[k] + d * g[k];
        }
    }
    out
}

/// Cascade of convolve-and-downsample-by-2 with periodic extension.
/// Odd-length inputs are padded by repeating the final sample.
pub fn dwt_decompose(signal: &[f64], filters: &FilterBank, levels: usize) -> Result<WaveletCoeffs> {
    if signal.len() < 1 << levels {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            levels,
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut pad_flags = Vec::with_capacity(levels);
    let mut cur = signal.to_vec();
    for _ in 0..levels {
        let padded = cur.len() % 2 == 1;
        if padded {
            cur.push(*cur.last().unwrap());
        }
        pad_flags.push(padded);
        let (approx, detail) = analysis_step(&cur, filters);
        details.push(detail);
        cur = approx;
    }
    Ok(WaveletCoeffs {
        details,
        approximation: cur,
        pad_flags,
        input_len: signal.len(),
    })
}

/// Inverse cascade with coefficient bands outside `keep` zeroed.
pub fn reconstruct_selective(
    coeffs: &WaveletCoeffs,
    filters: &FilterBank,
    keep: &KeepSet,
) -> Result<Vec<f64>> {
    let levels = coeffs.levels();
    if let Some(&level) = keep.detail_levels.iter().max() {
        if level > levels {
            return Err(Error::BadLevel {
                level,
                depth: levels,
            });
        }
    }
    let mut cur = if keep.approximation {
        coeffs.approximation.clone()
    } else {
        vec![0.0; coeffs.approximation.len()]
    };
    for level in (1..=levels).rev() {
        let stored = &coeffs.details[level - 1];
        let detail: std::borrow::Cow<[f64]> = if keep.detail_levels.contains(&level) {
            stored.into()
        } else {
            vec![0.0; stored.len()].into()
        };
        cur = synthesis_step(&cur, &detail, filters);
        if coeffs.pad_flags[level - 1] {
            cur.pop();
        }
    }
    debug_assert_eq!(cur.len(), coeffs.input_len);
    Ok(cur)
}

/// Full record denoising: 9-level DB4 decomposition, keep D4-D6 and A9.
pub fn denoise(signal: &[f64], filters: &FilterBank) -> Result<Vec<f64>> {
    let coeffs = dwt_decompose(signal, filters, DENOISE_LEVELS)?;
    reconstruct_selective(&coeffs, filters, &KeepSet::denoise_default())
}
