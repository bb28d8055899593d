//! PQRST fiducial detection: dual moving averages and Block of Interest
//! for R peaks, QRS suppression for P/T peaks, windowed argmin for Q/S
//! dips, and detection scoring against annotations.

use serde::{Deserialize, Serialize};

/// Centered moving-average window; the total width is 2*half_width+1
/// samples.
#[derive(Debug, Clone, Copy)]
pub struct MovingAverageSpec {
    pub half_width: usize,
}

/// Detector constants, all in samples at 360 Hz unless noted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Total width of the QRS "peak" moving average (100 ms).
    pub r_peak_window: usize,
    /// Total width of the heartbeat "wave" moving average (330 ms).
    pub r_wave_window: usize,
    /// Amplitude gate factor applied to the 95th percentile of y_p.
    pub threshold_factor: f64,
    /// Minimum BOI width for an R block (~40 ms).
    pub min_block_width: usize,
    /// Total width of the P-wave "peak" moving average (55 ms).
    pub pt_peak_window: usize,
    /// Total width of the QT "wave" moving average (110 ms).
    pub pt_wave_window: usize,
    /// Minimum BOI width for a P/T block.
    pub pt_min_block_width: usize,
    /// Samples zeroed before each R during QRS suppression.
    pub qrs_suppress_before: usize,
    /// Samples zeroed after each R during QRS suppression.
    pub qrs_suppress_after: usize,
    /// P peak lies within this distance range before the nearest R.
    pub p_distance_range: (usize, usize),
    /// T peak lies within this distance range after the nearest R.
    pub t_distance_range: (usize, usize),
    /// Maximum Q-to-R distance (55 ms).
    pub q_max_distance: usize,
    /// Maximum R-to-S distance (110 ms).
    pub s_max_distance: usize,
    /// Beat-matching tolerance for scoring (150 ms).
    pub match_tolerance: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            r_peak_window: 36,
            r_wave_window: 120,
            threshold_factor: 0.3,
            min_block_width: 14,
            pt_peak_window: 20,
            pt_wave_window: 40,
            pt_min_block_width: 5,
            qrs_suppress_before: 30,
            qrs_suppress_after: 60,
            p_distance_range: (20, 170),
            t_distance_range: (40, 210),
            q_max_distance: 20,
            s_max_distance: 40,
            match_tolerance: 54,
        }
    }
}

/// Half-open [start, end) intervals where the peak average exceeds the
/// wave average and the amplitude gate passes.
#[derive(Debug, Clone, Default)]
pub struct BoiMask {
    pub blocks: Vec<(usize, usize)>,
}

/// Per-beat fiducial sample indices. When present: p < q < r < s < t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub r: usize,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub s: Option<usize>,
    pub t: Option<usize>,
}

/// Sensitivity/precision of an index-list detection vs ground truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub sensitivity: f64,
    pub precision: f64,
    /// False when the denominator was zero and the metric was reported as 0.
    pub sensitivity_defined: bool,
    pub precision_defined: bool,
    pub match_tolerance: usize,
}

/// Centered mean over 2*half_width+1 samples; edges divide by the count
/// of in-range samples only.
pub fn moving_average(signal: &[f64], spec: MovingAverageSpec) -> Vec<f64> {
    let n = signal.len();
    let w = spec.half_width;
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    // Prefix sums keep this O(n) for the long windows used on full records.
    let mut prefix = vec![0.0; n + 1];
    for (i, &x) in signal.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(w);
        let hi = (i + w + 1).min(n);
        *o = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
    }
    out
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Maximal runs where `peak > wave` and `peak > gate`, with runs shorter
/// than `min_width` discarded.
fn blocks_of_interest(
    peak: &[f64],
    wave: &[f64],
    gate: f64,
    min_width: usize,
) -> BoiMask {
    let mut blocks = Vec::new();
    let mut start = None;
    for i in 0..peak.len() {
        let active = peak[i] > wave[i] && peak[i] > gate;
        match (active, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_width {
                    blocks.push((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if peak.len() - s >= min_width {
            blocks.push((s, peak.len()));
        }
    }
    BoiMask { blocks }
}

fn dual_average_blocks(
    envelope: &[f64],
    peak_window: usize,
    wave_window: usize,
    threshold_factor: f64,
    min_width: usize,
) -> BoiMask {
    let y_p = moving_average(envelope, MovingAverageSpec { half_width: peak_window / 2 });
    let y_w = moving_average(envelope, MovingAverageSpec { half_width: wave_window / 2 });
    let mut sorted = y_p.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gate = threshold_factor * percentile(&sorted, 0.95);
    blocks_of_interest(&y_p, &y_w, gate, min_width)
}

fn argmax_in(signal: &[f64], start: usize, end: usize) -> usize {
    let mut best = start;
    for i in start..end {
        if signal[i] > signal[best] {
            best = i;
        }
    }
    best
}

fn argmin_in(signal: &[f64], start: usize, end: usize) -> usize {
    let mut best = start;
    for i in start..end {
        if signal[i] < signal[best] {
            best = i;
        }
    }
    best
}

/// Detects R peaks on the denoised signal. The moving averages run on the
/// squared signal (energy envelope); the peak itself is the argmax of the
/// signed signal inside each block.
pub fn detect_r_peaks(denoised: &[f64], config: &DetectorConfig) -> (Vec<usize>, BoiMask) {
    if denoised.is_empty() {
        return (Vec::new(), BoiMask::default());
    }
    let envelope: Vec<f64> = denoised.iter().map(|x| x * x).collect();
    let mask = dual_average_blocks(
        &envelope,
        config.r_peak_window,
        config.r_wave_window,
        config.threshold_factor,
        config.min_block_width,
    );
    let peaks = mask
        .blocks
        .iter()
        .map(|&(s, e)| argmax_in(denoised, s, e))
        .collect();
    (peaks, mask)
}

/// Copy of `signal` with [r - before, r + after] zeroed around each R.
pub fn suppress_qrs(signal: &[f64], r_indices: &[usize], config: &DetectorConfig) -> Vec<f64> {
    let mut out = signal.to_vec();
    for &r in r_indices {
        let lo = r.saturating_sub(config.qrs_suppress_before);
        let hi = (r + config.qrs_suppress_after + 1).min(out.len());
        out[lo..hi].fill(0.0);
    }
    out
}

/// Detects P and T peaks on the QRS-suppressed signal.
pub fn detect_p_t_peaks(
    suppressed: &[f64],
    r_indices: &[usize],
    config: &DetectorConfig,
) -> (Vec<usize>, Vec<usize>) {
    if suppressed.is_empty() || r_indices.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let envelope: Vec<f64> = suppressed.iter().map(|x| x * x).collect();
    let mask = dual_average_blocks(
        &envelope,
        config.pt_peak_window,
        config.pt_wave_window,
        config.threshold_factor,
        config.pt_min_block_width,
    );
    let mut p_peaks = Vec::new();
    let mut t_peaks = Vec::new();
    let (p_lo, p_hi) = config.p_distance_range;
    let (t_lo, t_hi) = config.t_distance_range;
    let p_mid = (p_lo + p_hi) as f64 / 2.0;
    let t_mid = (t_lo + t_hi) as f64 / 2.0;

    for &(s, e) in &mask.blocks {
        let cand = argmax_in(suppressed, s, e);
        // Distance to the nearest following R (P hypothesis).
        let next_r = r_indices.partition_point(|&r| r <= cand);
        let dist_next = r_indices.get(next_r).map(|&r| r - cand);
        // Distance from the nearest preceding R (T hypothesis).
        let dist_prev = next_r.checked_sub(1).map(|i| cand - r_indices[i]);

        let p_ok = dist_next.is_some_and(|d| (p_lo..=p_hi).contains(&d));
        let t_ok = dist_prev.is_some_and(|d| (t_lo..=t_hi).contains(&d));
        match (p_ok, t_ok) {
            (true, false) => p_peaks.push(cand),
            (false, true) => t_peaks.push(cand),
            (true, true) => {
                // Assign to the class whose interval midpoint is closer.
                let dp = (dist_next.unwrap() as f64 - p_mid).abs();
                let dt = (dist_prev.unwrap() as f64 - t_mid).abs();
                if dp <= dt {
                    p_peaks.push(cand);
                } else {
                    t_peaks.push(cand);
                }
            }
            (false, false) => {}
        }
    }
    (p_peaks, t_peaks)
}

/// Q = argmin over [r-20, r); S = argmin over (r, r+40], edges clipped.
pub fn detect_q_s_dips(
    denoised: &[f64],
    r_indices: &[usize],
    config: &DetectorConfig,
) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let n = denoised.len();
    let mut q_dips = Vec::with_capacity(r_indices.len());
    let mut s_dips = Vec::with_capacity(r_indices.len());
    for &r in r_indices {
        let q_lo = r.saturating_sub(config.q_max_distance);
        q_dips.push(if q_lo < r {
            Some(argmin_in(denoised, q_lo, r))
        } else {
            None
        });
        let s_hi = (r + config.s_max_distance + 1).min(n);
        s_dips.push(if r + 1 < s_hi {
            Some(argmin_in(denoised, r + 1, s_hi))
        } else {
            None
        });
    }
    (q_dips, s_dips)
}

/// Full per-record chain: R peaks, QRS suppression, P/T peaks, Q/S dips,
/// assembled into per-beat fiducials.
pub fn detect_fiducials(denoised: &[f64], config: &DetectorConfig) -> Vec<BeatFiducials> {
    let (r_indices, _) = detect_r_peaks(denoised, config);
    let suppressed = suppress_qrs(denoised, &r_indices, config);
    let (p_peaks, t_peaks) = detect_p_t_peaks(&suppressed, &r_indices, config);
    let (q_dips, s_dips) = detect_q_s_dips(denoised, &r_indices, config);

    let (p_lo, p_hi) = config.p_distance_range;
    let (t_lo, t_hi) = config.t_distance_range;
    r_indices
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            // Nearest P candidate preceding this R within range.
            let p = p_peaks
                .iter()
                .copied()
                .filter(|&p| p < r && (p_lo..=p_hi).contains(&(r - p)))
                .max_by_key(|&p| p);
            let t = t_peaks
                .iter()
                .copied()
                .filter(|&t| t > r && (t_lo..=t_hi).contains(&(t - r)))
                .min_by_key(|&t| t);
            BeatFiducials {
                r,
                p,
                q: q_dips[i],
                s: s_dips[i],
                t,
            }
        })
        .collect()
}

/// Greedy one-to-one nearest matching within tolerance.
pub fn score_detection(predicted: &[usize], truth: &[usize], match_tolerance: usize) -> DetectionScore {
    // All candidate pairs within tolerance, accepted by increasing distance.
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    let mut j0 = 0usize;
    for (pi, &p) in predicted.iter().enumerate() {
        while j0 < truth.len() && truth[j0] + match_tolerance < p {
            j0 += 1;
        }
        for (tj, &t) in truth.iter().enumerate().skip(j0) {
            if t > p + match_tolerance {
                break;
            }
            pairs.push((p.abs_diff(t), pi, tj));
        }
    }
    pairs.sort();
    let mut pred_used = vec![false; predicted.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut tp = 0usize;
    for (_, pi, tj) in pairs {
        if !pred_used[pi] && !truth_used[tj] {
            pred_used[pi] = true;
            truth_used[tj] = true;
            tp += 1;
        }
    }
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    let sensitivity_defined = tp + fn_ > 0;
    let precision_defined = tp + fp > 0;
    DetectionScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        sensitivity: if sensitivity_defined {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        },
        precision: if precision_defined {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        },
        sensitivity_defined,
        precision_defined,
        match_tolerance,
    }
}
