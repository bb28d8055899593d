//! Synthetic two-lead ECG records in WFDB format, with ground-truth beat,
//! P-wave, and T-wave annotations. Used for end-to-end pipeline testing
//! and as a stand-in corpus when the real archive is not available.

use std::f64::consts::PI;
use std::path::Path;

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::wfdb::{encode_adc_212, encode_annotations, Annotation, AnnotationList, HeartbeatClass};

/// Annotation code for P-wave peaks.
pub const CODE_PWAVE: u8 = 24;
/// Annotation code for T-wave peaks.
pub const CODE_TWAVE: u8 = 27;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_records: usize,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_records: 30,
            duration_s: 120.0,
            sampling_rate_hz: 360.0,
        }
    }
}

/// Ground truth for one generated record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRecord {
    pub name: String,
    /// (R-peak sample, class) per beat.
    pub beats: Vec<(usize, HeartbeatClass)>,
    pub p_peaks: Vec<usize>,
    pub t_peaks: Vec<usize>,
}

/// Morphology of one beat class: (center offset from R, amplitude in mV,
/// Gaussian width in samples) per wave, at 360 Hz.
struct Morphology {
    p: Option<(f64, f64, f64)>,
    q: (f64, f64, f64),
    r: (f64, f64, f64),
    s: (f64, f64, f64),
    t: (f64, f64, f64),
    /// Multiplier on the preceding RR interval (premature beats < 1).
    rr_factor: f64,
}

/// The five classes differ in wave timing, width, and amplitude. The
/// right-bundle-branch shape deliberately shares normal-beat timing and
/// differs mainly in Q/S depth, so interval features alone cannot
/// separate it from normal beats.
fn morphology(class: HeartbeatClass) -> Morphology {
    match class {
        HeartbeatClass::N => Morphology {
            p: Some((-55.0, 0.28, 7.0)),
            q: (-9.0, -0.12, 3.0),
            r: (0.0, 1.15, 4.0),
            s: (11.0, -0.18, 3.0),
            t: (95.0, 0.30, 30.0),
            rr_factor: 1.0,
        },
        HeartbeatClass::RBBB => Morphology {
            p: Some((-55.0, 0.28, 7.0)),
            q: (-9.0, -0.55, 4.0),
            r: (0.0, 1.15, 4.0),
            s: (11.0, -0.75, 4.0),
            t: (95.0, 0.30, 30.0),
            rr_factor: 1.0,
        },
        HeartbeatClass::LBBB => Morphology {
            p: Some((-78.0, 0.24, 8.0)),
            q: (-12.0, -0.10, 4.0),
            r: (0.0, 0.95, 8.0),
            s: (16.0, -0.30, 6.0),
            t: (120.0, -0.26, 32.0),
            rr_factor: 1.0,
        },
        HeartbeatClass::PVC => Morphology {
            p: None,
            q: (-14.0, -0.25, 5.0),
            r: (0.0, 1.40, 10.0),
            s: (18.0, -0.45, 6.0),
            t: (110.0, -0.32, 30.0),
            rr_factor: 0.72,
        },
        HeartbeatClass::PB => Morphology {
            p: None,
            q: (-6.0, -0.20, 2.5),
            r: (0.0, 1.30, 3.0),
            s: (8.0, -0.35, 2.5),
            t: (130.0, 0.28, 32.0),
            rr_factor: 1.25,
        },
    }
}

fn add_gaussian(signal: &mut [f64], center: f64, amp: f64, sigma: f64) {
    let lo = ((center - 5.0 * sigma).floor().max(0.0)) as usize;
    let hi = ((center + 5.0 * sigma).ceil() as usize).min(signal.len().saturating_sub(1));
    for (i, v) in signal.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = (i as f64 - center) / sigma;
        *v += amp * (-0.5 * d * d).exp();
    }
}

fn sample_class(rng: &mut ChaCha20Rng) -> HeartbeatClass {
    let r: f64 = rng.random();
    if r < 0.55 {
        HeartbeatClass::N
    } else if r < 0.67 {
        HeartbeatClass::LBBB
    } else if r < 0.79 {
        HeartbeatClass::RBBB
    } else if r < 0.90 {
        HeartbeatClass::PVC
    } else {
        HeartbeatClass::PB
    }
}

/// Generates one record's lead signals (mV) and ground truth.
fn generate_signal(
    name: &str,
    n_samples: usize,
    f_s: f64,
    rng: &mut ChaCha20Rng,
) -> (Vec<f64>, Vec<f64>, SynthRecord) {
    let mut clean = vec![0.0f64; n_samples];
    let mut beats = Vec::new();
    let mut p_peaks = Vec::new();
    let mut t_peaks = Vec::new();

    let scale = f_s / 360.0;
    let base_rr = 0.82 * f_s;
    let mut r = 0.6 * f_s;
    while r < n_samples as f64 - 0.8 * f_s {
        let class = sample_class(rng);
        let m = morphology(class);
        let r_pos = r + rng.random_range(-3.0..3.0);
        if let Some((off, amp, sigma)) = m.p {
            let center = r_pos + off * scale;
            add_gaussian(&mut clean, center, amp, sigma * scale);
            p_peaks.push(center.round() as usize);
        }
        for (off, amp, sigma) in [m.q, m.r, m.s] {
            add_gaussian(&mut clean, r_pos + off * scale, amp, sigma * scale);
        }
        let (t_off, t_amp, t_sigma) = m.t;
        let t_center = r_pos + t_off * scale;
        add_gaussian(&mut clean, t_center, t_amp, t_sigma * scale);
        t_peaks.push(t_center.round() as usize);
        beats.push((r_pos.round() as usize, class));

        let jitter = rng.random_range(0.92..1.08);
        r = r_pos + base_rr * m.rr_factor * jitter;
    }

    // Baseline drift, mains interference, and broadband noise.
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let mains_phase = rng.random_range(0.0..2.0 * PI);
    let mut lead0 = Vec::with_capacity(n_samples);
    let mut lead1 = Vec::with_capacity(n_samples);
    for (i, &c) in clean.iter().enumerate() {
        let t = i as f64 / f_s;
        let drift = 0.12 * (2.0 * PI * 0.9 * t + drift_phase).sin();
        let mains = 0.03 * (2.0 * PI * 50.0 * t + mains_phase).sin();
        lead0.push(c + drift + mains + rng.random_range(-0.02..0.02));
        lead1.push(0.55 * c - 0.6 * drift + rng.random_range(-0.02..0.02));
    }
    let record = SynthRecord {
        name: name.to_string(),
        beats,
        p_peaks,
        t_peaks,
    };
    (lead0, lead1, record)
}

const GAIN: f64 = 200.0;
const BASELINE: i32 = 1024;

fn to_adc(mv: f64) -> i32 {
    ((mv * GAIN).round() as i32 + BASELINE).clamp(-2048, 2047)
}

/// Writes one record's .hea, .dat, and .atr files.
pub fn write_record(
    dir: &Path,
    name: &str,
    f_s: f64,
    lead0: &[f64],
    lead1: &[f64],
    truth: &SynthRecord,
) -> Result<()> {
    let n = lead0.len();
    let header = format!(
        "{name} 2 {f_s} {n}\n\
         {name}.dat 212 {GAIN} 12 {BASELINE} {init0} 0 0 MLII\n\
         {name}.dat 212 {GAIN} 12 {BASELINE} {init1} 0 0 V5\n",
        init0 = to_adc(lead0[0]),
        init1 = to_adc(lead1[0]),
    );
    std::fs::write(dir.join(format!("{name}.hea")), header)?;

    let mut interleaved = Vec::with_capacity(2 * n);
    for i in 0..n {
        interleaved.push(to_adc(lead0[i]));
        interleaved.push(to_adc(lead1[i]));
    }
    std::fs::write(dir.join(format!("{name}.dat")), encode_adc_212(&interleaved))?;

    let mut entries: Vec<Annotation> = Vec::new();
    for &(pos, class) in &truth.beats {
        entries.push(Annotation {
            sample_index: pos,
            symbol_code: class.annotation_code(),
            channel: 0,
            class: Some(class),
        });
    }
    for &pos in &truth.p_peaks {
        entries.push(Annotation {
            sample_index: pos,
            symbol_code: CODE_PWAVE,
            channel: 0,
            class: None,
        });
    }
    for &pos in &truth.t_peaks {
        entries.push(Annotation {
            sample_index: pos,
            symbol_code: CODE_TWAVE,
            channel: 0,
            class: None,
        });
    }
    entries.sort_by_key(|a| a.sample_index);
    let bytes = encode_annotations(&AnnotationList { entries });
    std::fs::write(dir.join(format!("{name}.atr")), bytes)?;
    Ok(())
}

/// Generates a full corpus into `dir` and writes a ground-truth JSON
/// alongside the WFDB files. Record names follow the archive convention
/// of three-digit numbers starting at 100.
pub fn generate_dataset(dir: &Path, spec: &SynthSpec) -> Result<Vec<SynthRecord>> {
    std::fs::create_dir_all(dir)?;
    let mut n_samples = (spec.duration_s * spec.sampling_rate_hz).round() as usize;
    if n_samples % 2 == 1 {
        n_samples += 1;
    }
    let mut records = Vec::with_capacity(spec.n_records);
    for i in 0..spec.n_records {
        let name = format!("{}", 100 + i);
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
        let (lead0, lead1, truth) =
            generate_signal(&name, n_samples, spec.sampling_rate_hz, &mut rng);
        write_record(dir, &name, spec.sampling_rate_hz, &lead0, &lead1, &truth)?;
        records.push(truth);
    }
    let json = serde_json::to_string_pretty(&records)?;
    std::fs::write(dir.join("ground_truth.json"), json)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::{read_record, HeartbeatClass};

    #[test]
    fn generated_records_round_trip_through_the_reader() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_records: 2, duration_s: 30.0, ..SynthSpec::default() };
        let truths = generate_dataset(dir.path(), &spec).unwrap();
        assert_eq!(truths.len(), 2);
        assert_eq!(truths[0].name, "100");
        assert_eq!(truths[1].name, "101");

        let (signal, annotations) = read_record(dir.path(), "100", 0).unwrap();
        assert_eq!(signal.header.sampling_rate_hz, 360.0);
        assert_eq!(signal.samples.len(), signal.header.n_samples);
        // Beat annotations come back exactly as written.
        let beats: Vec<(usize, HeartbeatClass)> = annotations
            .selected_beats()
            .map(|a| (a.sample_index, a.class.unwrap()))
            .collect();
        assert_eq!(beats, truths[0].beats);
        // P and T markers survive too.
        let p: Vec<usize> = annotations
            .entries
            .iter()
            .filter(|a| a.symbol_code == CODE_PWAVE)
            .map(|a| a.sample_index)
            .collect();
        assert_eq!(p, truths[0].p_peaks);
    }

    #[test]
    fn signal_amplitudes_are_physiological() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_records: 1, duration_s: 20.0, ..SynthSpec::default() };
        let truths = generate_dataset(dir.path(), &spec).unwrap();
        let (signal, _) = read_record(dir.path(), "100", 0).unwrap();
        let max = signal.samples.iter().cloned().fold(f64::MIN, f64::max);
        let min = signal.samples.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max > 0.8 && max < 2.0, "max {max}");
        assert!(min < -0.1 && min > -2.0, "min {min}");
        // R peaks land close to the annotated positions.
        for &(r, _) in &truths[0].beats {
            let lo = r.saturating_sub(5);
            let hi = (r + 5).min(signal.samples.len() - 1);
            let peak = signal.samples[lo..=hi].iter().cloned().fold(f64::MIN, f64::max);
            assert!(peak > 0.6, "weak R at {r}: {peak}");
        }
    }

    #[test]
    fn every_class_appears_in_a_modest_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_records: 4, duration_s: 60.0, ..SynthSpec::default() };
        let truths = generate_dataset(dir.path(), &spec).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for t in &truths {
            for &(_, c) in &t.beats {
                seen.insert(c.label());
            }
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn generation_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_records: 1, duration_s: 15.0, ..SynthSpec::default() };
        generate_dataset(dir_a.path(), &spec).unwrap();
        generate_dataset(dir_b.path(), &spec).unwrap();
        let a = std::fs::read(dir_a.path().join("100.dat")).unwrap();
        let b = std::fs::read(dir_b.path().join("100.dat")).unwrap();
        assert_eq!(a, b);
    }
}
