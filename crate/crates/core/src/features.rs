//! Per-beat feature extraction: six time intervals and four
//! under-the-curve areas, early-fused and z-score normalized.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducials::BeatFiducials;
use crate::wfdb::{AnnotationList, HeartbeatClass};

/// Which feature subset feeds the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Six time intervals only.
    Six,
    /// Six time intervals plus the QRS-adjacent areas A_QR and A_RS.
    SixPlusTwoAreas,
    /// Full fusion: six time intervals and four areas.
    Ten,
}

impl FeatureMode {
    pub fn len(self) -> usize {
        match self {
            FeatureMode::Six => 6,
            FeatureMode::SixPlusTwoAreas => 8,
            FeatureMode::Ten => 10,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        const ALL: [&str; 10] = [
            "t_rr", "t_pr", "t_rt", "t_qr", "t_rs", "t_pt", "a_pq", "a_st", "a_qr", "a_rs",
        ];
        const SIX_TWO: [&str; 8] = [
            "t_rr", "t_pr", "t_rt", "t_qr", "t_rs", "t_pt", "a_qr", "a_rs",
        ];
        match self {
            FeatureMode::Six => &ALL[..6],
            FeatureMode::SixPlusTwoAreas => &SIX_TWO,
            FeatureMode::Ten => &ALL,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "six" => Ok(FeatureMode::Six),
            "six+2areas" => Ok(FeatureMode::SixPlusTwoAreas),
            "ten" => Ok(FeatureMode::Ten),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// How the RR interval is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RrDefinition {
    /// Between consecutive R peaks (default).
    #[default]
    RPeaks,
    /// Between consecutive T peaks.
    TPeaks,
}

/// Fused per-beat feature vector with its class label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub t_rr: f64,
    pub t_pr: f64,
    pub t_rt: f64,
    pub t_qr: f64,
    pub t_rs: f64,
    pub t_pt: f64,
    pub a_pq: f64,
    pub a_st: f64,
    pub a_qr: f64,
    pub a_rs: f64,
    pub label: HeartbeatClass,
}

impl FeatureVector {
    /// Fixed-order raw values for a feature mode.
    pub fn values(&self, mode: FeatureMode) -> Vec<f64> {
        let time = [self.t_rr, self.t_pr, self.t_rt, self.t_qr, self.t_rs, self.t_pt];
        match mode {
            FeatureMode::Six => time.to_vec(),
            FeatureMode::SixPlusTwoAreas => {
                let mut v = time.to_vec();
                v.extend([self.a_qr, self.a_rs]);
                v
            }
            FeatureMode::Ten => {
                let mut v = time.to_vec();
                v.extend([self.a_pq, self.a_st, self.a_qr, self.a_rs]);
                v
            }
        }
    }
}

/// A detected beat linked to its annotation label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBeat {
    pub fiducials: BeatFiducials,
    pub class: HeartbeatClass,
}

/// Beats dropped during assembly, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub no_matching_r: usize,
    pub missing_fiducial: usize,
    pub no_rr_neighbor: usize,
}

/// Links selected-class annotations to detected beats: each annotation
/// matches the nearest detected R within `tolerance`; when two annotations
/// compete for one R the nearer wins. Beats missing any fiducial are
/// dropped and counted.
pub fn assemble_beats(
    fiducials: &[BeatFiducials],
    annotations: &AnnotationList,
    tolerance: usize,
) -> (Vec<LabeledBeat>, DropCounts) {
    let mut drops = DropCounts::default();
    // best claim per detected beat: (distance, annotation index, class)
    let mut claims: Vec<Option<(usize, usize)>> = vec![None; fiducials.len()];
    let r_indices: Vec<usize> = fiducials.iter().map(|f| f.r).collect();

    let selected: Vec<(usize, HeartbeatClass)> = annotations
        .selected_beats()
        .map(|a| (a.sample_index, a.class.unwrap()))
        .collect();

    let mut unclaimed = 0usize;
    for (ai, &(sample, _)) in selected.iter().enumerate() {
        let pos = r_indices.partition_point(|&r| r < sample);
        let mut best: Option<(usize, usize)> = None;
        for cand in [pos.checked_sub(1), Some(pos)].into_iter().flatten() {
            if let Some(&r) = r_indices.get(cand) {
                let dist = r.abs_diff(sample);
                if dist <= tolerance && best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, cand));
                }
            }
        }
        match best {
            Some((dist, beat_idx)) => {
                match claims[beat_idx] {
                    Some((prev_dist, _)) if prev_dist <= dist => unclaimed += 1,
                    _ => {
                        if claims[beat_idx].is_some() {
                            unclaimed += 1;
                        }
                        claims[beat_idx] = Some((dist, ai));
                    }
                }
            }
            None => unclaimed += 1,
        }
    }
    drops.no_matching_r = unclaimed;

    let mut beats = Vec::new();
    for (beat_idx, claim) in claims.iter().enumerate() {
        if let Some((_, ai)) = claim {
            let f = fiducials[beat_idx];
            if f.p.is_some() && f.q.is_some() && f.s.is_some() && f.t.is_some() {
                beats.push(LabeledBeat {
                    fiducials: f,
                    class: selected[*ai].1,
                });
            } else {
                drops.missing_fiducial += 1;
            }
        }
    }
    (beats, drops)
}

/// Six time intervals in seconds. `rr_span` is the sample distance between
/// this beat's reference point and its neighbor's (R-to-R by default).
pub fn time_features(beat: &BeatFiducials, rr_span: usize, f_s: f64) -> [f64; 6] {
    let p = beat.p.expect("p required") as f64;
    let q = beat.q.expect("q required") as f64;
    let s = beat.s.expect("s required") as f64;
    let t = beat.t.expect("t required") as f64;
    let r = beat.r as f64;
    [
        rr_span as f64 / f_s,
        (r - p) / f_s,
        (t - r) / f_s,
        (r - q) / f_s,
        (s - r) / f_s,
        (t - p) / f_s,
    ]
}

/// Sum of |x| between two fiducials, inclusive of both endpoints.
pub fn area_between(signal: &[f64], start: usize, end: usize) -> Result<f64> {
    if start > end {
        return Err(Error::BadInterval { start, end });
    }
    let end = end.min(signal.len().saturating_sub(1));
    Ok(signal[start..=end].iter().map(|x| x.abs()).sum())
}

/// The four under-the-curve areas (P,Q), (S,T), (Q,R), (R,S) on the
/// denoised physical-unit signal.
pub fn area_features(signal: &[f64], beat: &BeatFiducials) -> Result<[f64; 4]> {
    let p = beat.p.expect("p required");
    let q = beat.q.expect("q required");
    let s = beat.s.expect("s required");
    let t = beat.t.expect("t required");
    Ok([
        area_between(signal, p, q)?,
        area_between(signal, s, t)?,
        area_between(signal, q, beat.r)?,
        area_between(signal, beat.r, s)?,
    ])
}

/// Builds feature vectors for a record's labeled beats. The RR interval
/// uses the preceding beat; boundary beats fall back to the following
/// interval, and beats with no neighbor at all are dropped.
pub fn extract_features(
    signal: &[f64],
    beats: &[LabeledBeat],
    f_s: f64,
    rr_def: RrDefinition,
    drops: &mut DropCounts,
) -> Result<Vec<FeatureVector>> {
    let mut out = Vec::with_capacity(beats.len());
    for (i, beat) in beats.iter().enumerate() {
        let anchor = |b: &LabeledBeat| match rr_def {
            RrDefinition::RPeaks => Some(b.fiducials.r),
            RrDefinition::TPeaks => b.fiducials.t,
        };
        let own = anchor(beat);
        let prev = i.checked_sub(1).and_then(|j| anchor(&beats[j]));
        let next = beats.get(i + 1).and_then(anchor);
        let rr_span = match (own, prev, next) {
            (Some(a), Some(p), _) if a > p => a - p,
            (Some(a), _, Some(n)) if n > a => n - a,
            _ => {
                drops.no_rr_neighbor += 1;
                continue;
            }
        };
        let time = time_features(&beat.fiducials, rr_span, f_s);
        let area = area_features(signal, &beat.fiducials)?;
        out.push(FeatureVector {
            t_rr: time[0],
            t_pr: time[1],
            t_rt: time[2],
            t_qr: time[3],
            t_rs: time[4],
            t_pt: time[5],
            a_pq: area[0],
            a_st: area[1],
            a_qr: area[2],
            a_rs: area[3],
            label: beat.class,
        });
    }
    Ok(out)
}

/// Per-feature mean and standard deviation, computed on the training split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mode: FeatureMode,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(train: &[FeatureVector], mode: FeatureMode) -> Result<Self> {
        let dim = mode.len();
        let n = train.len();
        if n == 0 {
            return Err(Error::Config("cannot fit stats on an empty split".into()));
        }
        let mut means = vec![0.0; dim];
        for fv in train {
            for (m, v) in means.iter_mut().zip(fv.values(mode)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut vars = vec![0.0; dim];
        for fv in train {
            for ((va, m), v) in vars.iter_mut().zip(&means).zip(fv.values(mode)) {
                *va += (v - m) * (v - m);
            }
        }
        let mut stds = vec![0.0; dim];
        for (i, va) in vars.iter().enumerate() {
            let std = (va / n as f64).sqrt();
            if std <= 0.0 {
                return Err(Error::ZeroStd {
                    feature: mode.feature_names()[i].to_string(),
                });
            }
            stds[i] = std;
        }
        Ok(Self { mode, means, stds })
    }

    /// Z-scores one feature vector into a fixed-order fused sequence.
    pub fn apply(&self, fv: &FeatureVector) -> Vec<f64> {
        fv.values(self.mode)
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// One serialized dataset row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRow {
    pub record: String,
    pub beat_index: usize,
    pub features: FeatureVector,
}

/// Writes dataset rows as CSV: record, beat#, the ten raw features, label.
pub fn write_dataset_csv(path: &Path, rows: &[DatasetRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "record", "beat", "t_rr", "t_pr", "t_rt", "t_qr", "t_rs", "t_pt", "a_pq", "a_st",
        "a_qr", "a_rs", "label",
    ])?;
    for row in rows {
        let f = &row.features;
        w.write_record([
            row.record.clone(),
            row.beat_index.to_string(),
            format!("{:.17e}", f.t_rr),
            format!("{:.17e}", f.t_pr),
            format!("{:.17e}", f.t_rt),
            format!("{:.17e}", f.t_qr),
            format!("{:.17e}", f.t_rs),
            format!("{:.17e}", f.t_pt),
            format!("{:.17e}", f.a_pq),
            format!("{:.17e}", f.a_st),
            format!("{:.17e}", f.a_qr),
            format!("{:.17e}", f.a_rs),
            f.label.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a dataset CSV written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Vec<DatasetRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for result in r.records() {
        let rec = result?;
        let get = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("bad number in dataset: {}", &rec[i])))
        };
        rows.push(DatasetRow {
            record: rec[0].to_string(),
            beat_index: rec[1].parse().map_err(|_| Error::Config("bad beat index".into()))?,
            features: FeatureVector {
                t_rr: get(2)?,
                t_pr: get(3)?,
                t_rt: get(4)?,
                t_qr: get(5)?,
                t_rs: get(6)?,
                t_pt: get(7)?,
                a_pq: get(8)?,
                a_st: get(9)?,
                a_qr: get(10)?,
                a_rs: get(11)?,
                label: HeartbeatClass::from_label(
                    rec[12].parse().map_err(|_| Error::Config("bad label".into()))?,
                )?,
            },
        });
    }
    Ok(rows)
}
