//! WFDB ingestion: header parsing, format-212 signal decoding, binary
//! annotation decoding, beat inventory and train/test split.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-signal description from a WFDB header line.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub storage_format: u32,
    /// ADC units per millivolt.
    pub adc_gain: f64,
    /// ADC value corresponding to 0 mV.
    pub adc_baseline: i32,
    pub initial_value: i32,
    pub description: Option<String>,
}

/// Parsed WFDB record header (.hea).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate_hz: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

/// One lead of a record, converted to physical units (mV).
#[derive(Debug, Clone)]
pub struct SignalRecord {
    pub header: RecordHeader,
    pub lead_index: usize,
    pub samples: Vec<f64>,
}

/// The five heartbeat classes, with stable integer labels 0..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeartbeatClass {
    N = 0,
    PB = 1,
    LBBB = 2,
    RBBB = 3,
    PVC = 4,
}

impl HeartbeatClass {
    pub const ALL: [HeartbeatClass; 5] = [
        HeartbeatClass::N,
        HeartbeatClass::PB,
        HeartbeatClass::LBBB,
        HeartbeatClass::RBBB,
        HeartbeatClass::PVC,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: i64) -> Result<Self> {
        match label {
            0 => Ok(HeartbeatClass::N),
            1 => Ok(HeartbeatClass::PB),
            2 => Ok(HeartbeatClass::LBBB),
            3 => Ok(HeartbeatClass::RBBB),
            4 => Ok(HeartbeatClass::PVC),
            other => Err(Error::BadLabel { label: other }),
        }
    }

    /// MIT annotation code for this beat class.
    pub fn annotation_code(self) -> u8 {
        match self {
            HeartbeatClass::N => 1,
            HeartbeatClass::LBBB => 2,
            HeartbeatClass::RBBB => 3,
            HeartbeatClass::PVC => 5,
            HeartbeatClass::PB => 12,
        }
    }

    /// Maps an MIT beat annotation code to a selected class, if any.
    pub fn from_annotation_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(HeartbeatClass::N),
            2 => Some(HeartbeatClass::LBBB),
            3 => Some(HeartbeatClass::RBBB),
            5 => Some(HeartbeatClass::PVC),
            12 => Some(HeartbeatClass::PB),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeartbeatClass::N => "N",
            HeartbeatClass::PB => "PB",
            HeartbeatClass::LBBB => "LBBB",
            HeartbeatClass::RBBB => "RBBB",
            HeartbeatClass::PVC => "PVC",
        }
    }
}

/// One decoded annotation entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub sample_index: usize,
    pub symbol_code: u8,
    /// Annotation channel at the time this entry was emitted.
    pub channel: u8,
    pub class: Option<HeartbeatClass>,
}

/// Annotations decoded from a binary .atr stream.
#[derive(Debug, Clone, Default)]
pub struct AnnotationList {
    pub entries: Vec<Annotation>,
}

impl AnnotationList {
    /// Channel-0 beat annotations of the five selected classes.
    pub fn selected_beats(&self) -> impl Iterator<Item = &Annotation> {
        self.entries
            .iter()
            .filter(|a| a.channel == 0 && a.class.is_some())
    }
}

/// A beat reference in the labeled inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRef {
    pub record: String,
    pub sample_index: usize,
    pub class: HeartbeatClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    StratifiedBeat,
    ByRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_beats: Vec<BeatRef>,
    pub test_beats: Vec<BeatRef>,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

// Annotation pseudo-codes.
const CODE_EOF: u8 = 0;
const CODE_SKIP: u8 = 59;
const CODE_NUM: u8 = 60;
const CODE_SUB: u8 = 61;
const CODE_CHN: u8 = 62;
const CODE_AUX: u8 = 63;

/// Parses a WFDB header file.
///
/// First line: `name n_signals rate n_samples`; one line per signal after
/// that. Lines starting with `#` and blank lines are skipped. A missing
/// sampling rate is an error, not the WFDB default of 250.
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (line_no, first) = lines.next().ok_or_else(|| Error::HeaderParse {
        line: 1,
        reason: "empty header".into(),
    })?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::HeaderParse {
            line: line_no + 1,
            reason: format!(
                "record line needs name, n_signals, rate, n_samples; got {} fields",
                fields.len()
            ),
        });
    }
    // The record-name field may carry a /segments suffix; strip it.
    let record_name = fields[0].split('/').next().unwrap_or(fields[0]).to_string();
    let n_signals: usize = parse_field(fields[1], line_no + 1, "n_signals")?;
    if n_signals < 1 {
        return Err(Error::HeaderParse {
            line: line_no + 1,
            reason: "n_signals must be at least 1".into(),
        });
    }
    // Rate may carry counter frequency as rate/counter(base).
    let rate_field = fields[2].split('/').next().unwrap_or(fields[2]);
    let sampling_rate_hz: f64 = parse_field(rate_field, line_no + 1, "sampling rate")?;
    if sampling_rate_hz <= 0.0 {
        return Err(Error::HeaderParse {
            line: line_no + 1,
            reason: "sampling rate must be positive".into(),
        });
    }
    let n_samples: usize = parse_field(fields[3], line_no + 1, "n_samples")?;

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let (line_no, line) = lines.next().ok_or_else(|| Error::HeaderParse {
            line: text.lines().count(),
            reason: format!("expected {} signal lines", n_signals),
        })?;
        signals.push(parse_signal_line(line, line_no + 1)?);
    }
    Ok(RecordHeader {
        record_name,
        n_signals,
        sampling_rate_hz,
        n_samples,
        signals,
    })
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::HeaderParse {
        line,
        reason: format!("cannot parse {what} from {s:?}"),
    })
}

fn parse_signal_line(line: &str, line_no: usize) -> Result<SignalSpec> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(Error::HeaderParse {
            line: line_no,
            reason: "signal line needs at least file name and format".into(),
        });
    }
    // Format may carry xN/:skew/+offset modifiers.
    let fmt_str: String = fields[1]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let storage_format: u32 = parse_field(&fmt_str, line_no, "storage format")?;
    if storage_format != 212 {
        return Err(Error::UnsupportedFormat {
            format: storage_format,
        });
    }

    // Gain field: gain(baseline)/units, all parts optional after the number.
    let (adc_gain, paren_baseline) = if let Some(f) = fields.get(2) {
        let no_units = f.split('/').next().unwrap_or(f);
        if let Some(open) = no_units.find('(') {
            let close = no_units.find(')').ok_or_else(|| Error::HeaderParse {
                line: line_no,
                reason: "unterminated baseline parenthesis".into(),
            })?;
            let gain: f64 = parse_field(&no_units[..open], line_no, "adc gain")?;
            let baseline: i32 = parse_field(&no_units[open + 1..close], line_no, "baseline")?;
            (gain, Some(baseline))
        } else {
            (parse_field(no_units, line_no, "adc gain")?, None)
        }
    } else {
        (200.0, None)
    };
    if adc_gain <= 0.0 {
        return Err(Error::HeaderParse {
            line: line_no,
            reason: "adc gain must be positive".into(),
        });
    }
    let adc_zero: i32 = match fields.get(4) {
        Some(f) => parse_field(f, line_no, "adc zero")?,
        None => 0,
    };
    let initial_value: i32 = match fields.get(5) {
        Some(f) => parse_field(f, line_no, "initial value")?,
        None => adc_zero,
    };
    Ok(SignalSpec {
        file_name: fields[0].to_string(),
        storage_format,
        adc_gain,
        adc_baseline: paren_baseline.unwrap_or(adc_zero),
        initial_value,
        description: fields.get(8).map(|s| s.to_string()),
    })
}

/// Decodes raw format-212 adc samples. Two 12-bit two's-complement samples
/// per 3 bytes: s1 = ((b1 & 0x0F) << 8) | b0, s2 = ((b1 & 0xF0) << 4) | b2.
pub fn decode_adc_212(bytes: &[u8], total_samples: usize) -> Result<Vec<i32>> {
    let expected = total_samples.div_ceil(2) * 3;
    if bytes.len() < expected {
        return Err(Error::TruncatedSignal {
            expected,
            actual: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(total_samples);
    for chunk in bytes[..expected].chunks(3) {
        let s1 = (((chunk[1] & 0x0F) as i32) << 8) | chunk[0] as i32;
        let s2 = (((chunk[1] & 0xF0) as i32) << 4) | chunk[2] as i32;
        out.push(sign_extend_12(s1));
        if out.len() < total_samples {
            out.push(sign_extend_12(s2));
        }
    }
    Ok(out)
}

/// Packs adc samples into format-212 bytes (inverse of [`decode_adc_212`]).
pub fn encode_adc_212(samples: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len().div_ceil(2) * 3);
    for pair in samples.chunks(2) {
        let s1 = (pair[0] & 0xFFF) as u32;
        let s2 = (*pair.get(1).unwrap_or(&0) & 0xFFF) as u32;
        out.push((s1 & 0xFF) as u8);
        out.push(((s1 >> 8) as u8 & 0x0F) | ((s2 >> 8) as u8 & 0x0F) << 4);
        out.push((s2 & 0xFF) as u8);
    }
    out
}

fn sign_extend_12(v: i32) -> i32 {
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Decodes one lead of a format-212 signal file into physical units.
pub fn decode_signal_212(
    bytes: &[u8],
    header: &RecordHeader,
    lead_index: usize,
) -> Result<SignalRecord> {
    if lead_index >= header.n_signals {
        return Err(Error::Config(format!(
            "lead index {} out of range for {} signals",
            lead_index, header.n_signals
        )));
    }
    let total = header.n_samples * header.n_signals;
    let adc = decode_adc_212(bytes, total)?;
    let spec = &header.signals[lead_index];
    let samples = adc
        .iter()
        .skip(lead_index)
        .step_by(header.n_signals)
        .map(|&v| (v - spec.adc_baseline) as f64 / spec.adc_gain)
        .collect();
    Ok(SignalRecord {
        header: header.clone(),
        lead_index,
        samples,
    })
}

/// Parses an MIT-format binary annotation stream.
///
/// Each entry is a 2-byte little-endian word: code = word >> 10,
/// time increment = word & 0x3FF. SKIP carries a 4-byte interval
/// (high word first), AUX carries a payload padded to even length,
/// NUM/SUB consume no extra bytes, CHN switches the current channel.
/// A zero word terminates the stream.
pub fn parse_annotations(bytes: &[u8]) -> Result<AnnotationList> {
    let mut entries = Vec::new();
    let mut time: i64 = 0;
    let mut channel: u8 = 0;
    let mut offset = 0usize;

    while offset + 1 < bytes.len() {
        let word = u16::from_le_bytes([bytes[offset], bytes[offset + 1]]);
        let code = (word >> 10) as u8;
        let increment = (word & 0x3FF) as i64;
        offset += 2;

        match code {
            CODE_EOF if increment == 0 => return Ok(AnnotationList { entries }),
            CODE_SKIP => {
                if offset + 3 >= bytes.len() {
                    return Err(Error::AnnotationParse {
                        offset,
                        reason: "truncated SKIP interval".into(),
                    });
                }
                let high = u16::from_le_bytes([bytes[offset], bytes[offset + 1]]) as i64;
                let low = u16::from_le_bytes([bytes[offset + 2], bytes[offset + 3]]) as i64;
                time += (high << 16) | low;
                offset += 4;
            }
            CODE_NUM | CODE_SUB => {}
            CODE_CHN => channel = (increment & 0xFF) as u8,
            CODE_AUX => {
                let len = increment as usize;
                let padded = len + (len & 1);
                if offset + padded > bytes.len() {
                    return Err(Error::AnnotationParse {
                        offset,
                        reason: format!("dangling AUX payload of {len} bytes"),
                    });
                }
                offset += padded;
            }
            _ => {
                time += increment;
                entries.push(Annotation {
                    sample_index: time as usize,
                    symbol_code: code,
                    channel,
                    class: HeartbeatClass::from_annotation_code(code),
                });
            }
        }
    }
    // No explicit EOF word; accept what was decoded.
    Ok(AnnotationList { entries })
}

/// Encodes an annotation list back to the MIT binary format.
pub fn encode_annotations(list: &AnnotationList) -> Vec<u8> {
    let mut out = Vec::new();
    let mut time: i64 = 0;
    let mut channel: u8 = 0;
    for ann in &list.entries {
        if ann.channel != channel {
            let word = ((CODE_CHN as u16) << 10) | ann.channel as u16;
            out.extend_from_slice(&word.to_le_bytes());
            channel = ann.channel;
        }
        let mut delta = ann.sample_index as i64 - time;
        while delta > 0x3FF {
            // SKIP with absolute interval, then a zero-increment entry below.
            let word = (CODE_SKIP as u16) << 10;
            out.extend_from_slice(&word.to_le_bytes());
            out.extend_from_slice(&(((delta >> 16) & 0xFFFF) as u16).to_le_bytes());
            out.extend_from_slice(&((delta & 0xFFFF) as u16).to_le_bytes());
            time += delta;
            delta = 0;
        }
        let word = ((ann.symbol_code as u16) << 10) | (delta as u16 & 0x3FF);
        out.extend_from_slice(&word.to_le_bytes());
        time += delta;
    }
    out.extend_from_slice(&0u16.to_le_bytes());
    out
}

/// Reads one record (header, selected lead, annotations) from a data directory.
pub fn read_record(dir: &Path, name: &str, lead_index: usize) -> Result<(SignalRecord, AnnotationList)> {
    let hea = dir.join(format!("{name}.hea"));
    let text = std::fs::read_to_string(&hea).map_err(|_| Error::MissingArtifact {
        path: hea.display().to_string(),
        stage: "ingest (check --data-dir)".into(),
    })?;
    let header = parse_header(&text)?;
    let dat = std::fs::read(dir.join(&header.signals[0].file_name))?;
    let signal = decode_signal_212(&dat, &header, lead_index)?;
    let atr = std::fs::read(dir.join(format!("{name}.atr")))?;
    let annotations = parse_annotations(&atr)?;
    Ok((signal, annotations))
}

/// Lists record names in a data directory (every *.hea stem).
pub fn list_records(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "hea") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Histogram of beat annotation symbols across records, with the five
/// selected classes flagged.
pub fn class_distribution(lists: &[AnnotationList]) -> BTreeMap<u8, (usize, bool)> {
    let mut hist = BTreeMap::new();
    for list in lists {
        for ann in list.entries.iter().filter(|a| a.channel == 0) {
            let entry = hist.entry(ann.symbol_code).or_insert((0, false));
            entry.0 += 1;
            entry.1 = ann.class.is_some();
        }
    }
    hist
}

/// Splits the beat inventory into train/test at a 2:1 ratio.
pub fn split_dataset(
    beats: &[BeatRef],
    strategy: SplitStrategy,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    match strategy {
        SplitStrategy::StratifiedBeat => {
            for class in HeartbeatClass::ALL {
                let mut members: Vec<&BeatRef> =
                    beats.iter().filter(|b| b.class == class).collect();
                if members.is_empty() {
                    continue;
                }
                if members.len() < 3 {
                    return Err(Error::TooFewBeats {
                        class: class.name().into(),
                        count: members.len(),
                    });
                }
                members.sort_by(|a, b| (&a.record, a.sample_index).cmp(&(&b.record, b.sample_index)));
                members.shuffle(&mut rng);
                let cut = (members.len() * 2).div_ceil(3);
                train.extend(members[..cut].iter().map(|b| (*b).clone()));
                test.extend(members[cut..].iter().map(|b| (*b).clone()));
            }
        }
        SplitStrategy::ByRecord => {
            let mut records: Vec<String> = beats.iter().map(|b| b.record.clone()).collect();
            records.sort();
            records.dedup();
            records.shuffle(&mut rng);
            let cut = (records.len() * 2).div_ceil(3);
            let train_records: std::collections::BTreeSet<&String> =
                records[..cut].iter().collect();
            for beat in beats {
                if train_records.contains(&beat.record) {
                    train.push(beat.clone());
                } else {
                    test.push(beat.clone());
                }
            }
        }
    }
    Ok(DatasetSplit {
        train_beats: train,
        test_beats: test,
        strategy,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER_100: &str = "100 2 360 650000\n\
        100.dat 212 200 11 1024 995 -22131 0 MLII\n\
        100.dat 212 200 11 1024 1011 20052 0 V5\n";

    #[test]
    fn parses_mitbih_style_header() {
        let h = parse_header(HEADER_100).unwrap();
        assert_eq!(h.record_name, "100");
        assert_eq!(h.n_signals, 2);
        assert_eq!(h.sampling_rate_hz, 360.0);
        assert_eq!(h.n_samples, 650000);
        assert_eq!(h.signals[0].adc_gain, 200.0);
        assert_eq!(h.signals[0].adc_baseline, 1024);
        assert_eq!(h.signals[0].initial_value, 995);
    }

    #[test]
    fn header_with_parenthesized_baseline() {
        let text = "x 1 360 10\nx.dat 212 200(512)/mV 11 1024 0 0 0 lead\n";
        let h = parse_header(text).unwrap();
        assert_eq!(h.signals[0].adc_baseline, 512);
        assert_eq!(h.signals[0].adc_gain, 200.0);
    }

    #[test]
    fn missing_rate_is_an_error_not_a_default() {
        let text = "100 2\n100.dat 212 200 11 1024 995 0 0\n";
        assert!(matches!(
            parse_header(text),
            Err(Error::HeaderParse { .. })
        ));
    }

    #[test]
    fn format_16_is_rejected() {
        let text = "X 1 360 10\nX.dat 16 200 11 1024 0 0 0\n";
        assert!(matches!(
            parse_header(text),
            Err(Error::UnsupportedFormat { format: 16 })
        ));
    }

    #[test]
    fn decode_212_zero_bytes() {
        assert_eq!(decode_adc_212(&[0, 0, 0], 2).unwrap(), vec![0, 0]);
    }

    #[test]
    fn decode_212_twos_complement() {
        // 0xFFF in the first slot is -1.
        assert_eq!(decode_adc_212(&[0xFF, 0x0F, 0x00], 2).unwrap(), vec![-1, 0]);
    }

    #[test]
    fn decode_212_truncation_reports_counts() {
        match decode_adc_212(&[0, 0], 2) {
            Err(Error::TruncatedSignal { expected, actual }) => {
                assert_eq!(expected, 3);
                assert_eq!(actual, 2);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn physical_conversion_record_100_style() {
        let header = parse_header(HEADER_100).unwrap();
        // First frame: lead0 adc 995, lead1 adc 1011.
        let bytes = encode_adc_212(&[995, 1011]);
        let mut header1 = header.clone();
        header1.n_samples = 1;
        let sig = decode_signal_212(&bytes, &header1, 0).unwrap();
        assert!((sig.samples[0] - (-0.145)).abs() < 1e-12);
    }

    #[test]
    fn empty_annotation_stream() {
        let list = parse_annotations(&0u16.to_le_bytes()).unwrap();
        assert!(list.entries.is_empty());
    }

    #[test]
    fn single_normal_beat() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(((1u16) << 10) | 23).to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        let list = parse_annotations(&bytes).unwrap();
        assert_eq!(list.entries.len(), 1);
        assert_eq!(list.entries[0].sample_index, 23);
        assert_eq!(list.entries[0].class, Some(HeartbeatClass::N));
    }

    #[test]
    fn skip_interval_advances_time() {
        let list = AnnotationList {
            entries: vec![Annotation {
                sample_index: 100_000,
                symbol_code: 1,
                channel: 0,
                class: Some(HeartbeatClass::N),
            }],
        };
        let bytes = encode_annotations(&list);
        let back = parse_annotations(&bytes).unwrap();
        assert_eq!(back.entries, list.entries);
    }

    #[test]
    fn truncated_skip_errors_with_offset() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&((59u16) << 10).to_le_bytes());
        bytes.extend_from_slice(&[0u8, 0]);
        assert!(matches!(
            parse_annotations(&bytes),
            Err(Error::AnnotationParse { offset: 2, .. })
        ));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let mut beats = Vec::new();
        for class in [HeartbeatClass::N, HeartbeatClass::PVC, HeartbeatClass::PB] {
            for i in 0..3 {
                beats.push(BeatRef {
                    record: "r".into(),
                    sample_index: class.label() * 100 + i,
                    class,
                });
            }
        }
        let a = split_dataset(&beats, SplitStrategy::StratifiedBeat, 7).unwrap();
        let b = split_dataset(&beats, SplitStrategy::StratifiedBeat, 7).unwrap();
        assert_eq!(a.train_beats, b.train_beats);
        assert_eq!(a.test_beats, b.test_beats);
        assert_eq!(a.train_beats.len(), 6);
        assert_eq!(a.test_beats.len(), 3);
        for class in [HeartbeatClass::N, HeartbeatClass::PVC, HeartbeatClass::PB] {
            assert_eq!(a.train_beats.iter().filter(|x| x.class == class).count(), 2);
            assert_eq!(a.test_beats.iter().filter(|x| x.class == class).count(), 1);
        }
    }

    #[test]
    fn tiny_class_cannot_stratify() {
        let beats = vec![
            BeatRef {
                record: "r".into(),
                sample_index: 0,
                class: HeartbeatClass::N,
            };
            2
        ];
        assert!(matches!(
            split_dataset(&beats, SplitStrategy::StratifiedBeat, 0),
            Err(Error::TooFewBeats { .. })
        ));
    }

    proptest! {
        #[test]
        fn format_212_round_trip(samples in prop::collection::vec(-2048i32..=2047, 2..200)) {
            let mut samples = samples;
            if samples.len() % 2 == 1 {
                samples.pop();
            }
            let bytes = encode_adc_212(&samples);
            let back = decode_adc_212(&bytes, samples.len()).unwrap();
            prop_assert_eq!(back, samples.clone());
            // byte-level round trip the other way
            let bytes2 = encode_adc_212(&decode_adc_212(&bytes, samples.len()).unwrap());
            prop_assert_eq!(bytes2, bytes);
        }

        #[test]
        fn annotation_times_monotone(idx in prop::collection::vec(0usize..2_000_000, 1..50)) {
            let mut idx = idx;
            idx.sort();
            idx.dedup();
            let list = AnnotationList {
                entries: idx.iter().map(|&sample_index| Annotation {
                    sample_index,
                    symbol_code: 1,
                    channel: 0,
                    class: Some(HeartbeatClass::N),
                }).collect(),
            };
            let back = parse_annotations(&encode_annotations(&list)).unwrap();
            prop_assert_eq!(back.entries, list.entries);
        }

        #[test]
        fn stratified_ratio_within_band(counts in prop::collection::vec(3usize..200, 5)) {
            let mut beats = Vec::new();
            for (ci, &n) in counts.iter().enumerate() {
                let class = HeartbeatClass::from_label(ci as i64).unwrap();
                for i in 0..n {
                    beats.push(BeatRef { record: "r".into(), sample_index: ci * 1000 + i, class });
                }
            }
            let split = split_dataset(&beats, SplitStrategy::StratifiedBeat, 3).unwrap();
            for (ci, &n) in counts.iter().enumerate() {
                let class = HeartbeatClass::from_label(ci as i64).unwrap();
                let tr = split.train_beats.iter().filter(|b| b.class == class).count();
                let frac = tr as f64 / n as f64;
                prop_assert!((frac - 2.0 / 3.0).abs() <= 1.0 / n as f64 + 1e-12);
            }
            prop_assert_eq!(split.train_beats.len() + split.test_beats.len(), beats.len());
        }
    }
}
