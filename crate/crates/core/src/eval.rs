//! Classification metrics and the model/scheme benchmark grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{count_flops, paper_flops_reference, FlopConvention, ModelConfig, Preset, N_CLASSES};
use crate::quant::{weights_only_size, QuantScheme};
use crate::wfdb::HeartbeatClass;

/// Row-is-truth, column-is-prediction confusion matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

/// Per-class precision, recall, and F1. A metric whose denominator is
/// zero is reported as 0.0 with its `defined` flag cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
    pub support: usize,
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut counts = [[0usize; N_CLASSES]; N_CLASSES];
        for (truth, pred) in pairs {
            if truth >= N_CLASSES {
                return Err(Error::BadLabel { label: truth as i64 });
            }
            if pred >= N_CLASSES {
                return Err(Error::BadLabel { label: pred as i64 });
            }
            counts[truth][pred] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Trace over total.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: usize = (0..N_CLASSES).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    pub fn class_metrics(&self, class: usize) -> ClassMetrics {
        let tp = self.counts[class][class];
        let support: usize = self.counts[class].iter().sum();
        let predicted: usize = (0..N_CLASSES).map(|i| self.counts[i][class]).sum();
        let (precision, precision_defined) = if predicted == 0 {
            (0.0, false)
        } else {
            (tp as f64 / predicted as f64, true)
        };
        let (recall, recall_defined) = if support == 0 {
            (0.0, false)
        } else {
            (tp as f64 / support as f64, true)
        };
        let (f1, f1_defined) = if precision + recall == 0.0 {
            (0.0, precision_defined && recall_defined)
        } else {
            (2.0 * precision * recall / (precision + recall), true)
        };
        ClassMetrics { precision, recall, f1, precision_defined, recall_defined, f1_defined, support }
    }

    pub fn all_class_metrics(&self) -> Vec<ClassMetrics> {
        (0..N_CLASSES).map(|c| self.class_metrics(c)).collect()
    }

    /// Unweighted mean of the per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        let sum: f64 = self.all_class_metrics().iter().map(|m| m.f1).sum();
        sum / N_CLASSES as f64
    }
}

/// Full evaluation report for one model on one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub class_names: Vec<String>,
    pub n_samples: usize,
}

pub fn evaluate_predictions(truths: &[usize], preds: &[usize]) -> Result<EvalReport> {
    if truths.len() != preds.len() {
        return Err(Error::ShapeMismatch {
            context: format!("{} truths vs {} predictions", truths.len(), preds.len()),
        });
    }
    let confusion = ConfusionMatrix::from_pairs(truths.iter().copied().zip(preds.iter().copied()))?;
    Ok(EvalReport {
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
        per_class: confusion.all_class_metrics(),
        class_names: HeartbeatClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        n_samples: truths.len(),
        confusion,
    })
}

/// One row of the preset-by-scheme benchmark grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub preset: String,
    pub scheme: String,
    pub params: usize,
    pub flops_weights_only_macs: usize,
    pub flops_macs_per_step_x2: usize,
    pub flops_published_reference: usize,
    pub weights_only_bytes: usize,
    pub model_file_bytes: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

pub fn benchmark_row(
    preset: Preset,
    scheme: QuantScheme,
    config: &ModelConfig,
    model_file_bytes: u64,
    report: &EvalReport,
) -> BenchmarkRow {
    BenchmarkRow {
        preset: preset.name().to_string(),
        scheme: scheme.name().to_string(),
        params: crate::nn::count_params(config),
        flops_weights_only_macs: count_flops(config, FlopConvention::WeightsOnlyMacs),
        flops_macs_per_step_x2: count_flops(config, FlopConvention::MacsPerStepX2),
        flops_published_reference: paper_flops_reference(preset),
        weights_only_bytes: weights_only_size(config, scheme),
        model_file_bytes,
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
    }
}

pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::Io(e))?;
    Ok(())
}

pub fn write_benchmark_json(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let json = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// One arm of the feature ablation (same architecture, different inputs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationArm {
    pub feature_mode: String,
    pub input_len: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<AblationArm>,
}

impl AblationReport {
    pub fn arm(&self, mode: &str) -> Option<&AblationArm> {
        self.arms.iter().find(|a| a.feature_mode == mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_confusion_matrix() {
        // truths: 0,0,1,1,2 ; preds: 0,1,1,1,0
        let report = evaluate_predictions(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 0]).unwrap();
        assert_eq!(report.confusion.counts[0][0], 1);
        assert_eq!(report.confusion.counts[0][1], 1);
        assert_eq!(report.confusion.counts[1][1], 2);
        assert_eq!(report.confusion.counts[2][0], 1);
        assert!((report.accuracy - 3.0 / 5.0).abs() < 1e-12);
        let m0 = report.per_class[0];
        assert!((m0.precision - 0.5).abs() < 1e-12);
        assert!((m0.recall - 0.5).abs() < 1e-12);
        assert!((m0.f1 - 0.5).abs() < 1e-12);
        let m1 = report.per_class[1];
        assert!((m1.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m1.recall - 1.0).abs() < 1e-12);
        assert!((m1.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn absent_class_metrics_are_zero_and_flagged() {
        let report = evaluate_predictions(&[0, 0], &[0, 0]).unwrap();
        let m4 = report.per_class[4];
        assert_eq!(m4.precision, 0.0);
        assert_eq!(m4.recall, 0.0);
        assert_eq!(m4.f1, 0.0);
        assert!(!m4.precision_defined);
        assert!(!m4.recall_defined);
        assert!(!m4.f1_defined);
        assert_eq!(m4.support, 0);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truths = vec![0, 1, 2, 3, 4, 0, 1];
        let report = evaluate_predictions(&truths, &truths).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.macro_f1, 1.0);
    }

    #[test]
    fn out_of_range_class_is_rejected() {
        assert!(evaluate_predictions(&[9], &[0]).is_err());
        assert!(evaluate_predictions(&[0], &[9]).is_err());
    }

    #[test]
    fn benchmark_files_round_trip() {
        let report = evaluate_predictions(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]).unwrap();
        let config = ModelConfig::preset(Preset::Tiny, 10, 0.25);
        let row = benchmark_row(Preset::Tiny, QuantScheme::Fp32, &config, 1234, &report);
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("bench.csv");
        let json_path = dir.path().join("bench.json");
        write_benchmark_csv(&csv_path, std::slice::from_ref(&row)).unwrap();
        write_benchmark_json(&json_path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("preset,scheme,params,"));
        assert!(text.contains("T,fp32,83973,"));
        let back: Vec<BenchmarkRow> =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].params, 83_973);
    }

    proptest! {
        /// Accuracy equals the prevalence-weighted mean of per-class recall.
        #[test]
        fn accuracy_is_prevalence_weighted_recall(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)
        ) {
            let truths: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let report = evaluate_predictions(&truths, &preds).unwrap();
            let n = truths.len() as f64;
            let weighted: f64 = report
                .per_class
                .iter()
                .map(|m| m.recall * m.support as f64 / n)
                .sum();
            prop_assert!((report.accuracy - weighted).abs() < 1e-9);
        }

        /// F1 is the harmonic mean, so it sits between precision and recall.
        #[test]
        fn f1_between_precision_and_recall(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)
        ) {
            let truths: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let report = evaluate_predictions(&truths, &preds).unwrap();
            for m in &report.per_class {
                if m.f1_defined && m.precision_defined && m.recall_defined {
                    let lo = m.precision.min(m.recall) - 1e-12;
                    let hi = m.precision.max(m.recall) + 1e-12;
                    prop_assert!(m.f1 >= lo && m.f1 <= hi);
                }
            }
        }
    }
}
