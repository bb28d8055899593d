//! Staged pipeline orchestration. Each stage reads the previous stage's
//! artifacts from the output directory and writes its own, so stages can
//! be re-run independently from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_predictions, AblationArm, AblationReport, BenchmarkRow, EvalReport};
use crate::features::{
    assemble_beats, extract_features, read_dataset_csv, write_dataset_csv, DatasetRow, DropCounts,
    FeatureMode, NormalizationStats, RrDefinition,
};
use crate::fiducials::{detect_fiducials, score_detection, BeatFiducials, DetectorConfig, DetectionScore};
use crate::nn::io::{load_model, save_model};
use crate::nn::model::{argmax_classes, ModelParameters};
use crate::nn::train::{train, EpochMetrics, TrainSpec};
use crate::nn::{ModelConfig, Preset};
use crate::quant::{
    load_quantized, quantize, quantized_forward, save_quantized, QuantScheme, QuantizedModel,
};
use crate::synth::{CODE_PWAVE, CODE_TWAVE};
use crate::wavelet::{denoise, make_db4_filters};
use crate::wfdb::{
    list_records, read_record, split_dataset, BeatRef, SplitStrategy,
};

/// Everything needed to run the pipeline end to end. Written beside the
/// artifacts so a run is self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub lead_index: usize,
    pub feature_mode: FeatureMode,
    pub rr_definition: RrDefinition,
    pub split_strategy: SplitStrategy,
    pub split_seed: u64,
    pub train: TrainSpec,
}

impl PipelineConfig {
    pub fn new(data_dir: PathBuf, out_dir: PathBuf) -> Self {
        Self {
            data_dir,
            out_dir,
            lead_index: 0,
            feature_mode: FeatureMode::Ten,
            rr_definition: RrDefinition::RPeaks,
            split_strategy: SplitStrategy::StratifiedBeat,
            split_seed: 7,
            train: TrainSpec::default(),
        }
    }

    /// Persists the configuration next to the stage outputs.
    pub fn write_alongside(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(self.out_dir.join("config.json"), json)?;
        Ok(())
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.display().to_string(),
            stage: stage.to_string(),
        });
    }
    Ok(())
}

fn write_f64_bin(path: &Path, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn read_f64_bin(path: &Path, stage: &str) -> Result<Vec<f64>> {
    require(path, stage)?;
    let bytes = std::fs::read(path)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: Vec<String>,
    pub sampling_rate_hz: f64,
    pub total_beats: usize,
    pub class_counts: BTreeMap<String, usize>,
}

/// Stage 1: scan the data directory, decode every record, and summarize
/// the labeled beat inventory.
pub fn stage_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    cfg.write_alongside()?;
    let records = list_records(&cfg.data_dir)?;
    if records.is_empty() {
        return Err(Error::MissingArtifact {
            path: cfg.data_dir.display().to_string(),
            stage: "synth (or point --data-dir at a WFDB directory)".into(),
        });
    }
    let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_beats = 0;
    let mut rate = 0.0;
    for name in &records {
        let (signal, annotations) = read_record(&cfg.data_dir, name, cfg.lead_index)?;
        rate = signal.header.sampling_rate_hz;
        for beat in annotations.selected_beats() {
            let class = beat.class.expect("selected beats are classed");
            *class_counts.entry(class.name().to_string()).or_insert(0) += 1;
            total_beats += 1;
        }
    }
    let summary = IngestSummary {
        records,
        sampling_rate_hz: rate,
        total_beats,
        class_counts,
    };
    std::fs::write(
        cfg.out_dir.join("ingest.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseSummary {
    pub records: Vec<String>,
    /// Fraction of signal energy removed per record.
    pub energy_removed: BTreeMap<String, f64>,
}

/// Stage 2: nine-level DB4 decomposition keeping D4-D6 and A9, one
/// binary f64 file per record.
pub fn stage_denoise(cfg: &PipelineConfig) -> Result<DenoiseSummary> {
    let ingest_path = cfg.out_dir.join("ingest.json");
    require(&ingest_path, "ingest")?;
    let summary: IngestSummary = serde_json::from_str(&std::fs::read_to_string(&ingest_path)?)?;
    let denoised_dir = cfg.out_dir.join("denoised");
    std::fs::create_dir_all(&denoised_dir)?;
    let filters = make_db4_filters();
    let mut energy_removed = BTreeMap::new();
    for name in &summary.records {
        let (signal, _) = read_record(&cfg.data_dir, name, cfg.lead_index)?;
        let clean = denoise(&signal.samples, &filters)?;
        let e_in: f64 = signal.samples.iter().map(|x| x * x).sum();
        let e_out: f64 = clean.iter().map(|x| x * x).sum();
        energy_removed.insert(name.clone(), if e_in > 0.0 { 1.0 - e_out / e_in } else { 0.0 });
        write_f64_bin(&denoised_dir.join(format!("{name}.f64")), &clean)?;
    }
    let out = DenoiseSummary { records: summary.records, energy_removed };
    std::fs::write(
        cfg.out_dir.join("denoise.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectSummary {
    pub records: Vec<String>,
    pub r_scores: BTreeMap<String, DetectionScore>,
    pub p_scores: BTreeMap<String, DetectionScore>,
    pub t_scores: BTreeMap<String, DetectionScore>,
}

/// Stage 3: PQRST fiducial detection on the denoised signals, scored
/// against the reference annotations where markers exist.
pub fn stage_detect(cfg: &PipelineConfig) -> Result<DetectSummary> {
    let denoise_path = cfg.out_dir.join("denoise.json");
    require(&denoise_path, "denoise")?;
    let summary: DenoiseSummary = serde_json::from_str(&std::fs::read_to_string(&denoise_path)?)?;
    let fid_dir = cfg.out_dir.join("fiducials");
    std::fs::create_dir_all(&fid_dir)?;
    let detector = DetectorConfig::default();
    let mut r_scores = BTreeMap::new();
    let mut p_scores = BTreeMap::new();
    let mut t_scores = BTreeMap::new();
    for name in &summary.records {
        let clean = read_f64_bin(&cfg.out_dir.join("denoised").join(format!("{name}.f64")), "denoise")?;
        let fiducials = detect_fiducials(&clean, &detector);
        std::fs::write(
            fid_dir.join(format!("{name}.json")),
            serde_json::to_string(&fiducials)?,
        )?;
        let (_, annotations) = read_record(&cfg.data_dir, name, cfg.lead_index)?;
        let truth_r: Vec<usize> = annotations.selected_beats().map(|a| a.sample_index).collect();
        let pred_r: Vec<usize> = fiducials.iter().map(|f| f.r).collect();
        r_scores.insert(name.clone(), score_detection(&pred_r, &truth_r, detector.match_tolerance));
        let truth_p: Vec<usize> = annotations
            .entries
            .iter()
            .filter(|a| a.symbol_code == CODE_PWAVE)
            .map(|a| a.sample_index)
            .collect();
        if !truth_p.is_empty() {
            let pred_p: Vec<usize> = fiducials.iter().filter_map(|f| f.p).collect();
            p_scores.insert(name.clone(), score_detection(&pred_p, &truth_p, detector.match_tolerance));
        }
        let truth_t: Vec<usize> = annotations
            .entries
            .iter()
            .filter(|a| a.symbol_code == CODE_TWAVE)
            .map(|a| a.sample_index)
            .collect();
        if !truth_t.is_empty() {
            let pred_t: Vec<usize> = fiducials.iter().filter_map(|f| f.t).collect();
            t_scores.insert(name.clone(), score_detection(&pred_t, &truth_t, detector.match_tolerance));
        }
    }
    let out = DetectSummary { records: summary.records, r_scores, p_scores, t_scores };
    std::fs::write(
        cfg.out_dir.join("detect.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub drops: DropCounts,
    pub class_counts: BTreeMap<String, usize>,
}

/// Stage 4: fuse time and area features per labeled beat, then split
/// 2:1 into train and test CSVs.
pub fn stage_features(cfg: &PipelineConfig) -> Result<FeatureSummary> {
    let detect_path = cfg.out_dir.join("detect.json");
    require(&detect_path, "detect")?;
    let summary: DetectSummary = serde_json::from_str(&std::fs::read_to_string(&detect_path)?)?;
    let detector = DetectorConfig::default();
    let mut rows: Vec<DatasetRow> = Vec::new();
    let mut drops = DropCounts::default();
    let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
    for name in &summary.records {
        let clean = read_f64_bin(&cfg.out_dir.join("denoised").join(format!("{name}.f64")), "denoise")?;
        let fid_path = cfg.out_dir.join("fiducials").join(format!("{name}.json"));
        require(&fid_path, "detect")?;
        let fiducials: Vec<BeatFiducials> =
            serde_json::from_str(&std::fs::read_to_string(&fid_path)?)?;
        let (signal, annotations) = read_record(&cfg.data_dir, name, cfg.lead_index)?;
        let (beats, mut record_drops) = assemble_beats(&fiducials, &annotations, detector.match_tolerance);
        let features = extract_features(
            &clean,
            &beats,
            signal.header.sampling_rate_hz,
            cfg.rr_definition,
            &mut record_drops,
        )?;
        drops.no_matching_r += record_drops.no_matching_r;
        drops.missing_fiducial += record_drops.missing_fiducial;
        drops.no_rr_neighbor += record_drops.no_rr_neighbor;
        for (i, fv) in features.into_iter().enumerate() {
            *class_counts.entry(fv.label.name().to_string()).or_insert(0) += 1;
            rows.push(DatasetRow {
                record: name.clone(),
                beat_index: i,
                features: fv,
            });
        }
    }
    write_dataset_csv(&cfg.out_dir.join("dataset.csv"), &rows)?;

    // 2:1 split over the assembled beats.
    let refs: Vec<BeatRef> = rows
        .iter()
        .map(|r| BeatRef {
            record: r.record.clone(),
            sample_index: r.beat_index,
            class: r.features.label,
        })
        .collect();
    let split = split_dataset(&refs, cfg.split_strategy, cfg.split_seed)?;
    let key = |r: &BeatRef| (r.record.clone(), r.sample_index);
    let by_key: BTreeMap<(String, usize), &DatasetRow> =
        rows.iter().map(|r| ((r.record.clone(), r.beat_index), r)).collect();
    let collect = |beats: &[BeatRef]| -> Vec<DatasetRow> {
        let mut out: Vec<DatasetRow> =
            beats.iter().map(|b| (*by_key[&key(b)]).clone()).collect();
        out.sort_by(|a, b| (&a.record, a.beat_index).cmp(&(&b.record, b.beat_index)));
        out
    };
    let train_rows = collect(&split.train_beats);
    let test_rows = collect(&split.test_beats);
    write_dataset_csv(&cfg.out_dir.join("train.csv"), &train_rows)?;
    write_dataset_csv(&cfg.out_dir.join("test.csv"), &test_rows)?;

    let out = FeatureSummary {
        n_rows: rows.len(),
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        drops,
        class_counts,
    };
    std::fs::write(
        cfg.out_dir.join("features.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    Ok(out)
}

/// Normalized model inputs for one split.
pub struct SplitMatrix {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

fn rows_to_matrix(rows: &[DatasetRow], stats: &NormalizationStats) -> SplitMatrix {
    let dim = stats.means.len();
    let mut inputs = Array2::zeros((rows.len(), dim));
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in stats.apply(&row.features).into_iter().enumerate() {
            inputs[[i, j]] = v;
        }
        labels.push(row.features.label.label());
    }
    SplitMatrix { inputs, labels }
}

/// Loads train/test CSVs and normalizes with statistics fit on train.
pub fn load_split(
    out_dir: &Path,
    mode: FeatureMode,
) -> Result<(SplitMatrix, SplitMatrix, NormalizationStats)> {
    let train_path = out_dir.join("train.csv");
    let test_path = out_dir.join("test.csv");
    require(&train_path, "features")?;
    require(&test_path, "features")?;
    let train_rows = read_dataset_csv(&train_path)?;
    let test_rows = read_dataset_csv(&test_path)?;
    let train_features: Vec<_> = train_rows.iter().map(|r| r.features).collect();
    let stats = NormalizationStats::fit(&train_features, mode)?;
    Ok((
        rows_to_matrix(&train_rows, &stats),
        rows_to_matrix(&test_rows, &stats),
        stats,
    ))
}

/// A trained model's identity in the artifact directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTag {
    pub arch: String,
    pub mode: FeatureMode,
}

impl ModelTag {
    pub fn file_stem(&self) -> String {
        let mode = match self.mode {
            FeatureMode::Six => "six",
            FeatureMode::SixPlusTwoAreas => "six2a",
            FeatureMode::Ten => "ten",
        };
        format!("model_{}_{}", self.arch, mode)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub tag: ModelTag,
    pub history: Vec<EpochMetrics>,
    pub model_path: PathBuf,
}

/// Stage 5: train one architecture on the feature split and save the
/// model, its normalization statistics, and the epoch history.
pub fn stage_train(
    cfg: &PipelineConfig,
    arch_name: &str,
    config: &ModelConfig,
    mode: FeatureMode,
    spec: &TrainSpec,
) -> Result<TrainSummary> {
    let (train_split, test_split, stats) = load_split(&cfg.out_dir, mode)?;
    let (params, history) = train(
        config,
        &train_split.inputs,
        &train_split.labels,
        &test_split.inputs,
        &test_split.labels,
        spec,
    )?;
    let tag = ModelTag { arch: arch_name.to_string(), mode };
    let model_path = cfg.out_dir.join(format!("{}.bin", tag.file_stem()));
    save_model(&model_path, config, &params)?;
    std::fs::write(
        cfg.out_dir.join(format!("{}.norm.json", tag.file_stem())),
        serde_json::to_string_pretty(&stats)?,
    )?;
    let summary = TrainSummary { tag: tag.clone(), history, model_path };
    std::fs::write(
        cfg.out_dir.join(format!("{}.history.json", tag.file_stem())),
        serde_json::to_string_pretty(&summary.history)?,
    )?;
    Ok(summary)
}

pub fn load_trained(
    cfg: &PipelineConfig,
    tag: &ModelTag,
) -> Result<(ModelConfig, ModelParameters, NormalizationStats)> {
    let model_path = cfg.out_dir.join(format!("{}.bin", tag.file_stem()));
    require(&model_path, "train")?;
    let (config, params) = load_model(&model_path)?;
    let norm_path = cfg.out_dir.join(format!("{}.norm.json", tag.file_stem()));
    require(&norm_path, "train")?;
    let stats: NormalizationStats = serde_json::from_str(&std::fs::read_to_string(&norm_path)?)?;
    Ok((config, params, stats))
}

/// Calibration rows for full INT8: up to 512 training beats.
pub const CALIBRATION_BEATS: usize = 512;

/// Stage 6: quantize a trained model under one scheme.
pub fn stage_quantize(
    cfg: &PipelineConfig,
    tag: &ModelTag,
    scheme: QuantScheme,
) -> Result<PathBuf> {
    let (config, params, stats) = load_trained(cfg, tag)?;
    let calibration = if scheme == QuantScheme::Int8Full {
        let (train_split, _, _) = load_split(&cfg.out_dir, stats.mode)?;
        let n = train_split.inputs.nrows().min(CALIBRATION_BEATS);
        Some(train_split.inputs.slice(ndarray::s![..n, ..]).to_owned())
    } else {
        None
    };
    let model = quantize(&config, &params, scheme, calibration.as_ref())?;
    let path = cfg
        .out_dir
        .join(format!("{}.{}.qbin", tag.file_stem(), scheme.name()));
    save_quantized(&path, &model)?;
    Ok(path)
}

fn batched_predict(model: &QuantizedModel, inputs: &Array2<f64>) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(inputs.nrows());
    let mut start = 0;
    while start < inputs.nrows() {
        let end = (start + 256).min(inputs.nrows());
        let batch = inputs.slice(ndarray::s![start..end, ..]).to_owned();
        let probs = quantized_forward(model, &batch)?;
        preds.extend(argmax_classes(&probs));
        start = end;
    }
    Ok(preds)
}

/// Stage 7: evaluate a model (optionally quantized) on the test split.
pub fn stage_eval(
    cfg: &PipelineConfig,
    tag: &ModelTag,
    scheme: QuantScheme,
) -> Result<EvalReport> {
    let model = if scheme == QuantScheme::Fp32 {
        let (config, params, _) = load_trained(cfg, tag)?;
        QuantizedModel {
            config: config.clone(),
            scheme,
            payload: crate::quant::QuantPayload::Fp32(params),
        }
    } else {
        let path = cfg
            .out_dir
            .join(format!("{}.{}.qbin", tag.file_stem(), scheme.name()));
        require(&path, "quantize")?;
        load_quantized(&path)?
    };
    let (_, _, stats) = load_trained(cfg, tag)?;
    let (_, test_split, _) = load_split(&cfg.out_dir, stats.mode)?;
    let preds = batched_predict(&model, &test_split.inputs)?;
    let report = evaluate_predictions(&test_split.labels, &preds)?;
    std::fs::write(
        cfg.out_dir
            .join(format!("{}.{}.eval.json", tag.file_stem(), scheme.name())),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

/// Stage 8: the full preset-by-scheme grid. Trains any missing preset
/// model, quantizes it under every scheme, and evaluates each variant.
pub fn stage_benchmark(cfg: &PipelineConfig, spec: &TrainSpec) -> Result<Vec<BenchmarkRow>> {
    let mode = cfg.feature_mode;
    let mut rows = Vec::with_capacity(16);
    for preset in Preset::ALL {
        let tag = ModelTag { arch: preset.name().to_string(), mode };
        let config = ModelConfig::preset(preset, mode.len(), 0.25);
        if !cfg.out_dir.join(format!("{}.bin", tag.file_stem())).exists() {
            stage_train(cfg, preset.name(), &config, mode, spec)?;
        }
        for scheme in QuantScheme::ALL {
            let file_bytes = if scheme == QuantScheme::Fp32 {
                std::fs::metadata(cfg.out_dir.join(format!("{}.bin", tag.file_stem())))?.len()
            } else {
                let path = stage_quantize(cfg, &tag, scheme)?;
                std::fs::metadata(path)?.len()
            };
            let report = stage_eval(cfg, &tag, scheme)?;
            rows.push(crate::eval::benchmark_row(preset, scheme, &config, file_bytes, &report));
        }
    }
    crate::eval::write_benchmark_csv(&cfg.out_dir.join("benchmark.csv"), &rows)?;
    crate::eval::write_benchmark_json(&cfg.out_dir.join("benchmark.json"), &rows)?;
    Ok(rows)
}

/// Feature-set ablation on the same architecture: six time features,
/// six plus the QRS areas, and the full ten-feature fusion.
pub fn stage_ablation(cfg: &PipelineConfig, spec: &TrainSpec) -> Result<AblationReport> {
    let mut arms = Vec::new();
    for mode in [FeatureMode::Six, FeatureMode::SixPlusTwoAreas, FeatureMode::Ten] {
        let config = ModelConfig::bilstm_reference(64, mode.len(), 0.5);
        let arch = "ablation_bilstm64";
        stage_train(cfg, arch, &config, mode, spec)?;
        let tag = ModelTag { arch: arch.to_string(), mode };
        let report = stage_eval(cfg, &tag, QuantScheme::Fp32)?;
        let mode_name = match mode {
            FeatureMode::Six => "six",
            FeatureMode::SixPlusTwoAreas => "six+2areas",
            FeatureMode::Ten => "ten",
        };
        arms.push(AblationArm {
            feature_mode: mode_name.to_string(),
            input_len: mode.len(),
            report,
        });
    }
    let report = AblationReport { arms };
    std::fs::write(
        cfg.out_dir.join("ablation.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceSummary {
    pub ingest: IngestSummary,
    pub features: FeatureSummary,
    pub benchmark: Vec<BenchmarkRow>,
}

/// Runs every stage in order: ingest through the benchmark grid.
pub fn reproduce(cfg: &PipelineConfig, spec: &TrainSpec) -> Result<ReproduceSummary> {
    let ingest = stage_ingest(cfg)?;
    stage_denoise(cfg)?;
    stage_detect(cfg)?;
    let features = stage_features(cfg)?;
    let benchmark = stage_benchmark(cfg, spec)?;
    Ok(ReproduceSummary { ingest, features, benchmark })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthSpec};

    fn small_setup() -> (tempfile::TempDir, PipelineConfig) {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let spec = SynthSpec { n_records: 3, duration_s: 60.0, ..SynthSpec::default() };
        generate_dataset(&data_dir, &spec).unwrap();
        let cfg = PipelineConfig::new(data_dir, out_dir);
        (dir, cfg)
    }

    #[test]
    fn stages_must_run_in_order() {
        let (_guard, cfg) = small_setup();
        match stage_denoise(&cfg) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "ingest"),
            other => panic!("expected missing artifact, got {other:?}"),
        }
        stage_ingest(&cfg).unwrap();
        match stage_features(&cfg) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "detect"),
            other => panic!("expected missing artifact, got {other:?}"),
        }
    }

    #[test]
    fn front_half_of_the_pipeline_produces_a_dataset() {
        let (_guard, cfg) = small_setup();
        let ingest = stage_ingest(&cfg).unwrap();
        assert_eq!(ingest.records, vec!["100", "101", "102"]);
        assert!(ingest.total_beats > 100);
        let denoised = stage_denoise(&cfg).unwrap();
        // Denoising removes baseline drift and noise but keeps beat energy.
        for (_, removed) in &denoised.energy_removed {
            assert!(*removed > 0.05 && *removed < 0.95, "removed {removed}");
        }
        let detect = stage_detect(&cfg).unwrap();
        for (name, score) in &detect.r_scores {
            assert!(score.sensitivity > 0.9, "{name} sensitivity {}", score.sensitivity);
            assert!(score.precision > 0.9, "{name} precision {}", score.precision);
        }
        let features = stage_features(&cfg).unwrap();
        assert!(features.n_rows > 50);
        assert_eq!(features.n_train + features.n_test, features.n_rows);
        // 2:1 split within rounding.
        let ratio = features.n_train as f64 / features.n_rows as f64;
        assert!((ratio - 2.0 / 3.0).abs() < 0.05, "ratio {ratio}");
        assert!(cfg.out_dir.join("config.json").exists());
        assert!(cfg.out_dir.join("dataset.csv").exists());
    }
}
