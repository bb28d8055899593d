use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecgfusion_core::features::FeatureMode;
use ecgfusion_core::nn::train::{Optimizer, TrainSpec};
use ecgfusion_core::nn::{ModelConfig, Preset};
use ecgfusion_core::pipeline::{
    reproduce, stage_ablation, stage_benchmark, stage_denoise, stage_detect, stage_eval,
    stage_features, stage_ingest, stage_quantize, stage_train, ModelTag, PipelineConfig,
};
use ecgfusion_core::quant::QuantScheme;
use ecgfusion_core::synth::{generate_dataset, SynthSpec};

#[derive(Parser)]
#[command(name = "ecgfusion", about = "ECG heartbeat classification pipeline", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory with WFDB records (.hea/.dat/.atr).
    #[arg(long, env = "ECGFUSION_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Directory for pipeline artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Compute threads (the reference implementation is single-threaded).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Model size preset: T, S, M, or L.
    #[arg(long, default_value = "T")]
    preset: String,
    /// Feature set: six, six+2areas, or ten.
    #[arg(long, default_value = "ten")]
    features: String,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Use plain SGD instead of Adam.
    #[arg(long)]
    sgd: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn spec(&self) -> TrainSpec {
        TrainSpec {
            batch_size: self.batch_size,
            epochs: self.epochs,
            optimizer: if self.sgd {
                Optimizer::Sgd { lr: self.lr }
            } else {
                Optimizer::Adam { lr: self.lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
            },
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic WFDB corpus into the data directory.
    Synth {
        #[arg(long, default_value_t = 30)]
        records: usize,
        #[arg(long, default_value_t = 120.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Decode records and summarize the labeled beat inventory.
    Ingest,
    /// Wavelet-denoise every record.
    Denoise,
    /// Detect PQRST fiducials and score them against the annotations.
    Detect,
    /// Extract fused features and write the train/test split.
    Features,
    /// Train one model on the feature split.
    Train(TrainArgs),
    /// Quantize a trained model.
    Quantize {
        #[arg(long, default_value = "T")]
        preset: String,
        #[arg(long, default_value = "ten")]
        features: String,
        /// fp32, fp16, int8_full, or drq.
        #[arg(long)]
        scheme: String,
    },
    /// Evaluate a trained (optionally quantized) model on the test split.
    Eval {
        #[arg(long, default_value = "T")]
        preset: String,
        #[arg(long, default_value = "ten")]
        features: String,
        #[arg(long, default_value = "fp32")]
        scheme: String,
    },
    /// Run the full preset-by-scheme benchmark grid.
    Benchmark(TrainArgs),
    /// Train the feature-set ablation arms and report per-class metrics.
    Ablation(TrainArgs),
    /// Run every stage from ingest through the benchmark.
    Reproduce(TrainArgs),
}

fn run(cli: Cli) -> ecgfusion_core::Result<()> {
    let mut cfg = PipelineConfig::new(cli.common.data_dir.clone(), cli.common.out_dir.clone());
    match cli.command {
        Command::Synth { records, duration_s, seed } => {
            let spec = SynthSpec {
                seed,
                n_records: records,
                duration_s,
                ..SynthSpec::default()
            };
            let truths = generate_dataset(&cli.common.data_dir, &spec)?;
            let beats: usize = truths.iter().map(|t| t.beats.len()).sum();
            println!("wrote {} records ({} beats) to {}", truths.len(), beats, cli.common.data_dir.display());
        }
        Command::Ingest => {
            let summary = stage_ingest(&cfg)?;
            println!(
                "{} records, {} beats: {:?}",
                summary.records.len(),
                summary.total_beats,
                summary.class_counts
            );
        }
        Command::Denoise => {
            let summary = stage_denoise(&cfg)?;
            println!("denoised {} records", summary.records.len());
        }
        Command::Detect => {
            let summary = stage_detect(&cfg)?;
            for (name, score) in &summary.r_scores {
                println!(
                    "{name}: R sensitivity {:.4} precision {:.4}",
                    score.sensitivity, score.precision
                );
            }
        }
        Command::Features => {
            let summary = stage_features(&cfg)?;
            println!(
                "{} beats ({} train / {} test), drops {:?}",
                summary.n_rows, summary.n_train, summary.n_test, summary.drops
            );
        }
        Command::Train(args) => {
            let preset: Preset = args.preset.parse()?;
            let mode: FeatureMode = args.features.parse()?;
            cfg.feature_mode = mode;
            cfg.train = args.spec();
            let config = ModelConfig::preset(preset, mode.len(), 0.25);
            let summary = stage_train(&cfg, preset.name(), &config, mode, &cfg.train.clone())?;
            if let Some(last) = summary.history.last() {
                println!(
                    "{}: train acc {:.4}, test acc {:.4}",
                    summary.tag.file_stem(),
                    last.train_accuracy,
                    last.test_accuracy
                );
            }
        }
        Command::Quantize { preset, features, scheme } => {
            let preset: Preset = preset.parse()?;
            let mode: FeatureMode = features.parse()?;
            let scheme: QuantScheme = scheme.parse()?;
            let tag = ModelTag { arch: preset.name().to_string(), mode };
            let path = stage_quantize(&cfg, &tag, scheme)?;
            println!("wrote {}", path.display());
        }
        Command::Eval { preset, features, scheme } => {
            let preset: Preset = preset.parse()?;
            let mode: FeatureMode = features.parse()?;
            let scheme: QuantScheme = scheme.parse()?;
            let tag = ModelTag { arch: preset.name().to_string(), mode };
            let report = stage_eval(&cfg, &tag, scheme)?;
            println!(
                "accuracy {:.4}, macro F1 {:.4} over {} beats",
                report.accuracy, report.macro_f1, report.n_samples
            );
        }
        Command::Benchmark(args) => {
            let mode: FeatureMode = args.features.parse()?;
            cfg.feature_mode = mode;
            let rows = stage_benchmark(&cfg, &args.spec())?;
            for row in &rows {
                println!(
                    "{}/{}: acc {:.4}, f1 {:.4}, {} B",
                    row.preset, row.scheme, row.accuracy, row.macro_f1, row.weights_only_bytes
                );
            }
        }
        Command::Ablation(args) => {
            cfg.train = args.spec();
            let report = stage_ablation(&cfg, &cfg.train.clone())?;
            for arm in &report.arms {
                println!(
                    "{}: accuracy {:.4}, macro F1 {:.4}",
                    arm.feature_mode, arm.report.accuracy, arm.report.macro_f1
                );
            }
        }
        Command::Reproduce(args) => {
            let mode: FeatureMode = args.features.parse()?;
            cfg.feature_mode = mode;
            cfg.train = args.spec();
            let summary = reproduce(&cfg, &cfg.train.clone())?;
            println!(
                "{} beats ingested, {} rows in the benchmark grid",
                summary.ingest.total_beats,
                summary.benchmark.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.threads != 1 {
        eprintln!("note: computation is single-threaded; --threads is accepted for compatibility");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
