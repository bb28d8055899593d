use thiserror::Error;

/// Errors produced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("header parse error at line {line}: {reason}")]
    HeaderParse { line: usize, reason: String },

    #[error("unsupported storage format {format} (only format 212 is handled)")]
    UnsupportedFormat { format: u32 },

    #[error("signal file truncated: expected {expected} bytes, found {actual}")]
    TruncatedSignal { expected: usize, actual: usize },

    #[error("annotation parse error at byte offset {offset}: {reason}")]
    AnnotationParse { offset: usize, reason: String },

    #[error("cannot stratify: class {class} has only {count} beats (need at least 3)")]
    TooFewBeats { class: String, count: usize },

    #[error("signal of length {len} is too short for {levels}-level decomposition")]
    SignalTooShort { len: usize, levels: usize },

    #[error("reconstruction level {level} exceeds decomposition depth {depth}")]
    BadLevel { level: usize, depth: usize },

    #[error("fiducial ordering violated: start index {start} > end index {end}")]
    BadInterval { start: usize, end: usize },

    #[error("feature '{feature}' has zero standard deviation on the training split")]
    ZeroStd { feature: String },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("label {label} outside the 0..=4 class range")]
    BadLabel { label: i64 },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("FP16 overflow: {0}")]
    Fp16Overflow(String),

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("quantization scheme/config mismatch: {0}")]
    SchemeMismatch(String),

    #[error("missing input artifact: {path} (run `{stage}` first)")]
    MissingArtifact { path: String, stage: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
