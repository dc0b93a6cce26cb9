use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate batch: train-mode batch normalization needs at least 2 rows, got {rows}")]
    DegenerateBatch { rows: usize },

    #[error("parameter registry mismatch: {0}")]
    RegistryMismatch(String),

    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("infeasible label sequence: needs at least {min_frames} frames, got {frames}")]
    InfeasibleLabels { min_frames: usize, frames: usize },

    #[error("brute-force enumeration of {paths} paths exceeds the bound of {bound}")]
    EnumerationBound { paths: u128, bound: u128 },

    #[error("empty reference set: total reference length is zero")]
    EmptyReference,

    #[error("unknown token {token} (vocabulary has {vocab} classes)")]
    UnknownToken { token: u32, vocab: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("unknown speaker id {0}")]
    UnknownSpeaker(u32),

    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
