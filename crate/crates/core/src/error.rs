use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("image value outside [0,1] at index {index}: {value}")]
    OutOfRange { index: usize, value: f32 },

    #[error(
        "numerical instability in divisive modulation: |alpha + h| < {threshold} at {count} pixel(s)"
    )]
    NumericalInstability { count: usize, threshold: f32 },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing dataset subdirectory {0}")]
    MissingSubdir(PathBuf),

    #[error("unmatched dataset file {file} (present in {present}/, missing in {missing}/)")]
    UnmatchedFile {
        file: String,
        present: &'static str,
        missing: &'static str,
    },

    #[error("pair {id}: low is {low_w}x{low_h} but high is {high_w}x{high_h}")]
    PairDimensionMismatch {
        id: String,
        low_w: u32,
        low_h: u32,
        high_w: u32,
        high_h: u32,
    },

    #[error("unsupported image format for {path}: expected 8-bit RGB, got {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },

    #[error("checkpoint version mismatch: found {found}, supported {supported}")]
    CheckpointVersion { found: String, supported: u32 },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("checkpoint parameter count mismatch: found {found}, expected {expected}")]
    CheckpointParamCount { found: usize, expected: usize },

    #[error("images smaller than SSIM window: {h}x{w} vs window {window}")]
    ImageTooSmall { h: usize, w: usize, window: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
