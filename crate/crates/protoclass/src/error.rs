//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by preprocessing, learning, prediction and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// A sample's dimensionality does not match the model's.
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A feature has (near-)zero variance and strict variance handling is on.
    #[error("feature {feature} has zero variance; cannot standardize in strict mode")]
    DegenerateFeature { feature: usize },

    /// A feature's standardized extrema coincide, so unity normalization is undefined.
    #[error(
        "feature {feature} is constant in standardized space; cannot normalize in strict mode"
    )]
    ConstantFeature { feature: usize },

    /// An operation needs more ingested samples than the statistics hold.
    #[error("operation requires at least {required} samples, have {have}")]
    NotEnoughSamples { required: u64, have: u64 },

    /// A class has no data clouds to score against.
    #[error("class model is empty")]
    EmptyClassModel,

    /// The classifier has no trained classes.
    #[error("classifier has no trained classes")]
    NoClasses,

    /// No usable (non-outlier) samples were supplied.
    #[error("no usable samples: {reason}")]
    EmptyInput { reason: String },

    /// Referenced class label does not exist.
    #[error("unknown class label '{label}'")]
    UnknownClass { label: String },

    /// Requested label collides with an existing class.
    #[error("class label '{label}' already exists")]
    DuplicateLabel { label: String },

    /// A scalar argument fell outside its documented domain.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A density evaluation set was empty.
    #[error("cannot normalize an empty density set")]
    EmptyDensitySet,

    /// Model file carries an unsupported format version.
    #[error("unsupported model format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    /// Model file checksum does not match its payload.
    #[error("model file checksum mismatch: file is corrupt or was modified")]
    ChecksumMismatch,

    /// Underlying I/O failure while reading or writing a model file.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Model file is not parseable.
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
