//! Versioned, checksummed model persistence.
//!
//! Models are stored as human-inspectable JSON: an envelope with a format
//! version and a SHA-256 checksum over the canonical (compact) serialization
//! of the model payload. Loading re-serializes the parsed payload and
//! compares checksums, so a corrupt or hand-edited file is rejected rather
//! than producing a silently different model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::Classifier;
use crate::error::{Error, Result};

/// Current model file format version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    checksum: String,
    model: serde_json::Value,
}

fn checksum_of(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}

/// Serialize a model to the envelope format.
pub fn to_string(model: &Classifier) -> Result<String> {
    let canonical = serde_json::to_string(model)?;
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        checksum: checksum_of(&canonical),
        model: serde_json::from_str(&canonical)?,
    };
    Ok(serde_json::to_string_pretty(&envelope)?)
}

/// Parse a model from the envelope format, verifying version and checksum.
pub fn from_str(text: &str) -> Result<Classifier> {
    let envelope: Envelope = serde_json::from_str(text)?;
    if envelope.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: envelope.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let model: Classifier = serde_json::from_value(envelope.model)?;
    let canonical = serde_json::to_string(&model)?;
    if checksum_of(&canonical) != envelope.checksum {
        return Err(Error::ChecksumMismatch);
    }
    Ok(model)
}

/// Write a model file.
pub fn save_model(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(model)?)?;
    Ok(())
}

/// Read and verify a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let text = fs::read_to_string(path)?;
    from_str(&text)
}
