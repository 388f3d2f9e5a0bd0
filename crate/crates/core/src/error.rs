//! Crate-wide error type. Variants carry enough context (paths, line numbers,
//! offending values) that callers can report failures without re-deriving it.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode png {path}: {source}")]
    PngDecode {
        path: PathBuf,
        #[source]
        source: png::DecodingError,
    },

    #[error("failed to encode png {path}: {source}")]
    PngEncode {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },

    /// Readable file, but not a format this crate accepts (non 8-bit PNG,
    /// palette/alpha color types, malformed PPM header, unknown magic).
    #[error("unsupported image {path}: {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },

    #[error("manifest {path} line {line}: {source}")]
    ManifestLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("bad json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid dimensions: {detail}")]
    InvalidDimensions { detail: String },

    #[error("pixel value {value} outside [0, 1]")]
    PixelRange { value: f32 },

    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    /// Patch placement that would write outside the image bounds.
    #[error("patch does not fit: {detail}")]
    PatchPlacement { detail: String },

    /// Out-of-range or inconsistent parameter (rates, alphas, thresholds,
    /// slice sides, architecture fields, ...).
    #[error("invalid {name}: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    /// Ranking metrics need at least one positive and one negative label.
    #[error("scores contain only one class; AUROC is undefined")]
    SingleClass,

    /// Validation slice errors were (numerically) constant; a Gaussian
    /// reference fitted to them would assign infinite z-scores.
    #[error("degenerate reference: sigma = {sigma} is below 1e-12")]
    DegenerateReference { sigma: f64 },

    /// Scoring configuration disagrees with the fitted reference.
    #[error("reference mismatch: {detail}")]
    ReferenceMismatch { detail: String },

    #[error("bad model file: {detail}")]
    ModelFormat { detail: String },

    /// Accuracy over a report that lacks ground truth for some image.
    #[error("no ground truth recorded for {image}")]
    MissingTruth { image: String },
}
