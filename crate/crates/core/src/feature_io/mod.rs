//! Persistent data model: frame features, event annotations, and the caption
//! datastore, together with their on-disk formats.
//!
//! Feature matrices use the little-endian `SV4F` container (see [`sv4f`]);
//! annotations and captions are JSON Lines.

mod annotations;
mod datastore;
pub mod sv4f;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotations::{load_annotations, parse_annotations, write_annotations, Event, EventSet};
pub use datastore::{load_datastore, parse_captions, CaptionDatastore, CaptionRecord};
pub use sv4f::{decode, encode, Sv4fRecord};

/// Vectors whose L2 norm deviates from one by more than this are rescaled at
/// construction. Rescaled `f32` rows land well inside it, so canonicalization
/// is idempotent and save/load round trips are bit-exact.
pub const CANONICAL_NORM_TOL: f64 = 1e-6;

/// Rows with a norm below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("row {row} has (near) zero norm and cannot be normalized")]
    ZeroVector { row: usize },
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("invalid timestamp in video {video_id:?}, event {event}: {message}")]
    InvalidTimestamp {
        video_id: String,
        event: usize,
        message: String,
    },
    #[error("count mismatch: {embeddings} embedding rows vs {captions} caption records")]
    CountMismatch { embeddings: usize, captions: usize },
    #[error("duplicate caption id {0:?}")]
    DuplicateCaptionId(String),
}

/// Per-video metadata carried alongside a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub video_id: String,
    pub duration_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps_note: Option<String>,
}

impl FeatureMetadata {
    pub fn new(video_id: impl Into<String>, duration_sec: f64) -> Self {
        Self {
            video_id: video_id.into(),
            duration_sec,
            fps_note: None,
        }
    }

    fn validate(&self) -> Result<(), FormatError> {
        if !(self.duration_sec.is_finite() && self.duration_sec > 0.0) {
            return Err(FormatError::InvalidMetadata(format!(
                "duration_sec must be positive and finite, got {}",
                self.duration_sec
            )));
        }
        Ok(())
    }
}

/// A `T x D` sequence of unit-norm frame embeddings for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    meta: FeatureMetadata,
    dim: usize,
    data: Vec<f32>,
}

impl FrameFeatures {
    /// Builds features from a flat row-major buffer, normalizing every row.
    pub fn from_flat(meta: FeatureMetadata, dim: usize, mut data: Vec<f32>) -> Result<Self, FormatError> {
        meta.validate()?;
        if dim == 0 {
            return Err(FormatError::MalformedHeader("dimension must be >= 1".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(FormatError::DimensionMismatch {
                expected: dim,
                found: data.len() % dim.max(1),
            });
        }
        canonicalize_rows(&mut data, dim)?;
        Ok(Self { meta, dim, data })
    }

    pub fn from_rows(meta: FeatureMetadata, rows: Vec<Vec<f32>>) -> Result<Self, FormatError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(FormatError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Self::from_flat(meta, dim, data)
    }

    pub fn from_record(record: Sv4fRecord) -> Result<Self, FormatError> {
        Self::from_flat(record.meta, record.dim, record.data)
    }

    pub fn to_record(&self) -> Sv4fRecord {
        Sv4fRecord {
            meta: self.meta.clone(),
            dim: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn meta(&self) -> &FeatureMetadata {
        &self.meta
    }

    pub fn video_id(&self) -> &str {
        &self.meta.video_id
    }

    pub fn duration_sec(&self) -> f64 {
        self.meta.duration_sec
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frame `i` (0-based).
    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }
}

/// Rescales each row to unit L2 norm unless it is already within
/// [`CANONICAL_NORM_TOL`]; rejects non-finite and zero rows.
pub(crate) fn canonicalize_rows(data: &mut [f32], dim: usize) -> Result<(), FormatError> {
    for (row_idx, row) in data.chunks_exact_mut(dim).enumerate() {
        if let Some(col) = row.iter().position(|x| !x.is_finite()) {
            return Err(FormatError::NonFiniteValue { row: row_idx, col });
        }
        let norm = crate::vector::norm_f32(row);
        if norm.is_nan() || norm < MIN_NORM {
            return Err(FormatError::ZeroVector { row: row_idx });
        }
        if (norm - 1.0).abs() > CANONICAL_NORM_TOL {
            let inv = 1.0 / norm;
            row.iter_mut().for_each(|x| *x = (*x as f64 * inv) as f32);
        }
    }
    Ok(())
}

/// Reads an `SV4F` file and normalizes every frame to unit length.
pub fn load_features(path: impl AsRef<Path>) -> Result<FrameFeatures, FormatError> {
    let bytes = std::fs::read(path)?;
    decode_features(&bytes)
}

/// Decodes `SV4F` bytes into normalized frame features.
pub fn decode_features(bytes: &[u8]) -> Result<FrameFeatures, FormatError> {
    FrameFeatures::from_record(sv4f::decode(bytes)?)
}

pub fn save_features(features: &FrameFeatures, path: impl AsRef<Path>) -> Result<(), FormatError> {
    sv4f::save(&features.to_record(), path)
}
