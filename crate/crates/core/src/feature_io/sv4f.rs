//! `SV4F` binary feature container.
//!
//! ```text
//! offset  size     field
//! 0       4        magic  b"SV4F"
//! 4       4        format version (u32 LE, currently 1)
//! 8       4        rows T (u32 LE, >= 1)
//! 12      4        dimension D (u32 LE, >= 1)
//! 16      T*D*4    payload, f32 LE, row-major
//! ...     4        metadata length L (u32 LE)      \ optional trailer
//! ...     L        metadata, UTF-8 JSON object     /
//! ```
//!
//! The metadata trailer holds `{video_id, duration_sec, fps_note?}`. Readers
//! that only need the matrix can stop after the payload. A file without a
//! trailer decodes with an empty video id and `duration_sec = T` (1 FPS).
//!
//! The raw codec does not normalize rows: reweighted features, segment
//! representations, and guidance vectors are stored with it as-is.

use std::io::Write;
use std::path::Path;

use super::{FeatureMetadata, FormatError};

pub const MAGIC: [u8; 4] = *b"SV4F";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Upper bound on the metadata trailer, so a corrupt length cannot force a
/// large allocation.
const MAX_METADATA_LEN: usize = 1 << 20;

/// A raw (unnormalized) feature matrix plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Sv4fRecord {
    pub meta: FeatureMetadata,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Sv4fRecord {
    /// Builds a record from `f64` rows, rounding to `f32`.
    pub fn from_f64_rows(meta: FeatureMetadata, dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            debug_assert_eq!(row.len(), dim);
            data.extend(row.iter().map(|&x| x as f32));
        }
        Self { meta, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Serializes a record. Fails on an empty matrix or a non-finite value.
pub fn encode(record: &Sv4fRecord) -> Result<Vec<u8>, FormatError> {
    let rows = record.rows();
    if record.dim == 0 || rows == 0 || record.data.len() != rows * record.dim {
        return Err(FormatError::MalformedHeader(format!(
            "cannot encode a {}-element buffer with dimension {}",
            record.data.len(),
            record.dim
        )));
    }
    let rows_u32 = u32::try_from(rows).map_err(|_| FormatError::MalformedHeader("too many rows".into()))?;
    let dim_u32 = u32::try_from(record.dim).map_err(|_| FormatError::MalformedHeader("dimension too large".into()))?;
    if let Some(pos) = record.data.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::NonFiniteValue {
            row: pos / record.dim,
            col: pos % record.dim,
        });
    }
    let meta = serde_json::to_vec(&record.meta).map_err(|e| FormatError::InvalidMetadata(e.to_string()))?;

    let mut out = Vec::with_capacity(HEADER_LEN + record.data.len() * 4 + 4 + meta.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows_u32.to_le_bytes());
    out.extend_from_slice(&dim_u32.to_le_bytes());
    for x in &record.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

/// Parses `SV4F` bytes. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<Sv4fRecord, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::MalformedHeader(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(FormatError::MalformedHeader("bad magic".into()));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(FormatError::MalformedHeader(format!("unsupported version {version}")));
    }
    let rows = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    if rows == 0 || dim == 0 {
        return Err(FormatError::MalformedHeader(format!("empty matrix {rows}x{dim}")));
    }
    let payload_len = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::MalformedHeader("matrix size overflows".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload_len {
        return Err(FormatError::MalformedHeader(format!(
            "payload truncated: need {payload_len} bytes, have {}",
            body.len()
        )));
    }
    let (payload, trailer) = body.split_at(payload_len);

    let mut data = Vec::with_capacity(rows * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !x.is_finite() {
            return Err(FormatError::NonFiniteValue { row: i / dim, col: i % dim });
        }
        data.push(x);
    }

    let meta = if trailer.is_empty() {
        FeatureMetadata::new("", rows as f64)
    } else {
        if trailer.len() < 4 {
            return Err(FormatError::MalformedHeader("truncated metadata length".into()));
        }
        let len = read_u32(trailer, 0) as usize;
        if len > MAX_METADATA_LEN || trailer.len() != 4 + len {
            return Err(FormatError::MalformedHeader(format!(
                "metadata trailer declares {len} bytes, {} present",
                trailer.len() - 4
            )));
        }
        let meta: FeatureMetadata =
            serde_json::from_slice(&trailer[4..]).map_err(|e| FormatError::InvalidMetadata(e.to_string()))?;
        meta.validate()?;
        meta
    };

    Ok(Sv4fRecord { meta, dim, data })
}

pub fn load(path: impl AsRef<Path>) -> Result<Sv4fRecord, FormatError> {
    decode(&std::fs::read(path)?)
}

pub fn save(record: &Sv4fRecord, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let bytes = encode(record)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}
