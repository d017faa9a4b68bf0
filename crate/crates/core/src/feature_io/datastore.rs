use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sv4f::{self, Sv4fRecord};
use super::{canonicalize_rows, FeatureMetadata, FormatError};

/// One line of the caption JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub text: String,
}

/// Caption texts with unit-norm embeddings, queried by cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionDatastore {
    dim: usize,
    captions: Vec<CaptionRecord>,
    embeddings: Vec<f32>,
    inv_norms: Vec<f64>,
    max_norm_dev: f64,
}

impl CaptionDatastore {
    /// Builds a store from captions and a row-major embedding buffer.
    /// Rows are normalized; caption ids must be unique.
    pub fn new(dim: usize, captions: Vec<CaptionRecord>, mut embeddings: Vec<f32>) -> Result<Self, FormatError> {
        if dim == 0 {
            return Err(FormatError::MalformedHeader("dimension must be >= 1".into()));
        }
        if embeddings.len() % dim != 0 {
            return Err(FormatError::DimensionMismatch {
                expected: dim,
                found: embeddings.len() % dim,
            });
        }
        let rows = embeddings.len() / dim;
        if rows != captions.len() {
            return Err(FormatError::CountMismatch {
                embeddings: rows,
                captions: captions.len(),
            });
        }
        let mut seen = HashSet::with_capacity(captions.len());
        for c in &captions {
            if !seen.insert(c.caption_id.as_str()) {
                return Err(FormatError::DuplicateCaptionId(c.caption_id.clone()));
            }
        }
        canonicalize_rows(&mut embeddings, dim)?;
        let inv_norms: Vec<f64> = embeddings
            .chunks_exact(dim)
            .map(|r| 1.0 / crate::vector::norm_f32(r))
            .collect();
        let max_norm_dev = inv_norms.iter().map(|&n| (n - 1.0).abs()).fold(0.0, f64::max);
        Ok(Self {
            dim,
            captions,
            embeddings,
            inv_norms,
            max_norm_dev,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of entries `N_R`.
    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings_flat(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn caption_id(&self, i: usize) -> &str {
        &self.captions[i].caption_id
    }

    pub fn text(&self, i: usize) -> &str {
        &self.captions[i].text
    }

    pub fn captions(&self) -> &[CaptionRecord] {
        &self.captions
    }

    /// `1 / ||r_i||` for each stored row (within 1e-6 of one).
    pub(crate) fn inv_norm(&self, i: usize) -> f64 {
        self.inv_norms[i]
    }

    /// Largest `|1/||r|| - 1|` over the store.
    pub(crate) fn max_norm_dev(&self) -> f64 {
        self.max_norm_dev
    }

    /// The first `ceil(fraction * N_R)` entries in file order.
    pub fn subset(&self, fraction: f64) -> Self {
        let fraction = fraction.clamp(0.0, 1.0);
        let n = ((fraction * self.len() as f64).ceil() as usize).min(self.len());
        let max_norm_dev = self.inv_norms[..n].iter().map(|&v| (v - 1.0).abs()).fold(0.0, f64::max);
        Self {
            dim: self.dim,
            captions: self.captions[..n].to_vec(),
            embeddings: self.embeddings[..n * self.dim].to_vec(),
            inv_norms: self.inv_norms[..n].to_vec(),
            max_norm_dev,
        }
    }

    /// Writes the embeddings as `SV4F` and the captions as JSONL.
    pub fn save(&self, embeddings_path: impl AsRef<Path>, captions_path: impl AsRef<Path>) -> Result<(), FormatError> {
        let record = Sv4fRecord {
            meta: FeatureMetadata::new("caption-datastore", self.len().max(1) as f64),
            dim: self.dim,
            data: self.embeddings.clone(),
        };
        sv4f::save(&record, embeddings_path)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(captions_path)?);
        for c in &self.captions {
            serde_json::to_writer(&mut w, c).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses caption JSON Lines; blank lines are skipped.
pub fn parse_captions(text: &str) -> Result<Vec<CaptionRecord>, FormatError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(line).map_err(|e| FormatError::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads a datastore from an `SV4F` embedding file and a caption JSONL file
/// aligned by row index. `expected_dim`, when given, must match the file.
pub fn load_datastore(
    embeddings_path: impl AsRef<Path>,
    captions_path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<CaptionDatastore, FormatError> {
    let record = sv4f::load(embeddings_path)?;
    if let Some(expected) = expected_dim {
        if expected != record.dim {
            return Err(FormatError::DimensionMismatch {
                expected,
                found: record.dim,
            });
        }
    }
    let captions = parse_captions(&std::fs::read_to_string(captions_path)?)?;
    CaptionDatastore::new(record.dim, captions, record.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(n: usize) -> Vec<CaptionRecord> {
        (0..n)
            .map(|i| CaptionRecord {
                caption_id: format!("c{i}"),
                text: format!("caption {i}"),
            })
            .collect()
    }

    #[test]
    fn count_mismatch() {
        assert!(matches!(
            CaptionDatastore::new(2, vec![], vec![1.0, 0.0]),
            Err(FormatError::CountMismatch { embeddings: 1, captions: 0 })
        ));
    }

    #[test]
    fn single_entry() {
        let s = CaptionDatastore::new(3, caps(1), vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.embedding(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn duplicate_ids() {
        let mut c = caps(2);
        c[1].caption_id = "c0".into();
        assert!(matches!(
            CaptionDatastore::new(1, c, vec![1.0, 1.0]),
            Err(FormatError::DuplicateCaptionId(_))
        ));
    }

    #[test]
    fn subset_rounds_up() {
        let s = CaptionDatastore::new(1, caps(10), vec![1.0; 10]).unwrap();
        assert_eq!(s.subset(0.1).len(), 1);
        assert_eq!(s.subset(0.25).len(), 3);
        assert_eq!(s.subset(1.0).len(), 10);
        assert_eq!(s.subset(0.0).len(), 0);
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = CaptionDatastore::new(2, caps(3), vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8]).unwrap();
        let (e, c) = (dir.path().join("e.sv4f"), dir.path().join("c.jsonl"));
        s.save(&e, &c).unwrap();
        assert_eq!(load_datastore(&e, &c, Some(2)).unwrap(), s);
        assert!(matches!(
            load_datastore(&e, &c, Some(3)),
            Err(FormatError::DimensionMismatch { expected: 3, found: 2 })
        ));
        std::fs::write(&c, "").unwrap();
        assert!(matches!(
            load_datastore(&e, &c, None),
            Err(FormatError::CountMismatch { embeddings: 3, captions: 0 })
        ));
    }
}
