//! Segment-level caption retrieval over a [`CaptionDatastore`].
//!
//! Each segment is turned into a query vector (mean, elementwise max, or key
//! frame), the `k` captions with the highest cosine similarity are returned,
//! and their embeddings are averaged into a per-segment guidance vector.
//!
//! Search is exhaustive and exact. A single-precision pass over the store
//! finds the `k`-th best approximate score; every entry that could still
//! reach the top `k` given the pass's worst-case rounding error is rescored
//! in double precision, and the final order is by score descending, then
//! `caption_id` ascending.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_io::{CaptionDatastore, FrameFeatures};
use crate::segmenter::SegmentPartition;
use crate::vector::{dot_f32_fast, dot_mixed, mean_rows, norm_f32, norm_f64};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("k = {k} exceeds datastore size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("datastore is empty")]
    EmptyDatastore,
    #[error("query dimension {query} does not match datastore dimension {store}")]
    DimensionMismatch { query: usize, store: usize },
    #[error("query must be finite with nonzero norm")]
    InvalidQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentRepr {
    #[serde(rename = "mean")]
    MeanPool,
    #[serde(rename = "max")]
    MaxPool,
    #[serde(rename = "keyframe")]
    KeyFrame,
}

impl SegmentRepr {
    pub const ALL: [SegmentRepr; 3] = [SegmentRepr::MeanPool, SegmentRepr::MaxPool, SegmentRepr::KeyFrame];

    pub fn cli_name(self) -> &'static str {
        match self {
            SegmentRepr::MeanPool => "mean",
            SegmentRepr::MaxPool => "max",
            SegmentRepr::KeyFrame => "keyframe",
        }
    }
}

impl std::str::FromStr for SegmentRepr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmentRepr::ALL
            .into_iter()
            .find(|r| r.cli_name() == s)
            .ok_or_else(|| format!("unknown segment representation {s:?} (expected mean|max|keyframe)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub segment_repr: SegmentRepr,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            segment_repr: SegmentRepr::MeanPool,
        }
    }
}

/// One retrieved caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub caption_id: String,
    /// Row in the datastore.
    #[serde(skip)]
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRetrieval {
    pub query: Vec<f64>,
    pub hits: Vec<Hit>,
    /// Mean of the retrieved caption embeddings.
    pub guidance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub segments: Vec<SegmentRetrieval>,
}

impl RetrievalResult {
    pub fn guidance(&self) -> impl Iterator<Item = &[f64]> {
        self.segments.iter().map(|s| s.guidance.as_slice())
    }
}

/// Query vectors for every segment of `partition`.
pub fn segment_representation(
    features: &FrameFeatures,
    partition: &SegmentPartition,
    repr: SegmentRepr,
) -> Vec<Vec<f64>> {
    let dim = features.dim();
    partition
        .segments
        .iter()
        .map(|seg| {
            let frames = || seg.frame_indices().map(|i| features.frame(i));
            match repr {
                SegmentRepr::MeanPool => mean_rows(frames(), dim),
                SegmentRepr::MaxPool => {
                    let mut out = vec![f64::NEG_INFINITY; dim];
                    for f in frames() {
                        for (o, &x) in out.iter_mut().zip(f) {
                            *o = o.max(x as f64);
                        }
                    }
                    out
                }
                SegmentRepr::KeyFrame => {
                    let mean = mean_rows(frames(), dim);
                    let mean_norm = norm_f64(&mean);
                    let mut best = seg.start - 1;
                    let mut best_cos = f64::NEG_INFINITY;
                    for i in seg.frame_indices() {
                        let f = features.frame(i);
                        let cos = dot_mixed(f, &mean) / (norm_f32(f) * mean_norm);
                        if cos > best_cos {
                            best = i;
                            best_cos = cos;
                        }
                    }
                    features.frame(best).iter().map(|&x| x as f64).collect()
                }
            }
        })
        .collect()
}

/// Cosine similarity between store row `i` and a unit query, in `f64`.
fn exact_score(store: &CaptionDatastore, i: usize, unit_query: &[f64]) -> f64 {
    dot_mixed(store.embedding(i), unit_query) * store.inv_norm(i)
}

/// Exact top-`k` captions by cosine similarity to `query`.
pub fn retrieve_topk(query: &[f64], store: &CaptionDatastore, k: usize) -> Result<Vec<Hit>, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::EmptyDatastore);
    }
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if k > store.len() {
        return Err(RetrievalError::KTooLarge { k, size: store.len() });
    }
    if query.len() != store.dim() {
        return Err(RetrievalError::DimensionMismatch {
            query: query.len(),
            store: store.dim(),
        });
    }
    let qnorm = norm_f64(query);
    if !(qnorm.is_finite() && qnorm > 0.0) {
        return Err(RetrievalError::InvalidQuery);
    }
    let unit: Vec<f64> = query.iter().map(|x| x / qnorm).collect();
    let unit32: Vec<f32> = unit.iter().map(|&x| x as f32).collect();

    let approx: Vec<f32> = store
        .embeddings_flat()
        .chunks_exact(store.dim())
        .map(|row| dot_f32_fast(row, &unit32))
        .collect();
    let mut scratch = approx.clone();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let kth = *kth as f64;

    // |approx - exact| <= (D + 1) u ||r|| ||q32|| + norm deviation, u = 2^-24.
    let eps = (store.dim() as f64 + 2.0) * f64::powi(2.0, -23) + 1.01 * store.max_norm_dev() + 1e-12;
    let cutoff = kth - 2.0 * eps;

    let mut candidates: Vec<(usize, f64)> = approx
        .iter()
        .enumerate()
        .filter(|(_, &s)| s as f64 >= cutoff)
        .map(|(i, _)| (i, exact_score(store, i, &unit)))
        .collect();
    candidates.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| store.caption_id(a.0).cmp(store.caption_id(b.0)))
    });
    candidates.truncate(k);
    Ok(candidates
        .into_iter()
        .map(|(i, score)| Hit {
            caption_id: store.caption_id(i).to_owned(),
            index: i,
            score,
        })
        .collect())
}

/// Retrieves for one query and averages the hit embeddings.
pub fn retrieve_segment(query: Vec<f64>, store: &CaptionDatastore, k: usize) -> Result<SegmentRetrieval, RetrievalError> {
    let hits = retrieve_topk(&query, store, k)?;
    let guidance = mean_rows(hits.iter().map(|h| store.embedding(h.index)), store.dim());
    Ok(SegmentRetrieval { query, hits, guidance })
}

/// Builds one query per segment and retrieves for each independently.
pub fn retrieve_for_partition(
    features: &FrameFeatures,
    partition: &SegmentPartition,
    store: &CaptionDatastore,
    config: &RetrievalConfig,
) -> Result<RetrievalResult, RetrievalError> {
    let queries = segment_representation(features, partition, config.segment_repr);
    let segments = queries
        .into_iter()
        .map(|q| retrieve_segment(q, store, config.k))
        .collect::<Result<_, _>>()?;
    Ok(RetrievalResult { segments })
}

/// Wall-time summary in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    /// Summary of `samples` (ms). Percentiles use the nearest-rank rule.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                count: 0,
                mean_ms: 0.0,
                median_ms: 0.0,
                p95_ms: 0.0,
                min_ms: 0.0,
                max_ms: 0.0,
            };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            count: n,
            mean_ms: s.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: s[rank - 1],
            min_ms: s[0],
            max_ms: s[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBenchReport {
    pub store_size: usize,
    pub dim: usize,
    pub k: usize,
    pub videos: usize,
    pub queries: usize,
    pub per_query: LatencyStats,
    pub per_video: LatencyStats,
}

/// Times exhaustive retrieval. `videos[v]` holds the `M` segment queries of
/// video `v`; each video is searched `repeats` times.
pub fn bench_search(
    store: &CaptionDatastore,
    videos: &[Vec<Vec<f64>>],
    k: usize,
    repeats: usize,
) -> Result<SearchBenchReport, RetrievalError> {
    let mut per_query = Vec::new();
    let mut per_video = Vec::new();
    for _ in 0..repeats.max(1) {
        for queries in videos {
            let video_start = Instant::now();
            for q in queries {
                let t = Instant::now();
                let hits = retrieve_topk(q, store, k)?;
                std::hint::black_box(&hits);
                per_query.push(t.elapsed().as_secs_f64() * 1e3);
            }
            per_video.push(video_start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(SearchBenchReport {
        store_size: store.len(),
        dim: store.dim(),
        k,
        videos: videos.len(),
        queries: videos.iter().map(Vec::len).sum(),
        per_query: LatencyStats::from_samples(&per_query),
        per_video: LatencyStats::from_samples(&per_video),
    })
}
