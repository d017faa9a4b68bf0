//! Per-video segmentation and search timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::feature_io::{CaptionDatastore, FrameFeatures};
use crate::retrieval::{self, LatencyStats, RetrievalConfig, SearchBenchReport};
use crate::segmenter::{self, SegmenterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCountStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub videos: usize,
    pub mean_frames: f64,
    pub dim: usize,
    pub store_size: usize,
    pub k: usize,
    pub mode: segmenter::SegmenterMode,
    pub repeats: usize,
    pub segments_per_video: SegmentCountStats,
    /// Segmentation wall time per video.
    pub segment: LatencyStats,
    pub search: SearchBenchReport,
}

impl BenchReport {
    /// Segmentation plus search, mean milliseconds per video.
    pub fn total_ms_per_video(&self) -> f64 {
        self.segment.mean_ms + self.search.per_video.mean_ms
    }
}

/// Times segmentation of each video, then top-k search for every segment
/// query. Both are repeated `repeats` times.
pub fn bench_videos(
    features: &[FrameFeatures],
    store: &CaptionDatastore,
    seg: &SegmenterConfig,
    ret: &RetrievalConfig,
    repeats: usize,
) -> Result<BenchReport, PipelineError> {
    if features.is_empty() {
        return Err(PipelineError::Input("no videos to benchmark".into()));
    }
    let stage = |stage: &'static str| move |e: &dyn std::fmt::Display| PipelineError::Stage {
        stage,
        message: e.to_string(),
    };
    let repeats = repeats.max(1);
    let mut seg_times = Vec::with_capacity(features.len() * repeats);
    let mut partitions = Vec::with_capacity(features.len());
    for _ in 0..repeats {
        partitions.clear();
        for f in features {
            let t = Instant::now();
            let p = segmenter::segment(f, seg).map_err(|e| stage("segment")(&e))?;
            seg_times.push(t.elapsed().as_secs_f64() * 1e3);
            partitions.push(p);
        }
    }
    let queries: Vec<Vec<Vec<f64>>> = features
        .iter()
        .zip(&partitions)
        .map(|(f, p)| retrieval::segment_representation(f, p, ret.segment_repr))
        .collect();
    let search = retrieval::bench_search(store, &queries, ret.k, repeats).map_err(|e| stage("retrieve")(&e))?;
    let counts: Vec<usize> = partitions.iter().map(|p| p.len()).collect();
    Ok(BenchReport {
        videos: features.len(),
        mean_frames: features.iter().map(|f| f.len() as f64).sum::<f64>() / features.len() as f64,
        dim: store.dim(),
        store_size: store.len(),
        k: ret.k,
        mode: seg.mode,
        repeats,
        segments_per_video: SegmentCountStats {
            mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            min: counts.iter().copied().min().unwrap_or(0),
            max: counts.iter().copied().max().unwrap_or(0),
        },
        segment: LatencyStats::from_samples(&seg_times),
        search,
    })
}
