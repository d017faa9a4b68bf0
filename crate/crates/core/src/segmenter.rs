//! Semantic temporal segmentation of a frame sequence.
//!
//! Consecutive-frame cosine differences `D(i)` give an adaptive threshold
//! `tau = mean + beta * std` (population std over the `T - 1` diffs). The
//! momentum segmenter grows a segment while each incoming frame stays close
//! to the running mean `z_cur` of the segment:
//!
//! ```text
//! z_cur = x_1
//! for each next frame x:
//!     D' = 1 - <z_cur, x>           (z_cur is not renormalized)
//!     if D' > tau: close segment, z_cur = x
//!     else:        z_cur = (|S| z_cur + x) / (|S| + 1)
//! ```
//!
//! Framewise and fixed-window baselines are provided for comparison. Frame
//! indices in [`Segment`] are 1-based and inclusive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_io::{FormatError, FrameFeatures};
use crate::vector::{mean_rows, norm_f32};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("need at least 2 frames for difference statistics, got {frames}")]
    TooShort { frames: usize },
    #[error("window must be >= 1")]
    InvalidWindow,
    #[error("threshold must be finite, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmenterMode {
    /// Adaptive threshold with momentum accumulation.
    #[serde(rename = "adaptive-mmt")]
    AdaptiveMomentum,
    /// Adaptive threshold, boundary at every large `D(i)`.
    #[serde(rename = "adaptive")]
    AdaptiveFramewise,
    #[serde(rename = "fixed-mmt")]
    FixedMomentum,
    #[serde(rename = "fixed")]
    FixedFramewise,
    /// Fixed-size chunks.
    #[serde(rename = "window")]
    FixedWindow,
}

impl SegmenterMode {
    pub const ALL: [SegmenterMode; 5] = [
        SegmenterMode::AdaptiveMomentum,
        SegmenterMode::AdaptiveFramewise,
        SegmenterMode::FixedMomentum,
        SegmenterMode::FixedFramewise,
        SegmenterMode::FixedWindow,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            SegmenterMode::AdaptiveMomentum => "adaptive-mmt",
            SegmenterMode::AdaptiveFramewise => "adaptive",
            SegmenterMode::FixedMomentum => "fixed-mmt",
            SegmenterMode::FixedFramewise => "fixed",
            SegmenterMode::FixedWindow => "window",
        }
    }
}

impl std::str::FromStr for SegmenterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmenterMode::ALL
            .into_iter()
            .find(|m| m.cli_name() == s)
            .ok_or_else(|| format!("unknown segmenter mode {s:?} (expected adaptive-mmt|adaptive|fixed-mmt|fixed|window)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub mode: SegmenterMode,
    pub beta: f64,
    pub tau_fixed: f64,
    pub window: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            mode: SegmenterMode::AdaptiveMomentum,
            beta: 1.0,
            tau_fixed: 0.3,
            window: 10,
        }
    }
}

/// Consecutive-frame cosine differences and their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceProfile {
    pub diffs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub tau_adaptive: f64,
}

/// An inclusive, 1-based frame range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    /// 0-based frame indices covered by this segment.
    pub fn frame_indices(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end
    }
}

/// Ordered segments covering `1..=T` with their mean representations.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPartition {
    pub segments: Vec<Segment>,
    /// Mean of each segment's member frames.
    pub representations: Vec<Vec<f64>>,
    /// Threshold actually used; `None` for fixed windows.
    pub tau_effective: Option<f64>,
}

impl SegmentPartition {
    /// Rebuilds a partition (and its mean representations) from explicit ranges.
    pub fn from_segments(features: &FrameFeatures, segments: Vec<Segment>) -> Result<Self, SegmentError> {
        validate_partition(&segments, features.len())?;
        let representations = segments.iter().map(|s| segment_mean(features, s)).collect();
        Ok(Self {
            segments,
            representations,
            tau_effective: None,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment end frames `e_m`, excluding the final one; the 1-based frame
    /// after which each boundary falls.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().rev().skip(1).rev().map(|s| s.end).collect()
    }
}

/// Checks that `segments` are ordered, contiguous and cover exactly `1..=frames`.
pub fn validate_partition(segments: &[Segment], frames: usize) -> Result<(), SegmentError> {
    let bad = |m: String| Err(SegmentError::InvalidPartition(m));
    if segments.is_empty() {
        return bad("no segments".into());
    }
    let mut next = 1;
    for (m, s) in segments.iter().enumerate() {
        if s.start != next {
            return bad(format!("segment {m} starts at {} but {next} expected", s.start));
        }
        if s.end < s.start {
            return bad(format!("segment {m} ends before it starts"));
        }
        next = s.end + 1;
    }
    if next != frames + 1 {
        return bad(format!("segments cover 1..={} but the video has {frames} frames", next - 1));
    }
    Ok(())
}

fn segment_mean(features: &FrameFeatures, s: &Segment) -> Vec<f64> {
    mean_rows(s.frame_indices().map(|i| features.frame(i)), features.dim())
}

fn partition_from_ends(features: &FrameFeatures, ends: &[usize], tau: Option<f64>) -> SegmentPartition {
    let mut segments = Vec::with_capacity(ends.len());
    let mut start = 1;
    for &end in ends {
        segments.push(Segment::new(start, end));
        start = end + 1;
    }
    let representations = segments.iter().map(|s| segment_mean(features, s)).collect();
    SegmentPartition {
        segments,
        representations,
        tau_effective: tau,
    }
}

/// Frames rescaled to unit length in `f64`, so cosine similarity is a plain
/// dot product to rounding error rather than to the `f32` storage tolerance.
struct UnitRows {
    dim: usize,
    data: Vec<f64>,
}

impl UnitRows {
    fn new(features: &FrameFeatures) -> Self {
        let mut data = Vec::with_capacity(features.as_flat().len());
        for row in features.frames() {
            let inv = 1.0 / norm_f32(row);
            data.extend(row.iter().map(|&v| v as f64 * inv));
        }
        Self {
            dim: features.dim(),
            data,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

fn raw_diffs(rows: &UnitRows) -> Vec<f64> {
    (0..rows.len().saturating_sub(1))
        .map(|i| half_sq_dist(rows.row(i), rows.row(i + 1)).clamp(0.0, 2.0))
        .collect()
}

/// `D(i) = 1 - cos(x_i, x_{i+1})` with mean, population std and `tau = mean + beta * std`.
///
/// `D(i)` is evaluated as `||x_i - x_{i+1}||^2 / 2` on unit rows, which is
/// exactly zero for repeated frames.
pub fn frame_differences(features: &FrameFeatures, beta: f64) -> Result<DifferenceProfile, SegmentError> {
    if features.len() < 2 {
        return Err(SegmentError::TooShort { frames: features.len() });
    }
    let diffs = raw_diffs(&UnitRows::new(features));
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    Ok(DifferenceProfile {
        tau_adaptive: mean + beta * std,
        diffs,
        mean,
        std,
    })
}

/// The running segment feature `z_cur`: the mean of the frames absorbed so
/// far, updated as `z <- (|S| z + x) / (|S| + 1)`.
///
/// Alongside the mean it tracks the spread `V = mean ||x_j - z||^2`, which for
/// unit frames equals `1 - ||z||^2`. That lets [`RunningMean::difference`]
/// evaluate `1 - <z, x>` as `||z - x||^2 / 2 + V / 2` without cancellation,
/// so a segment of repeated frames has a difference of exactly zero.
#[derive(Debug, Clone)]
pub struct RunningMean {
    mean: Vec<f64>,
    spread: f64,
    count: usize,
}

impl RunningMean {
    pub fn new(first: &[f64]) -> Self {
        Self {
            mean: first.to_vec(),
            spread: 0.0,
            count: 1,
        }
    }

    pub fn absorb(&mut self, x: &[f64]) {
        let n = self.count as f64;
        let mut dist_sq = 0.0;
        for (z, &v) in self.mean.iter_mut().zip(x) {
            let delta = v - *z;
            dist_sq += delta * delta;
            // (n z + x) / (n + 1), arranged so that x == z leaves z unchanged.
            *z += delta / (n + 1.0);
        }
        self.spread = n * self.spread / (n + 1.0) + n * dist_sq / ((n + 1.0) * (n + 1.0));
        self.count += 1;
    }

    pub fn reset(&mut self, first: &[f64]) {
        self.mean.copy_from_slice(first);
        self.spread = 0.0;
        self.count = 1;
    }

    /// `D' = 1 - <z_cur, x>` for a unit frame `x`.
    pub fn difference(&self, x: &[f64]) -> f64 {
        let dist_sq: f64 = self
            .mean
            .iter()
            .zip(x)
            .map(|(&z, &v)| {
                let d = v - z;
                d * d
            })
            .sum();
        0.5 * dist_sq + 0.5 * self.spread
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Mean squared distance of the absorbed frames from the mean.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

fn check_threshold(threshold: f64) -> Result<(), SegmentError> {
    if threshold.is_nan() || threshold.is_infinite() {
        Err(SegmentError::InvalidThreshold(threshold))
    } else {
        Ok(())
    }
}

/// Momentum segmentation; `observe(segment_start, frame, z_cur)` sees the
/// running mean after every absorbed frame (0-based indices).
pub fn segment_momentum_observed<F>(
    features: &FrameFeatures,
    threshold: f64,
    mut observe: F,
) -> Result<SegmentPartition, SegmentError>
where
    F: FnMut(usize, usize, &RunningMean),
{
    check_threshold(threshold)?;
    let t = features.len();
    let mut ends = Vec::new();
    let rows = UnitRows::new(features);
    let mut z = RunningMean::new(rows.row(0));
    let mut seg_start = 0;
    for next in 1..t {
        let x = rows.row(next);
        if z.difference(x) > threshold {
            // 1-based end of the closed segment is `next` (frame before `next + 1`).
            ends.push(next);
            z.reset(x);
            seg_start = next;
        } else {
            z.absorb(x);
            observe(seg_start, next, &z);
        }
    }
    ends.push(t);
    Ok(partition_from_ends(features, &ends, Some(threshold)))
}

pub fn segment_momentum(features: &FrameFeatures, threshold: f64) -> Result<SegmentPartition, SegmentError> {
    segment_momentum_observed(features, threshold, |_, _, _| {})
}

/// Boundary after every frame `i` with `D(i) > threshold`.
pub fn segment_framewise(features: &FrameFeatures, threshold: f64) -> Result<SegmentPartition, SegmentError> {
    check_threshold(threshold)?;
    let diffs = raw_diffs(&UnitRows::new(features));
    framewise_from_diffs(features, &diffs, threshold)
}

fn framewise_from_diffs(
    features: &FrameFeatures,
    diffs: &[f64],
    threshold: f64,
) -> Result<SegmentPartition, SegmentError> {
    let mut ends: Vec<usize> = diffs
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold)
        .map(|(i, _)| i + 1)
        .collect();
    ends.push(features.len());
    Ok(partition_from_ends(features, &ends, Some(threshold)))
}

/// Consecutive chunks of `window` frames; the last may be shorter.
pub fn segment_fixed_window(features: &FrameFeatures, window: usize) -> Result<SegmentPartition, SegmentError> {
    if window == 0 {
        return Err(SegmentError::InvalidWindow);
    }
    let t = features.len();
    let ends: Vec<usize> = (1..=t.div_ceil(window)).map(|c| (c * window).min(t)).collect();
    Ok(partition_from_ends(features, &ends, None))
}

/// Dispatches to the configured segmentation routine.
pub fn segment(features: &FrameFeatures, config: &SegmenterConfig) -> Result<SegmentPartition, SegmentError> {
    match config.mode {
        SegmenterMode::AdaptiveMomentum => {
            let profile = frame_differences(features, config.beta)?;
            segment_momentum(features, profile.tau_adaptive)
        }
        SegmenterMode::AdaptiveFramewise => {
            let profile = frame_differences(features, config.beta)?;
            check_threshold(profile.tau_adaptive)?;
            framewise_from_diffs(features, &profile.diffs, profile.tau_adaptive)
        }
        SegmenterMode::FixedMomentum => segment_momentum(features, config.tau_fixed),
        SegmenterMode::FixedFramewise => segment_framewise(features, config.tau_fixed),
        SegmenterMode::FixedWindow => segment_fixed_window(features, config.window),
    }
}

/// One line of the segments JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsRecord {
    pub video_id: String,
    pub mode: SegmenterMode,
    pub tau_effective: Option<f64>,
    pub segments: Vec<Segment>,
}

/// Parses segments JSON Lines. Each record must be an ordered, contiguous
/// partition starting at frame 1.
pub fn parse_segments(text: &str) -> Result<Vec<SegmentsRecord>, FormatError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| FormatError::MalformedRecord { line: idx + 1, message };
        let rec: SegmentsRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let last = rec.segments.last().map_or(0, |s| s.end);
        validate_partition(&rec.segments, last).map_err(|e| malformed(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}
