//! Event localization metrics.
//!
//! At each IoU threshold `t`, a predicted interval counts as correct when its
//! best IoU against any ground-truth event of the same video is `>= t`
//! (precision), and a ground-truth event counts as found when its best IoU
//! against any prediction of the same video is `>= t` (recall). Counts are
//! pooled over all videos. F1 is computed per threshold, then precision,
//! recall and F1 are each averaged over the thresholds.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_io::{EventSet, FormatError};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Error, PartialEq)]
pub enum LocalizationError {
    #[error("prediction for unknown video {0:?}")]
    UnknownVideo(String),
    #[error("invalid interval [{start}, {end}] in video {video_id:?}")]
    InvalidInterval { video_id: String, start: f64, end: f64 },
    #[error("thresholds must be a nonempty list of values in [0, 1]")]
    InvalidThresholds,
}

/// A time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_sec: f64,
    pub end_sec: f64,
}

impl Interval {
    pub fn new(start_sec: f64, end_sec: f64) -> Self {
        Self { start_sec, end_sec }
    }

    pub fn is_valid(&self) -> bool {
        self.start_sec.is_finite() && self.end_sec.is_finite() && self.start_sec < self.end_sec
    }

    pub fn length(&self) -> f64 {
        self.end_sec - self.start_sec
    }
}

/// Intersection over union of two intervals, measured on the set union.
pub fn iou(a: Interval, b: Interval) -> f64 {
    let inter = (a.end_sec.min(b.end_sec) - a.start_sec.max(b.start_sec)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub video_id: String,
    pub predicted: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub thresholds: Vec<f64>,
    pub per_threshold: Vec<ThresholdMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
    /// Set when there were no predictions at all; precision is reported as 0.
    pub empty_predictions: bool,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against ground truth.
pub fn evaluate(
    predictions: &[SegmentPrediction],
    truth: &[EventSet],
    thresholds: &[f64],
) -> Result<LocalizationReport, LocalizationError> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(LocalizationError::InvalidThresholds);
    }
    let truth_by_id: HashMap<&str, &EventSet> = truth.iter().map(|t| (t.video_id.as_str(), t)).collect();
    let mut preds_by_id: HashMap<&str, Vec<Interval>> = HashMap::new();
    for p in predictions {
        if !truth_by_id.contains_key(p.video_id.as_str()) {
            return Err(LocalizationError::UnknownVideo(p.video_id.clone()));
        }
        for iv in &p.predicted {
            if !iv.is_valid() {
                return Err(LocalizationError::InvalidInterval {
                    video_id: p.video_id.clone(),
                    start: iv.start_sec,
                    end: iv.end_sec,
                });
            }
        }
        preds_by_id.entry(p.video_id.as_str()).or_default().extend(&p.predicted);
    }

    // Best IoU of each prediction and of each ground-truth event.
    let mut pred_best = Vec::new();
    let mut gt_best = Vec::new();
    for set in truth {
        let gts: Vec<Interval> = set.events.iter().map(|e| Interval::new(e.start_sec, e.end_sec)).collect();
        let preds = preds_by_id.get(set.video_id.as_str()).map_or(&[][..], Vec::as_slice);
        for &p in preds {
            pred_best.push(gts.iter().map(|&g| iou(p, g)).fold(0.0, f64::max));
        }
        for &g in &gts {
            gt_best.push(preds.iter().map(|&p| iou(p, g)).fold(0.0, f64::max));
        }
    }

    let per_threshold: Vec<ThresholdMetrics> = thresholds
        .iter()
        .map(|&t| {
            let precision = ratio(pred_best.iter().filter(|&&b| b >= t).count(), pred_best.len());
            let recall = ratio(gt_best.iter().filter(|&&b| b >= t).count(), gt_best.len());
            ThresholdMetrics {
                threshold: t,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let n = per_threshold.len() as f64;
    let avg = |f: fn(&ThresholdMetrics) -> f64| per_threshold.iter().map(f).sum::<f64>() / n;
    Ok(LocalizationReport {
        thresholds: thresholds.to_vec(),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        per_threshold,
        num_predictions: pred_best.len(),
        num_ground_truth: gt_best.len(),
        empty_predictions: pred_best.is_empty(),
    })
}

/// Parses prediction JSON Lines: `{video_id, predicted: [{start_sec, end_sec}]}`.
pub fn parse_predictions(text: &str) -> Result<Vec<SegmentPrediction>, FormatError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| FormatError::MalformedRecord { line: idx + 1, message };
        let rec: SegmentPrediction = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if let Some(bad) = rec.predicted.iter().find(|iv| !iv.is_valid()) {
            return Err(malformed(format!("invalid interval [{}, {}]", bad.start_sec, bad.end_sec)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Parses a comma-separated threshold list such as `0.3,0.5,0.7,0.9`.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, LocalizationError> {
    let parsed: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match parsed {
        Ok(v) if !v.is_empty() && v.iter().all(|t| (0.0..=1.0).contains(t)) => Ok(v),
        _ => Err(LocalizationError::InvalidThresholds),
    }
}
