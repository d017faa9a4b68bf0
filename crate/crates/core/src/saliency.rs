//! Timestamp-driven frame importance weights.
//!
//! Frames are indexed `1..=T` and sit at normalized position `i / T`; event
//! boundaries are normalized by the video duration `d`. Each event yields a
//! mask `W_n(i)` and events are merged with an elementwise maximum.
//!
//! [`WeightDesign::SigmoidCenter`] is the product of a rising logistic at the
//! event start and a falling logistic at the event end, with sharpness
//! `alpha`. The other designs are ablation baselines:
//!
//! | design       | `W_n(i)` at position `p`                                             |
//! |--------------|----------------------------------------------------------------------|
//! | HardBinary   | `1` if `s <= p <= e` else `0`                                          |
//! | Gaussian     | `exp(-(p - c)^2 / (2 sd^2))`, `c` = midpoint, `sd` = width / 4         |
//! | Start/End/RandomSkew | `σ(2α(p - (a - w/2))) · σ(2α((a + w/2) - p))`, `w` = width / 2 |
//!
//! where the skew anchor `a` is the event start, the event end, or a seeded
//! uniform draw inside the event.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::feature_io::{EventSet, FeatureMetadata, FrameFeatures, Sv4fRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SaliencyError {
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("frame index {index} outside 1..={frames}")]
    IndexOutOfRange { index: usize, frames: usize },
    #[error("event index {index} outside 0..{events}")]
    EventOutOfRange { index: usize, events: usize },
    #[error("no events to derive weights from")]
    EmptyEventSet,
    #[error("length mismatch: {weights} weights for {frames} frames")]
    LengthMismatch { weights: usize, frames: usize },
    #[error("weight {value} at frame {index} is outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightDesign {
    #[serde(rename = "sigmoid")]
    SigmoidCenter,
    #[serde(rename = "binary")]
    HardBinary,
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "start")]
    StartSkew,
    #[serde(rename = "end")]
    EndSkew,
    #[serde(rename = "random")]
    RandomSkew,
}

impl WeightDesign {
    pub const ALL: [WeightDesign; 6] = [
        WeightDesign::SigmoidCenter,
        WeightDesign::HardBinary,
        WeightDesign::Gaussian,
        WeightDesign::StartSkew,
        WeightDesign::EndSkew,
        WeightDesign::RandomSkew,
    ];

    /// Short CLI name.
    pub fn cli_name(self) -> &'static str {
        match self {
            WeightDesign::SigmoidCenter => "sigmoid",
            WeightDesign::HardBinary => "binary",
            WeightDesign::Gaussian => "gaussian",
            WeightDesign::StartSkew => "start",
            WeightDesign::EndSkew => "end",
            WeightDesign::RandomSkew => "random",
        }
    }
}

impl std::str::FromStr for WeightDesign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WeightDesign::ALL
            .into_iter()
            .find(|d| d.cli_name() == s)
            .ok_or_else(|| format!("unknown weight design {s:?} (expected sigmoid|binary|gaussian|start|end|random)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightConfig {
    pub alpha: f64,
    pub design: WeightDesign,
    /// Only consulted by [`WeightDesign::RandomSkew`].
    pub rng_seed: u64,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            design: WeightDesign::SigmoidCenter,
            rng_seed: 0,
        }
    }
}

impl ReweightConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        if self.alpha.is_finite() && self.alpha > 0.0 {
            Ok(())
        } else {
            Err(SaliencyError::InvalidAlpha(self.alpha))
        }
    }
}

/// Per-frame importance weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SaliencyWeights(Vec<f64>);

impl TryFrom<Vec<f64>> for SaliencyWeights {
    type Error = SaliencyError;

    fn try_from(values: Vec<f64>) -> Result<Self, SaliencyError> {
        Self::new(values)
    }
}

impl From<SaliencyWeights> for Vec<f64> {
    fn from(w: SaliencyWeights) -> Self {
        w.0
    }
}

impl SaliencyWeights {
    pub fn new(values: Vec<f64>) -> Result<Self, SaliencyError> {
        match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(index) => Err(SaliencyError::WeightOutOfRange {
                index,
                value: values[index],
            }),
            None => Ok(Self(values)),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index (0-based) of the largest weight; earliest on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &w) in self.0.iter().enumerate() {
            if best.map_or(true, |(_, b)| w > b) {
                best = Some((i, w));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The center mask `σ(α(p - s)) · σ(α(e - p))` on normalized coordinates.
pub fn sigmoid_center(pos: f64, start: f64, end: f64, alpha: f64) -> f64 {
    sigmoid(alpha * (pos - start)) * sigmoid(alpha * (end - pos))
}

/// Deterministic in-event anchor fraction in `[0, 1)` for the random skew,
/// keyed by `(seed, video_id, event index)`.
fn random_anchor_fraction(seed: u64, video_id: &str, event: usize) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((video_id.len() as u64).to_le_bytes());
    h.update(video_id.as_bytes());
    h.update((event as u64).to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key).random::<f64>()
}

/// Mask value at normalized position `pos` for one event.
fn mask_value(pos: f64, events: &EventSet, n: usize, config: &ReweightConfig) -> f64 {
    let ev = &events.events[n];
    let d = events.duration_sec;
    let start = ev.start_sec / d;
    let end = ev.end_sec / d;
    let alpha = config.alpha;
    let skew = |anchor: f64| {
        let half_width = (ev.end_sec - ev.start_sec) / (2.0 * d);
        sigmoid(2.0 * alpha * (pos - (anchor - half_width / 2.0)))
            * sigmoid(2.0 * alpha * ((anchor + half_width / 2.0) - pos))
    };
    match config.design {
        WeightDesign::SigmoidCenter => sigmoid_center(pos, start, end, alpha),
        WeightDesign::HardBinary => {
            if start <= pos && pos <= end {
                1.0
            } else {
                0.0
            }
        }
        WeightDesign::Gaussian => {
            let center = (ev.start_sec + ev.end_sec) / (2.0 * d);
            let sd = (ev.end_sec - ev.start_sec) / (4.0 * d);
            (-(pos - center).powi(2) / (2.0 * sd * sd)).exp()
        }
        WeightDesign::StartSkew => skew(start),
        WeightDesign::EndSkew => skew(end),
        WeightDesign::RandomSkew => {
            let u = random_anchor_fraction(config.rng_seed, &events.video_id, n);
            skew(start + u * (end - start))
        }
    }
}

/// `W_n(i)` for event `n` (0-based) at frame `i` (1-based) of a `frames`-long video.
pub fn event_weight(
    n: usize,
    i: usize,
    frames: usize,
    events: &EventSet,
    config: &ReweightConfig,
) -> Result<f64, SaliencyError> {
    config.validate()?;
    if i == 0 || i > frames {
        return Err(SaliencyError::IndexOutOfRange { index: i, frames });
    }
    if n >= events.events.len() {
        return Err(SaliencyError::EventOutOfRange {
            index: n,
            events: events.events.len(),
        });
    }
    Ok(mask_value(i as f64 / frames as f64, events, n, config))
}

/// The `N x T` matrix of per-event masks.
pub fn event_weight_matrix(
    frames: usize,
    events: &EventSet,
    config: &ReweightConfig,
) -> Result<Vec<Vec<f64>>, SaliencyError> {
    config.validate()?;
    if events.events.is_empty() {
        return Err(SaliencyError::EmptyEventSet);
    }
    let t = frames as f64;
    Ok((0..events.events.len())
        .map(|n| (1..=frames).map(|i| mask_value(i as f64 / t, events, n, config)).collect())
        .collect())
}

/// Elementwise maximum over per-event rows.
pub fn combine_weights(per_event: &[Vec<f64>]) -> Result<SaliencyWeights, SaliencyError> {
    let first = per_event.first().ok_or(SaliencyError::EmptyEventSet)?;
    let mut out = first.clone();
    for row in &per_event[1..] {
        if row.len() != out.len() {
            return Err(SaliencyError::LengthMismatch {
                weights: row.len(),
                frames: out.len(),
            });
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o = o.max(w);
        }
    }
    Ok(SaliencyWeights(out))
}

/// Weights for a video with `frames` frames.
pub fn compute_weights_for(
    frames: usize,
    events: &EventSet,
    config: &ReweightConfig,
) -> Result<SaliencyWeights, SaliencyError> {
    combine_weights(&event_weight_matrix(frames, events, config)?)
}

pub fn compute_weights(
    features: &FrameFeatures,
    events: &EventSet,
    config: &ReweightConfig,
) -> Result<SaliencyWeights, SaliencyError> {
    compute_weights_for(features.len(), events, config)
}

/// Scales row `i` of a row-major buffer by `weights[i]`.
pub fn apply_weights_raw(data: &[f32], dim: usize, weights: &SaliencyWeights) -> Result<Vec<f32>, SaliencyError> {
    let frames = data.len().checked_div(dim).unwrap_or(0);
    if frames != weights.len() || frames * dim != data.len() {
        return Err(SaliencyError::LengthMismatch {
            weights: weights.len(),
            frames,
        });
    }
    let mut out = Vec::with_capacity(data.len());
    for (row, &w) in data.chunks_exact(dim).zip(weights.as_slice()) {
        out.extend(row.iter().map(|&x| (x as f64 * w) as f32));
    }
    Ok(out)
}

/// Reweighted frames `x_i * W(i)`. The result is not renormalized.
pub fn apply_weights(features: &FrameFeatures, weights: &SaliencyWeights) -> Result<Sv4fRecord, SaliencyError> {
    let data = apply_weights_raw(features.as_flat(), features.dim(), weights)?;
    Ok(Sv4fRecord {
        meta: FeatureMetadata {
            fps_note: features.meta().fps_note.clone(),
            ..FeatureMetadata::new(features.video_id(), features.duration_sec())
        },
        dim: features.dim(),
        data,
    })
}
