use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::localization::DEFAULT_THRESHOLDS;
use crate::retrieval::{RetrievalConfig, SegmentRepr};
use crate::saliency::{ReweightConfig, WeightDesign};
use crate::segmenter::{SegmenterConfig, SegmenterMode};

use super::PipelineError;

/// Input and output locations for a pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelinePaths {
    /// An `SV4F` file or a directory of them.
    pub features: PathBuf,
    pub annotations: PathBuf,
    pub store_embeddings: PathBuf,
    pub store_captions: PathBuf,
    pub out: PathBuf,
}

/// Full pipeline configuration. Defaults are `alpha = 10`, `beta = 1`, `k = 10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub design: WeightDesign,
    pub mode: SegmenterMode,
    pub repr: SegmentRepr,
    pub tau_fixed: f64,
    pub window: usize,
    pub seed: u64,
    pub subset_fraction: f64,
    pub thresholds: Vec<f64>,
    /// Worker threads for per-video work; `None` uses all cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub paths: PipelinePaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 1.0,
            k: 10,
            design: WeightDesign::SigmoidCenter,
            mode: SegmenterMode::AdaptiveMomentum,
            repr: SegmentRepr::MeanPool,
            tau_fixed: 0.3,
            window: 10,
            seed: 0,
            subset_fraction: 1.0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            jobs: None,
            paths: PipelinePaths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn reweight(&self) -> ReweightConfig {
        ReweightConfig {
            alpha: self.alpha,
            design: self.design,
            rng_seed: self.seed,
        }
    }

    pub fn segmenter(&self) -> SegmenterConfig {
        SegmenterConfig {
            mode: self.mode,
            beta: self.beta,
            tau_fixed: self.tau_fixed,
            window: self.window,
        }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            k: self.k,
            segment_repr: self.repr,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_owned()));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !self.beta.is_finite() || !self.tau_fixed.is_finite() {
            return bad("beta and tau_fixed must be finite");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return bad("subset_fraction must be in (0, 1]");
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("thresholds must be a nonempty list in [0, 1]");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be >= 1");
        }
        Ok(())
    }
}
