//! Preprocessing toolkit for dense video captioning.
//!
//! The crate turns per-frame embeddings and timestamp annotations into the
//! auxiliary signals a captioning model trains on:
//!
//! * [`saliency`] converts event timestamps into per-frame importance weights
//!   (sigmoid center mask and its ablation variants) and applies them.
//! * [`segmenter`] splits a frame sequence into semantically coherent segments
//!   with an adaptive threshold and momentum accumulation, plus fixed baselines.
//! * [`retrieval`] builds segment queries and runs exact top-k cosine search
//!   over a caption embedding datastore.
//! * [`localization`] scores predicted event intervals with IoU-thresholded
//!   precision, recall and F1.
//! * [`pipeline`] wires the stages together with deterministic manifests and
//!   generates synthetic corpora with planted scene structure.
//!
//! All on-disk data goes through [`feature_io`].

pub mod feature_io;
pub mod localization;
pub mod pipeline;
pub mod retrieval;
pub mod saliency;
pub mod segmenter;
pub mod vector;

pub use feature_io::{
    CaptionDatastore, Event, EventSet, FeatureMetadata, FormatError, FrameFeatures, Sv4fRecord,
};
pub use localization::{Interval, LocalizationReport, SegmentPrediction};
pub use retrieval::{Hit, RetrievalConfig, RetrievalResult, SegmentRepr};
pub use saliency::{ReweightConfig, SaliencyWeights, WeightDesign};
pub use segmenter::{DifferenceProfile, Segment, SegmentPartition, SegmenterConfig, SegmenterMode};
