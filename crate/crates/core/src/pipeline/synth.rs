//! Seeded synthetic corpora with planted scene structure.
//!
//! Each video is a sequence of scenes. A scene is a constant "concept"
//! direction plus isotropic Gaussian noise; consecutive scenes use different
//! concepts. Annotations mark every scene as one event, so event boundaries
//! coincide with the planted change points. The caption datastore holds a
//! cluster of embeddings around every concept direction.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::feature_io::{
    save_features, write_annotations, CaptionDatastore, CaptionRecord, Event, EventSet, FeatureMetadata,
    FrameFeatures,
};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub videos: usize,
    pub frames: usize,
    pub dim: usize,
    pub min_scenes: usize,
    pub max_scenes: usize,
    pub min_scene_len: usize,
    /// Standard deviation of the per-frame noise relative to the unit-norm
    /// concept direction (per-coordinate std is `noise / sqrt(dim)`).
    pub noise: f64,
    pub concepts: usize,
    pub captions_per_concept: usize,
    /// Noise of caption embeddings around their concept.
    pub caption_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            videos: 10,
            frames: 100,
            dim: 64,
            min_scenes: 3,
            max_scenes: 8,
            min_scene_len: 4,
            noise: 0.1,
            concepts: 16,
            captions_per_concept: 20,
            caption_noise: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.videos == 0 || self.frames == 0 || self.dim == 0 || self.concepts == 0 || self.captions_per_concept == 0 {
            return bad("synthetic corpus sizes must be positive".into());
        }
        if self.min_scenes == 0 || self.min_scenes > self.max_scenes {
            return bad(format!("invalid scene range {}..={}", self.min_scenes, self.max_scenes));
        }
        if self.max_scenes > 1 && self.concepts < 2 {
            return bad("need at least 2 concepts for multi-scene videos".into());
        }
        if self.max_scenes * self.min_scene_len.max(1) > self.frames {
            return bad(format!(
                "{} scenes of at least {} frames do not fit in {} frames",
                self.max_scenes, self.min_scene_len, self.frames
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0 && self.caption_noise.is_finite() && self.caption_noise >= 0.0) {
            return bad("noise levels must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub features: FrameFeatures,
    pub events: EventSet,
    /// Planted scenes as inclusive 1-based frame ranges.
    pub scenes: Vec<(usize, usize)>,
    pub scene_concepts: Vec<usize>,
}

impl SynthVideo {
    /// 1-based frames after which a planted boundary falls.
    pub fn planted_boundaries(&self) -> Vec<usize> {
        self.scenes.iter().rev().skip(1).rev().map(|&(_, e)| e).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub videos: Vec<SynthVideo>,
    pub store: CaptionDatastore,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn noisy(rng: &mut ChaCha8Rng, dir: &[f64], noise: f64) -> Vec<f32> {
    let scale = noise / (dir.len() as f64).sqrt();
    let v: Vec<f64> = dir.iter().map(|&d| d + scale * { let z: f64 = StandardNormal.sample(rng); z }).collect();
    unit(v).into_iter().map(|x| x as f32).collect()
}

/// Random scene lengths summing to `frames`, each at least `min_len`.
fn scene_lengths(rng: &mut ChaCha8Rng, frames: usize, scenes: usize, min_len: usize) -> Vec<usize> {
    let slack = frames - scenes * min_len;
    let mut cuts: Vec<usize> = (0..scenes - 1).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut lens = Vec::with_capacity(scenes);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(slack)) {
        lens.push(min_len + c - prev);
        prev = c;
    }
    lens
}

/// Generates a corpus; identical specs give identical corpora.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus, PipelineError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let concepts: Vec<Vec<f64>> = (0..spec.concepts).map(|_| unit(gaussian_vec(&mut rng, spec.dim))).collect();

    let mut captions = Vec::new();
    let mut embeddings = Vec::new();
    for (c, dir) in concepts.iter().enumerate() {
        for j in 0..spec.captions_per_concept {
            captions.push(CaptionRecord {
                caption_id: format!("cap{c:03}_{j:03}"),
                text: format!("concept {c} caption {j}"),
            });
            embeddings.extend(noisy(&mut rng, dir, spec.caption_noise));
        }
    }
    let store = CaptionDatastore::new(spec.dim, captions, embeddings)?;

    let width = spec.videos.to_string().len().max(3);
    let mut videos = Vec::with_capacity(spec.videos);
    for v in 0..spec.videos {
        let video_id = format!("synth{v:0width$}");
        let n_scenes = rng.random_range(spec.min_scenes..=spec.max_scenes);
        let lens = scene_lengths(&mut rng, spec.frames, n_scenes, spec.min_scene_len.max(1));
        let mut scene_concepts = Vec::with_capacity(n_scenes);
        for s in 0..n_scenes {
            let mut c = rng.random_range(0..spec.concepts);
            if s > 0 {
                while c == scene_concepts[s - 1] {
                    c = rng.random_range(0..spec.concepts);
                }
            }
            scene_concepts.push(c);
        }

        let mut rows = Vec::with_capacity(spec.frames);
        let mut scenes = Vec::with_capacity(n_scenes);
        let mut events = Vec::with_capacity(n_scenes);
        let mut start = 1;
        for (s, &len) in lens.iter().enumerate() {
            let end = start + len - 1;
            let dir = &concepts[scene_concepts[s]];
            for _ in 0..len {
                rows.push(noisy(&mut rng, dir, spec.noise));
            }
            scenes.push((start, end));
            // One frame per second: frame i covers [i - 1, i).
            events.push(Event::new(
                (start - 1) as f64,
                end as f64,
                format!("concept {}", scene_concepts[s]),
            ));
            start = end + 1;
        }
        let duration = spec.frames as f64;
        let meta = FeatureMetadata {
            video_id: video_id.clone(),
            duration_sec: duration,
            fps_note: Some("1 fps synthetic".into()),
        };
        videos.push(SynthVideo {
            features: FrameFeatures::from_rows(meta, rows)?,
            events: EventSet::new(video_id, duration, events)?,
            scenes,
            scene_concepts,
        });
    }
    Ok(SynthCorpus { videos, store })
}

/// Writes `features/<video>.sv4f`, `annotations.jsonl`,
/// `store/embeddings.sv4f` and `store/captions.jsonl` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Output(e.to_string());
    std::fs::create_dir_all(dir.join("features")).map_err(io)?;
    std::fs::create_dir_all(dir.join("store")).map_err(io)?;
    for v in &corpus.videos {
        save_features(&v.features, dir.join("features").join(format!("{}.sv4f", v.features.video_id())))?;
    }
    let sets: Vec<EventSet> = corpus.videos.iter().map(|v| v.events.clone()).collect();
    write_annotations(&sets, dir.join("annotations.jsonl"))?;
    corpus
        .store
        .save(dir.join("store").join("embeddings.sv4f"), dir.join("store").join("captions.jsonl"))?;
    Ok(())
}

/// Generates and writes a corpus in one step.
pub fn make_synthetic_corpus(spec: &SynthSpec, dir: &Path) -> Result<SynthCorpus, PipelineError> {
    let corpus = generate(spec)?;
    write_corpus(&corpus, dir)?;
    Ok(corpus)
}
