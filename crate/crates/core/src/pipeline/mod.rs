//! Stage runners and the end-to-end pipeline.
//!
//! `reweight -> segment -> retrieve -> eval`. Each stage writes its outputs
//! under its own directory, and [`run_pipeline`] records a manifest with input
//! digests, per-stage output digests, and timings. Timings are excluded from
//! [`Manifest::output_digest`], so two runs over the same inputs and config
//! produce the same digest regardless of thread count.

mod bench;
mod config;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::feature_io::{self, load_annotations, load_datastore, sv4f, CaptionDatastore, EventSet, FrameFeatures, Sv4fRecord};
use crate::localization::{self, Interval, LocalizationReport, SegmentPrediction};
use crate::retrieval::{self, LatencyStats, RetrievalConfig};
use crate::saliency::{self, ReweightConfig};
use crate::segmenter::{self, Segment, SegmentPartition, SegmenterConfig, SegmentsRecord};

pub use bench::{bench_videos, BenchReport, SegmentCountStats};
pub use config::{PipelineConfig, PipelinePaths};
pub use synth::{generate as generate_synthetic, make_synthetic_corpus, SynthCorpus, SynthSpec, SynthVideo};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("output error: {0}")]
    Output(String),
}

impl PipelineError {
    /// 2 for bad input or configuration, 3 for a failing stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Input(_) => 2,
            PipelineError::Stage { .. } | PipelineError::Output(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Input(_) => "input",
            PipelineError::Stage { .. } => "stage",
            PipelineError::Output(_) => "output",
        }
    }

    fn input(e: impl std::fmt::Display) -> Self {
        PipelineError::Input(e.to_string())
    }

    fn output(e: impl std::fmt::Display) -> Self {
        PipelineError::Output(e.to_string())
    }

    fn stage(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> Self {
        move |e| PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<feature_io::FormatError> for PipelineError {
    fn from(e: feature_io::FormatError) -> Self {
        match e {
            feature_io::FormatError::Io(io) => PipelineError::Output(io.to_string()),
            other => PipelineError::Stage {
                stage: "synth",
                message: other.to_string(),
            },
        }
    }
}

/// A file path and the SHA-256 of its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub wall_ms: f64,
    pub ms_per_video: f64,
    pub per_video: LatencyStats,
    /// Compute time of each video, in input order.
    pub video_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub videos: usize,
    /// Paths relative to the stage's output directory.
    pub outputs: Vec<FileDigest>,
    pub timing: StageTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageReport>,
    /// SHA-256 over every stage output path and digest, in stage order.
    pub output_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path, label: String) -> Result<FileDigest, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: label,
        sha256: sha256_hex(&bytes),
    })
}

/// Filesystem-safe stem for a video id.
pub fn file_stem_for(video_id: &str) -> String {
    let s: String = video_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    match s.as_str() {
        "" | "." | ".." => format!("_{s}"),
        _ => s,
    }
}

/// Paths of the `SV4F` files named by `path` (a file, or a directory scanned
/// for `*.sv4f` in name order).
pub fn feature_files(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let meta = std::fs::metadata(path).map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "sv4f"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::input(format!("no .sv4f files in {}", path.display())));
    }
    Ok(files)
}

/// Loads and normalizes every video under `path`. Files without an embedded
/// video id take their file stem.
pub fn load_feature_set(path: &Path) -> Result<Vec<FrameFeatures>, PipelineError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut stems = HashSet::new();
    for file in feature_files(path)? {
        let ctx = |e: &dyn std::fmt::Display| PipelineError::input(format!("{}: {e}", file.display()));
        let mut record = sv4f::load(&file).map_err(|e| ctx(&e))?;
        if record.meta.video_id.is_empty() {
            record.meta.video_id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        let features = FrameFeatures::from_record(record).map_err(|e| ctx(&e))?;
        if !ids.insert(features.video_id().to_owned()) || !stems.insert(file_stem_for(features.video_id())) {
            return Err(PipelineError::input(format!("duplicate video id {:?}", features.video_id())));
        }
        out.push(features);
    }
    Ok(out)
}

pub fn load_annotation_map(path: &Path) -> Result<BTreeMap<String, EventSet>, PipelineError> {
    let sets = load_annotations(path).map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))?;
    Ok(sets.into_iter().map(|s| (s.video_id.clone(), s)).collect())
}

pub fn load_store(embeddings: &Path, captions: &Path, subset_fraction: f64) -> Result<CaptionDatastore, PipelineError> {
    let store = load_datastore(embeddings, captions, None).map_err(PipelineError::input)?;
    Ok(if subset_fraction < 1.0 { store.subset(subset_fraction) } else { store })
}

/// Rebuilds partitions for `features` from parsed segment records.
pub fn partitions_from_records(
    features: &[FrameFeatures],
    records: &[SegmentsRecord],
) -> Result<Vec<SegmentPartition>, PipelineError> {
    let by_id: BTreeMap<&str, &SegmentsRecord> = records.iter().map(|r| (r.video_id.as_str(), r)).collect();
    features
        .iter()
        .map(|f| {
            let rec = by_id
                .get(f.video_id())
                .ok_or_else(|| PipelineError::input(format!("no segments for video {:?}", f.video_id())))?;
            let mut p = SegmentPartition::from_segments(f, rec.segments.clone())
                .map_err(|e| PipelineError::input(format!("segments for {:?}: {e}", f.video_id())))?;
            p.tau_effective = rec.tau_effective;
            Ok(p)
        })
        .collect()
}

pub fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| PipelineError::Config(e.to_string()))
}

/// Writes files under one stage directory and records their digests.
struct StageWriter {
    dir: PathBuf,
    outputs: Vec<FileDigest>,
}

impl StageWriter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(PipelineError::output)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(PipelineError::output)?;
        }
        let mut f = std::fs::File::create(&path).map_err(|e| PipelineError::output(format!("{}: {e}", path.display())))?;
        f.write_all(bytes).map_err(PipelineError::output)?;
        self.outputs.push(FileDigest {
            path: rel.to_owned(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_sv4f(&mut self, rel: &str, record: &Sv4fRecord) -> Result<(), PipelineError> {
        let bytes = sv4f::encode(record).map_err(PipelineError::output)?;
        self.write(rel, &bytes)
    }

    fn finish(self, name: &str, videos: usize, wall: Instant, per_video: &[f64]) -> StageReport {
        let wall_ms = wall.elapsed().as_secs_f64() * 1e3;
        StageReport {
            name: name.to_owned(),
            videos,
            outputs: self.outputs,
            timing: StageTiming {
                wall_ms,
                ms_per_video: if videos == 0 { 0.0 } else { wall_ms / videos as f64 },
                per_video: LatencyStats::from_samples(per_video),
                video_ms: per_video.to_vec(),
            },
        }
    }
}

fn jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable record");
        out.push(b'\n');
    }
    out
}

/// Runs `f` over videos on `pool`, keeping input order and per-video time.
fn per_video<T, R, E, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> Result<(Vec<R>, Vec<f64>), E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    let timed: Vec<(R, f64)> = pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let t = Instant::now();
                f(item).map(|r| (r, t.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<Result<_, E>>()
    })?;
    Ok(timed.into_iter().unzip())
}

#[derive(Serialize)]
struct WeightsRecord<'a> {
    video_id: &'a str,
    design: saliency::WeightDesign,
    alpha: f64,
    weights: &'a [f64],
}

/// Saliency weights (`weights.jsonl`) and reweighted features (`reweighted/*.sv4f`).
pub fn reweight_stage(
    features: &[FrameFeatures],
    annotations: &BTreeMap<String, EventSet>,
    config: &ReweightConfig,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> Result<StageReport, PipelineError> {
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    for f in features {
        if !annotations.contains_key(f.video_id()) {
            return Err(PipelineError::input(format!("no annotations for video {:?}", f.video_id())));
        }
    }
    let wall = Instant::now();
    let (results, times) = per_video(pool, features, |f| {
        let events = &annotations[f.video_id()];
        let w = saliency::compute_weights(f, events, config)?;
        let x = saliency::apply_weights(f, &w)?;
        Ok::<_, saliency::SaliencyError>((w, x))
    })
    .map_err(|e| PipelineError::stage("reweight")(&e))?;

    let mut writer = StageWriter::new(out)?;
    let records: Vec<WeightsRecord> = features
        .iter()
        .zip(&results)
        .map(|(f, (w, _))| WeightsRecord {
            video_id: f.video_id(),
            design: config.design,
            alpha: config.alpha,
            weights: w.as_slice(),
        })
        .collect();
    writer.write("weights.jsonl", &jsonl(&records))?;
    for (f, (_, x)) in features.iter().zip(&results) {
        writer.write_sv4f(&format!("reweighted/{}.sv4f", file_stem_for(f.video_id())), x)?;
    }
    Ok(writer.finish("reweight", features.len(), wall, &times))
}

/// Segments (`segments.jsonl`) and mean representations (`representations/*.sv4f`).
pub fn segment_stage(
    features: &[FrameFeatures],
    config: &SegmenterConfig,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> Result<(Vec<SegmentPartition>, StageReport), PipelineError> {
    let wall = Instant::now();
    let (partitions, times) = per_video(pool, features, |f| segmenter::segment(f, config))
        .map_err(|e| PipelineError::stage("segment")(&e))?;

    let mut writer = StageWriter::new(out)?;
    let records: Vec<SegmentsRecord> = features
        .iter()
        .zip(&partitions)
        .map(|(f, p)| SegmentsRecord {
            video_id: f.video_id().to_owned(),
            mode: config.mode,
            tau_effective: p.tau_effective,
            segments: p.segments.clone(),
        })
        .collect();
    writer.write("segments.jsonl", &jsonl(&records))?;
    for (f, p) in features.iter().zip(&partitions) {
        let rec = Sv4fRecord::from_f64_rows(f.meta().clone(), f.dim(), &p.representations);
        writer.write_sv4f(&format!("representations/{}.sv4f", file_stem_for(f.video_id())), &rec)?;
    }
    let report = writer.finish("segment", features.len(), wall, &times);
    Ok((partitions, report))
}

#[derive(Serialize)]
struct CaptionScore<'a> {
    caption_id: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct GuidanceRef {
    path: String,
    row: usize,
}

#[derive(Serialize)]
struct RetrievalRecord<'a> {
    video_id: &'a str,
    segment_index: usize,
    captions: Vec<CaptionScore<'a>>,
    guidance_ref: GuidanceRef,
}

/// Per-segment top-k captions (`retrieval.jsonl`) and guidance vectors (`guidance/*.sv4f`).
pub fn retrieve_stage(
    features: &[FrameFeatures],
    partitions: &[SegmentPartition],
    store: &CaptionDatastore,
    config: &RetrievalConfig,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> Result<StageReport, PipelineError> {
    if features.len() != partitions.len() {
        return Err(PipelineError::input("features and segment records are not aligned"));
    }
    if store.dim() != features.first().map_or(store.dim(), FrameFeatures::dim) {
        return Err(PipelineError::input(format!(
            "datastore dimension {} does not match feature dimension {}",
            store.dim(),
            features[0].dim()
        )));
    }
    let wall = Instant::now();
    let pairs: Vec<(&FrameFeatures, &SegmentPartition)> = features.iter().zip(partitions).collect();
    let (results, times) = per_video(pool, &pairs, |(f, p)| retrieval::retrieve_for_partition(f, p, store, config))
        .map_err(|e| PipelineError::stage("retrieve")(&e))?;

    let mut writer = StageWriter::new(out)?;
    let mut records = Vec::new();
    for (f, r) in features.iter().zip(&results) {
        let path = format!("guidance/{}.sv4f", file_stem_for(f.video_id()));
        for (m, seg) in r.segments.iter().enumerate() {
            records.push(RetrievalRecord {
                video_id: f.video_id(),
                segment_index: m,
                captions: seg
                    .hits
                    .iter()
                    .map(|h| CaptionScore {
                        caption_id: &h.caption_id,
                        score: h.score,
                    })
                    .collect(),
                guidance_ref: GuidanceRef { path: path.clone(), row: m },
            });
        }
    }
    writer.write("retrieval.jsonl", &jsonl(&records))?;
    for (f, r) in features.iter().zip(&results) {
        let rows: Vec<Vec<f64>> = r.guidance().map(<[f64]>::to_vec).collect();
        let rec = Sv4fRecord::from_f64_rows(f.meta().clone(), store.dim(), &rows);
        writer.write_sv4f(&format!("guidance/{}.sv4f", file_stem_for(f.video_id())), &rec)?;
    }
    Ok(writer.finish("retrieve", features.len(), wall, &times))
}

/// Converts a frame-index segment to seconds on a `duration`-long timeline.
pub fn segment_interval(seg: &Segment, frames: usize, duration: f64) -> Interval {
    let step = duration / frames as f64;
    Interval::new((seg.start - 1) as f64 * step, seg.end as f64 * step)
}

/// Scores segment boundaries as event predictions (`predictions.jsonl`, `report.json`).
pub fn eval_stage(
    features: &[FrameFeatures],
    partitions: &[SegmentPartition],
    annotations: &BTreeMap<String, EventSet>,
    thresholds: &[f64],
    out: &Path,
) -> Result<(LocalizationReport, StageReport), PipelineError> {
    let wall = Instant::now();
    let mut predictions = Vec::with_capacity(features.len());
    let mut truth = Vec::with_capacity(features.len());
    for (f, p) in features.iter().zip(partitions) {
        let events = annotations
            .get(f.video_id())
            .ok_or_else(|| PipelineError::input(format!("no annotations for video {:?}", f.video_id())))?;
        predictions.push(SegmentPrediction {
            video_id: f.video_id().to_owned(),
            predicted: p
                .segments
                .iter()
                .map(|s| segment_interval(s, f.len(), events.duration_sec))
                .collect(),
        });
        truth.push(events.clone());
    }
    let report =
        localization::evaluate(&predictions, &truth, thresholds).map_err(|e| PipelineError::stage("eval")(&e))?;
    let mut writer = StageWriter::new(out)?;
    writer.write("predictions.jsonl", &jsonl(&predictions))?;
    let mut json = serde_json::to_vec_pretty(&report).expect("serializable report");
    json.push(b'\n');
    writer.write("report.json", &json)?;
    let elapsed = wall.elapsed().as_secs_f64() * 1e3;
    let per = vec![elapsed / features.len().max(1) as f64; features.len()];
    Ok((report, writer.finish("eval", features.len(), wall, &per)))
}

fn combined_digest(stages: &[StageReport]) -> String {
    let mut h = Sha256::new();
    for s in stages {
        for o in &s.outputs {
            h.update(s.name.as_bytes());
            h.update(b"/");
            h.update(o.path.as_bytes());
            h.update(b"\0");
            h.update(o.sha256.as_bytes());
            h.update(b"\n");
        }
    }
    hex::encode(h.finalize())
}

/// Runs all four stages and writes `manifest.json` to the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let paths = &config.paths;
    for (name, p) in [
        ("features", &paths.features),
        ("annotations", &paths.annotations),
        ("store_embeddings", &paths.store_embeddings),
        ("store_captions", &paths.store_captions),
    ] {
        if p.as_os_str().is_empty() {
            return Err(PipelineError::Config(format!("missing path: {name}")));
        }
    }
    if paths.out.as_os_str().is_empty() {
        return Err(PipelineError::Config("missing path: out".into()));
    }

    let mut inputs = Vec::new();
    for file in feature_files(&paths.features)? {
        inputs.push(digest_file(&file, file.display().to_string())?);
    }
    for p in [&paths.annotations, &paths.store_embeddings, &paths.store_captions] {
        inputs.push(digest_file(p, p.display().to_string())?);
    }

    let features = load_feature_set(&paths.features)?;
    let annotations = load_annotation_map(&paths.annotations)?;
    let store = load_store(&paths.store_embeddings, &paths.store_captions, config.subset_fraction)?;
    let pool = build_pool(config.jobs)?;
    let out = &paths.out;

    let reweight = reweight_stage(&features, &annotations, &config.reweight(), &out.join("reweight"), &pool)?;
    let (partitions, segment) = segment_stage(&features, &config.segmenter(), &out.join("segment"), &pool)?;
    let retrieve = retrieve_stage(&features, &partitions, &store, &config.retrieval(), &out.join("retrieve"), &pool)?;
    let (_, eval) = eval_stage(&features, &partitions, &annotations, &config.thresholds, &out.join("eval"))?;

    let stages = vec![reweight, segment, retrieve, eval];
    let manifest = Manifest {
        tool: "dvcprep".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs,
        output_digest: combined_digest(&stages),
        stages,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("serializable manifest");
    json.push(b'\n');
    std::fs::write(out.join("manifest.json"), json).map_err(PipelineError::output)?;
    Ok(manifest)
}
