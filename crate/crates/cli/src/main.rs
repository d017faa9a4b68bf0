//! `dvcprep` command-line entry point.
//!
//! Data goes only to the paths given on the command line (or to stdout for
//! reports without `--out`); logs and timing go to stderr. Exit codes are
//! 0 on success, 2 for input or configuration errors, 3 for stage failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvcprep_core::localization::{self, parse_predictions, parse_thresholds};
use dvcprep_core::pipeline::{
    self, bench_videos, build_pool, load_annotation_map, load_feature_set, load_store, make_synthetic_corpus,
    partitions_from_records, PipelineConfig, PipelineError, StageReport, SynthSpec,
};
use dvcprep_core::segmenter::parse_segments;
use dvcprep_core::{feature_io, SegmentRepr, SegmenterMode, WeightDesign};
use tracing::info;

#[derive(Parser)]
#[command(name = "dvcprep", version, about = "Saliency reweighting, adaptive segmentation and caption retrieval for video features")]
struct Cli {
    /// TOML config supplying defaults for every option; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Report per-video wall time on stderr.
    #[arg(long, global = true)]
    timing: bool,
    /// Log filter (error, warn, info, debug, trace). `RUST_LOG` takes precedence.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute saliency weights and reweighted features.
    Reweight(ReweightArgs),
    /// Split videos into segments and write segment representations.
    Segment(SegmentArgs),
    /// Retrieve top-k captions per segment and write guidance vectors.
    Retrieve(RetrieveArgs),
    /// Score predicted intervals against annotations.
    EvalLoc(EvalArgs),
    /// Time segmentation and exhaustive search per video.
    Bench(BenchArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Run reweight, segment, retrieve and eval and write a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ReweightArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    design: Option<WeightDesign>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    mode: Option<SegmenterMode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "tau")]
    tau_fixed: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StoreArgs {
    /// Directory holding `embeddings.sv4f` and `captions.jsonl`.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    store_embeddings: Option<PathBuf>,
    #[arg(long)]
    store_captions: Option<PathBuf>,
    /// Keep the first ceil(fraction * N) store entries.
    #[arg(long)]
    subset_fraction: Option<f64>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    segments: PathBuf,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repr: Option<SegmentRepr>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long)]
    thresholds: Option<String>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Videos to segment and search with.
    #[arg(long, alias = "queries")]
    features: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    mode: Option<SegmenterMode>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Synthetic workload used when no inputs are given.
    #[arg(long, default_value_t = 10)]
    videos: usize,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value_t = 9600)]
    store_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    min_scenes: Option<usize>,
    #[arg(long)]
    max_scenes: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    concepts: Option<usize>,
    #[arg(long)]
    captions_per_concept: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    design: Option<WeightDesign>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mode: Option<SegmenterMode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repr: Option<SegmentRepr>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl StoreArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        if let Some(dir) = self.store {
            cfg.paths.store_embeddings = dir.join("embeddings.sv4f");
            cfg.paths.store_captions = dir.join("captions.jsonl");
        }
        set(&mut cfg.paths.store_embeddings, self.store_embeddings);
        set(&mut cfg.paths.store_captions, self.store_captions);
        set(&mut cfg.subset_fraction, self.subset_fraction);
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_toml(&text)
        }
    }
}

fn require<'a>(path: &'a Path, flag: &str) -> Result<&'a Path, PipelineError> {
    if path.as_os_str().is_empty() {
        Err(PipelineError::Config(format!("--{flag} is required")))
    } else {
        Ok(path)
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), PipelineError> {
    let mut json = serde_json::to_string_pretty(value).expect("serializable report");
    json.push('\n');
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| PipelineError::Output(e.to_string()))?;
            }
            std::fs::write(p, json).map_err(|e| PipelineError::Output(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn report_timing(timing: bool, stage: &StageReport, ids: &[&str]) {
    info!(stage = %stage.name, videos = stage.videos, wall_ms = stage.timing.wall_ms, "stage finished");
    if !timing {
        return;
    }
    for (id, ms) in ids.iter().zip(&stage.timing.video_ms) {
        eprintln!("timing\t{}\t{id}\t{ms:.3} ms", stage.name);
    }
    let t = &stage.timing;
    eprintln!(
        "timing\t{}\t{} videos\twall {:.3} ms\tmean {:.3} ms/video\tp95 {:.3} ms",
        stage.name, stage.videos, t.wall_ms, t.per_video.mean_ms, t.per_video.p95_ms
    );
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let timing = cli.timing;
    match cli.command {
        Command::Reweight(a) => {
            set(&mut cfg.paths.features, a.features);
            set(&mut cfg.paths.annotations, a.annotations);
            set(&mut cfg.paths.out, a.out);
            set(&mut cfg.design, a.design);
            set(&mut cfg.alpha, a.alpha);
            set(&mut cfg.seed, a.seed);
            cfg.jobs = a.jobs.or(cfg.jobs);
            cfg.validate()?;
            let features = load_feature_set(require(&cfg.paths.features, "features")?)?;
            let annotations = load_annotation_map(require(&cfg.paths.annotations, "annotations")?)?;
            let out = require(&cfg.paths.out, "out")?;
            let pool = build_pool(cfg.jobs)?;
            let report = pipeline::reweight_stage(&features, &annotations, &cfg.reweight(), out, &pool)?;
            report_timing(timing, &report, &ids(&features));
        }
        Command::Segment(a) => {
            set(&mut cfg.paths.features, a.features);
            set(&mut cfg.paths.out, a.out);
            set(&mut cfg.mode, a.mode);
            set(&mut cfg.beta, a.beta);
            set(&mut cfg.tau_fixed, a.tau_fixed);
            set(&mut cfg.window, a.window);
            cfg.jobs = a.jobs.or(cfg.jobs);
            cfg.validate()?;
            let features = load_feature_set(require(&cfg.paths.features, "features")?)?;
            let out = require(&cfg.paths.out, "out")?;
            let pool = build_pool(cfg.jobs)?;
            let (_, report) = pipeline::segment_stage(&features, &cfg.segmenter(), out, &pool)?;
            report_timing(timing, &report, &ids(&features));
        }
        Command::Retrieve(a) => {
            set(&mut cfg.paths.features, a.features);
            set(&mut cfg.paths.out, a.out);
            a.store.apply(&mut cfg);
            set(&mut cfg.k, a.k);
            set(&mut cfg.repr, a.repr);
            cfg.jobs = a.jobs.or(cfg.jobs);
            cfg.validate()?;
            let features = load_feature_set(require(&cfg.paths.features, "features")?)?;
            let records = parse_segments(&read_text(&a.segments)?)
                .map_err(|e| PipelineError::Input(format!("{}: {e}", a.segments.display())))?;
            let partitions = partitions_from_records(&features, &records)?;
            let store = load_store(
                require(&cfg.paths.store_embeddings, "store-embeddings")?,
                require(&cfg.paths.store_captions, "store-captions")?,
                cfg.subset_fraction,
            )?;
            let out = require(&cfg.paths.out, "out")?;
            let pool = build_pool(cfg.jobs)?;
            let report = pipeline::retrieve_stage(&features, &partitions, &store, &cfg.retrieval(), out, &pool)?;
            report_timing(timing, &report, &ids(&features));
        }
        Command::EvalLoc(a) => {
            if let Some(t) = a.thresholds {
                cfg.thresholds = parse_thresholds(&t).map_err(|e| PipelineError::Config(e.to_string()))?;
            }
            let start = std::time::Instant::now();
            let preds = parse_predictions(&read_text(&a.pred)?)
                .map_err(|e| PipelineError::Input(format!("{}: {e}", a.pred.display())))?;
            let truth = feature_io::load_annotations(&a.truth)
                .map_err(|e| PipelineError::Input(format!("{}: {e}", a.truth.display())))?;
            let report = localization::evaluate(&preds, &truth, &cfg.thresholds).map_err(|e| match e {
                localization::LocalizationError::InvalidThresholds => PipelineError::Config(e.to_string()),
                other => PipelineError::Input(other.to_string()),
            })?;
            write_json(&report, a.out.as_deref())?;
            if timing {
                eprintln!("timing\teval-loc\t{} videos\twall {:.3} ms", preds.len(), start.elapsed().as_secs_f64() * 1e3);
            }
        }
        Command::Bench(a) => {
            a.store.apply(&mut cfg);
            set(&mut cfg.mode, a.mode);
            set(&mut cfg.k, a.k);
            cfg.validate()?;
            let (features, store) = match a.features {
                Some(path) => {
                    let features = load_feature_set(&path)?;
                    let store = load_store(
                        require(&cfg.paths.store_embeddings, "store-embeddings")?,
                        require(&cfg.paths.store_captions, "store-captions")?,
                        cfg.subset_fraction,
                    )?;
                    (features, store)
                }
                None => {
                    let concepts = 16usize;
                    let base = SynthSpec::default();
                    let max_scenes = (a.frames / base.min_scene_len).clamp(1, base.max_scenes);
                    let spec = SynthSpec {
                        videos: a.videos,
                        frames: a.frames,
                        dim: a.dim,
                        max_scenes,
                        min_scenes: base.min_scenes.min(max_scenes),
                        concepts,
                        captions_per_concept: a.store_size.div_ceil(concepts),
                        seed: a.seed,
                        ..base
                    };
                    info!(?spec, "generating synthetic bench workload");
                    let corpus = pipeline::generate_synthetic(&spec)?;
                    let store = corpus.store.subset(a.store_size as f64 / corpus.store.len() as f64);
                    let store = if cfg.subset_fraction < 1.0 { store.subset(cfg.subset_fraction) } else { store };
                    (corpus.videos.into_iter().map(|v| v.features).collect(), store)
                }
            };
            let report = bench_videos(&features, &store, &cfg.segmenter(), &cfg.retrieval(), a.repeats)?;
            write_json(&report, a.out.as_deref())?;
            if timing {
                eprintln!(
                    "timing\tbench\tsegment {:.3} ms/video\tsearch {:.3} ms/video",
                    report.segment.mean_ms, report.search.per_video.mean_ms
                );
            }
        }
        Command::Synth(a) => {
            let mut spec = SynthSpec::default();
            set(&mut spec.videos, a.videos);
            set(&mut spec.frames, a.frames);
            set(&mut spec.dim, a.dim);
            set(&mut spec.min_scenes, a.min_scenes);
            set(&mut spec.max_scenes, a.max_scenes);
            set(&mut spec.noise, a.noise);
            set(&mut spec.concepts, a.concepts);
            set(&mut spec.captions_per_concept, a.captions_per_concept);
            spec.seed = a.seed.unwrap_or(cfg.seed);
            let start = std::time::Instant::now();
            let corpus = make_synthetic_corpus(&spec, &a.out)?;
            info!(videos = corpus.videos.len(), captions = corpus.store.len(), out = %a.out.display(), "corpus written");
            if timing {
                eprintln!("timing\tsynth\t{} videos\twall {:.3} ms", corpus.videos.len(), start.elapsed().as_secs_f64() * 1e3);
            }
        }
        Command::Pipeline(a) => {
            set(&mut cfg.paths.features, a.features);
            set(&mut cfg.paths.annotations, a.annotations);
            set(&mut cfg.paths.out, a.out);
            a.store.apply(&mut cfg);
            set(&mut cfg.design, a.design);
            set(&mut cfg.alpha, a.alpha);
            set(&mut cfg.mode, a.mode);
            set(&mut cfg.beta, a.beta);
            set(&mut cfg.k, a.k);
            set(&mut cfg.repr, a.repr);
            set(&mut cfg.seed, a.seed);
            cfg.jobs = a.jobs.or(cfg.jobs);
            let manifest = pipeline::run_pipeline(&cfg)?;
            for stage in &manifest.stages {
                if timing {
                    let t = &stage.timing;
                    eprintln!(
                        "timing\t{}\t{} videos\twall {:.3} ms\t{:.3} ms/video",
                        stage.name, stage.videos, t.wall_ms, t.ms_per_video
                    );
                }
            }
            info!(digest = %manifest.output_digest, "pipeline finished");
        }
    }
    Ok(())
}

fn ids(features: &[feature_io::FrameFeatures]) -> Vec<&str> {
    features.iter().map(|f| f.video_id()).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(&cli.log_level))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = serde_json::json!({
                "error": {
                    "kind": e.kind(),
                    "message": e.to_string(),
                    "exit_code": e.exit_code(),
                }
            });
            if let PipelineError::Stage { stage, .. } = &e {
                record["error"]["stage"] = serde_json::Value::from(*stage);
            }
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
