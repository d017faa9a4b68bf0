//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails or overruns its time budget.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dvcprep_core::feature_io::{self, load_datastore, Event, EventSet};
use dvcprep_core::localization::{evaluate, Interval, SegmentPrediction, DEFAULT_THRESHOLDS};
use dvcprep_core::pipeline::{self, run_pipeline, PipelineConfig, SynthSpec};
use dvcprep_core::retrieval::retrieve_topk;
use dvcprep_core::saliency::{compute_weights_for, event_weight, ReweightConfig, WeightDesign};
use dvcprep_core::segmenter::{frame_differences, segment, segment_framewise, segment_momentum};
use dvcprep_core::{FeatureMetadata, FrameFeatures, RetrievalConfig, SegmenterConfig, SegmenterMode};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ranges(p: &dvcprep_core::SegmentPartition) -> Vec<(usize, usize)> {
    p.segments.iter().map(|s| (s.start, s.end)).collect()
}

fn closed_form_weight() -> Outcome {
    let cfg = ReweightConfig {
        alpha: 10.0,
        design: WeightDesign::SigmoidCenter,
        rng_seed: 0,
    };
    let full = EventSet::new("v", 100.0, vec![Event::new(0.0, 100.0, "")]).unwrap();
    let w = event_weight(0, 50, 100, &full, &cfg).unwrap();
    let expected = common::sigmoid(5.0).powi(2);
    ensure((w - expected).abs() < 1e-12, || format!("W = {w}, closed form {expected}"))?;
    ensure((w - 0.98661).abs() < 1e-4, || format!("W = {w}, expected 0.98661"))?;

    // Start of [30 s, 100 s] lands exactly on frame 30 of 100.
    let ev = EventSet::new("v", 100.0, vec![Event::new(30.0, 100.0, "")]).unwrap();
    let w = event_weight(0, 30, 100, &ev, &cfg).unwrap();
    let right = common::sigmoid(10.0 * (1.0 - 0.3));
    let left = w / right;
    ensure((left - 0.5).abs() < 1e-9, || format!("left factor {left}"))?;
    Ok(format!("W(0.5) = {w:.6}, left factor at boundary = {left:.12}", w = expected))
}

fn sharpness_limit() -> Outcome {
    let mut rng = common::rng(2);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for case in 0..200 {
        let frames = rng.random_range(10..=200);
        let duration = rng.random_range(5.0..500.0);
        let n = rng.random_range(1..=4);
        let events: Vec<Event> = (0..n)
            .map(|_| {
                let a = rng.random_range(0.0..duration);
                let b = rng.random_range(0.0..duration);
                let (s, e) = if a < b { (a, b) } else { (b, a) };
                Event::new(s, e.max(s + duration * 1e-3).min(duration), "")
            })
            .collect();
        let set = EventSet::new(format!("v{case}"), duration, events).unwrap();
        let soft = compute_weights_for(
            frames,
            &set,
            &ReweightConfig {
                alpha: 1e4,
                design: WeightDesign::SigmoidCenter,
                rng_seed: 0,
            },
        )
        .unwrap();
        let hard = compute_weights_for(
            frames,
            &set,
            &ReweightConfig {
                alpha: 1e4,
                design: WeightDesign::HardBinary,
                rng_seed: 0,
            },
        )
        .unwrap();
        let bounds: Vec<f64> = set
            .events
            .iter()
            .flat_map(|e| [e.start_sec / duration, e.end_sec / duration])
            .collect();
        for i in 1..=frames {
            let p = i as f64 / frames as f64;
            if bounds.iter().all(|b| (p - b).abs() >= 1.0 / frames as f64) {
                let gap = (soft.as_slice()[i - 1] - hard.as_slice()[i - 1]).abs();
                worst = worst.max(gap);
                checked += 1;
                ensure(gap <= 1e-3, || format!("case {case} frame {i}: |soft - hard| = {gap}"))?;
            }
        }
    }
    Ok(format!("200 configurations, {checked} frames, max gap {worst:.3e}"))
}

/// Equal to the oracle, or, when some decision is an exact tie with `tau`
/// (the oracle flips between `tau -+ 1e-12`), equal to one resolution of it.
fn matches_oracle(
    got: &[(usize, usize)],
    tau: f64,
    oracle: impl Fn(f64) -> Vec<(usize, usize)>,
    ties: &mut usize,
) -> Result<(), String> {
    let want = oracle(tau);
    if got == want.as_slice() {
        return Ok(());
    }
    let (lo, hi) = (oracle(tau - 1e-12), oracle(tau + 1e-12));
    if lo != hi && (got == lo.as_slice() || got == hi.as_slice()) {
        *ties += 1;
        return Ok(());
    }
    Err(format!("got {got:?}, oracle {want:?}"))
}

fn segmentation_oracle() -> Outcome {
    let mut rng = common::rng(3);
    let mut total_segments = 0usize;
    let mut ties = 0usize;
    for case in 0..1000 {
        let t = rng.random_range(2..=64);
        let d = rng.random_range(1..=16);
        let scenes = rng.random_range(1..=6);
        let noise = rng.random_range(0.01..0.8);
        let f = common::features("v", common::scene_rows(&mut rng, t, d, scenes, noise));
        let frames = common::unit_frames(&f);
        let diffs = common::dist_diffs(&frames);
        let tau = if rng.random_bool(0.5) {
            rng.random_range(0.0..1.2)
        } else {
            common::adaptive_tau(&frames, 1.0)
        };
        let mm = ranges(&segment_momentum(&f, tau).unwrap());
        matches_oracle(&mm, tau, |x| common::momentum(&frames, x), &mut ties)
            .map_err(|e| format!("case {case} momentum: {e}"))?;
        let fw = ranges(&segment_framewise(&f, tau).unwrap());
        matches_oracle(&fw, tau, |x| common::framewise_with(&diffs, x), &mut ties)
            .map_err(|e| format!("case {case} framewise: {e}"))?;

        let tau_ref = common::adaptive_tau(&frames, 1.0);
        for (mode, momentum) in [(SegmenterMode::AdaptiveMomentum, true), (SegmenterMode::AdaptiveFramewise, false)] {
            let cfg = SegmenterConfig {
                mode,
                ..SegmenterConfig::default()
            };
            let got = ranges(&segment(&f, &cfg).unwrap());
            let oracle = |x: f64| {
                if momentum {
                    common::momentum(&frames, x)
                } else {
                    common::framewise_with(&diffs, x)
                }
            };
            matches_oracle(&got, tau_ref, oracle, &mut ties).map_err(|e| format!("case {case} {mode:?}: {e}"))?;
        }
        total_segments += mm.len();
    }
    Ok(format!(
        "1000 inputs, {total_segments} momentum segments, all partitions equal ({ties} exact ties at tau)"
    ))
}

fn hand_traced() -> Outcome {
    let e = |k: usize| {
        let mut v = vec![0.0f32; 3];
        v[k] = 1.0;
        v
    };
    let f = common::features("v", vec![e(0), e(0), e(0), e(1), e(1), e(1)]);
    let profile = frame_differences(&f, 1.0).unwrap();
    ensure(profile.diffs == vec![0.0, 0.0, 1.0, 0.0, 0.0], || format!("diffs {:?}", profile.diffs))?;
    ensure((profile.tau_adaptive - 0.6).abs() < 1e-12, || format!("tau {}", profile.tau_adaptive))?;
    let p = segment(&f, &SegmenterConfig::default()).unwrap();
    ensure(ranges(&p) == vec![(1, 3), (4, 6)], || format!("partition {:?}", ranges(&p)))?;
    Ok(format!("tau = {}, partition [(1,3),(4,6)]", profile.tau_adaptive))
}

fn retrieval_exactness() -> Outcome {
    let mut rng = common::rng(5);
    let mut ties = 0usize;
    for case in 0..500 {
        let n = rng.random_range(1..=400);
        let dim = rng.random_range(1..=48);
        let store = common::random_store(&mut rng, n, dim);
        let k = rng.random_range(1..=n.min(20));
        let query: Vec<f64> = if rng.random_bool(0.3) {
            let j = rng.random_range(0..n);
            store.embedding(j).iter().map(|&v| v as f64 * 3.0).collect()
        } else {
            common::gaussian(&mut rng, dim)
        };
        if query.iter().all(|&x| x == 0.0) {
            continue;
        }
        let got = retrieve_topk(&query, &store, k).unwrap();
        let want = common::topk(&store, &query, k);
        let got_ids: Vec<&str> = got.iter().map(|h| h.caption_id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
        ensure(got_ids == want_ids, || format!("case {case}: got {got_ids:?}, want {want_ids:?}"))?;
        for (h, (_, s)) in got.iter().zip(&want) {
            ensure((h.score - s).abs() < 1e-12, || format!("case {case}: score {} vs {s}", h.score))?;
        }
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
    }
    Ok(format!("500 stores, ids and order equal, {ties} exact ties resolved by id"))
}

fn synthetic_recovery() -> Outcome {
    let mut exact = 0usize;
    let mut precondition = 0usize;
    let mut worst_offset = 0usize;
    let corpora = 200;
    for seed in 0..corpora {
        let spec = SynthSpec {
            videos: 1,
            frames: 100,
            dim: 64,
            min_scenes: 3,
            max_scenes: 8,
            noise: 0.1,
            concepts: 16,
            captions_per_concept: 2,
            seed: seed as u64,
            ..SynthSpec::default()
        };
        let corpus = pipeline::generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let video = &corpus.videos[0];
        let planted = video.planted_boundaries();
        let profile = frame_differences(&video.features, 1.0).unwrap();
        if planted.iter().all(|&b| profile.diffs[b - 1] > profile.tau_adaptive) {
            precondition += 1;
        }
        let p = segment(&video.features, &SegmenterConfig::default()).unwrap();
        let found = p.boundaries();
        if found.len() == planted.len() {
            exact += 1;
            for (a, b) in found.iter().zip(&planted) {
                worst_offset = worst_offset.max(a.abs_diff(*b));
            }
        }
    }
    ensure(precondition == corpora, || format!("planted diffs exceed tau in only {precondition}/{corpora}"))?;
    let rate = exact as f64 / corpora as f64;
    ensure(rate >= 0.95, || format!("exact segment count in {exact}/{corpora}"))?;
    ensure(worst_offset <= 1, || format!("boundary offset up to {worst_offset} frames"))?;
    Ok(format!("exact count in {exact}/{corpora}, max boundary offset {worst_offset}"))
}

fn localization_checks() -> Outcome {
    let truth = vec![EventSet::new(
        "a",
        200.0,
        vec![Event::new(0.0, 40.0, ""), Event::new(50.0, 120.0, ""), Event::new(100.0, 200.0, "")],
    )
    .unwrap()];
    let perfect = vec![SegmentPrediction {
        video_id: "a".into(),
        predicted: truth[0].events.iter().map(|e| Interval::new(e.start_sec, e.end_sec)).collect(),
    }];
    let r = evaluate(&perfect, &truth, &DEFAULT_THRESHOLDS).unwrap();
    ensure(r.f1 == 1.0, || format!("perfect F1 = {}", r.f1))?;

    let truth = vec![EventSet::new("b", 100.0, vec![Event::new(0.0, 100.0, "")]).unwrap()];
    let half = vec![SegmentPrediction {
        video_id: "b".into(),
        predicted: vec![Interval::new(0.0, 50.0)],
    }];
    let r = evaluate(&half, &truth, &DEFAULT_THRESHOLDS).unwrap();
    ensure(r.f1 == 0.5, || format!("half-overlap F1 = {}", r.f1))?;

    let mut rng = common::rng(7);
    for case in 0..500 {
        let videos = rng.random_range(1..=4);
        let mut truth = Vec::new();
        let mut preds = Vec::new();
        for v in 0..videos {
            let d: f64 = rng.random_range(10.0..300.0);
            let iv = |rng: &mut rand_chacha::ChaCha8Rng| {
                let a: f64 = rng.random_range(0.0..d);
                let b: f64 = rng.random_range(0.0..d);
                (a.min(b), a.max(b).max(a.min(b) + 0.01).min(d))
            };
            let events = (0..rng.random_range(1..=5))
                .map(|_| {
                    let (s, e) = iv(&mut rng);
                    Event::new(s, e, "")
                })
                .collect();
            truth.push(EventSet::new(format!("v{v}"), d, events).unwrap());
            preds.push(SegmentPrediction {
                video_id: format!("v{v}"),
                predicted: (0..rng.random_range(0..=6))
                    .map(|_| {
                        let (s, e) = iv(&mut rng);
                        Interval::new(s, e)
                    })
                    .collect(),
            });
        }
        let mut th: Vec<f64> = (0..rng.random_range(2..=6)).map(|_| rng.random_range(0.0..=1.0)).collect();
        th.sort_by(f64::total_cmp);
        let r = evaluate(&preds, &truth, &th).unwrap();
        for w in r.per_threshold.windows(2) {
            ensure(
                w[1].precision <= w[0].precision && w[1].recall <= w[0].recall && w[1].f1 <= w[0].f1,
                || format!("case {case}: metrics rise from {:?} to {:?}", w[0], w[1]),
            )?;
        }
    }
    Ok("perfect F1 = 1, half-overlap F1 = 0.5, monotone on 500 instances".into())
}

fn latency_surface() -> Outcome {
    let concepts = 16;
    let spec = SynthSpec {
        videos: 10,
        frames: 100,
        dim: 768,
        concepts,
        captions_per_concept: 9600 / concepts,
        seed: 8,
        ..SynthSpec::default()
    };
    let corpus = pipeline::generate_synthetic(&spec).map_err(|e| e.to_string())?;
    ensure(corpus.store.len() == 9600, || format!("store size {}", corpus.store.len()))?;
    let features: Vec<FrameFeatures> = corpus.videos.into_iter().map(|v| v.features).collect();
    let report = pipeline::bench_videos(
        &features,
        &corpus.store,
        &SegmenterConfig::default(),
        &RetrievalConfig::default(),
        3,
    )
    .map_err(|e| e.to_string())?;
    let seg = report.segment.mean_ms;
    let search = report.search.per_video.mean_ms;
    ensure(seg < 50.0, || format!("segmentation {seg:.3} ms/video"))?;
    ensure(search < 50.0, || format!("search {search:.3} ms/video"))?;
    Ok(format!(
        "segment {seg:.3} ms/video, search {search:.3} ms/video ({:.1} segments/video)",
        report.segments_per_video.mean
    ))
}

fn format_round_trip() -> Outcome {
    let mut rng = common::rng(9);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..100 {
        let t = rng.random_range(1..=80);
        let d = rng.random_range(1..=64);
        let rows = common::scene_rows(&mut rng, t, d, 3, 0.5);
        let f = FrameFeatures::from_rows(FeatureMetadata::new(format!("vid-{case}"), rng.random_range(1.0..600.0)), rows)
            .map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{case}.sv4f"));
        feature_io::save_features(&f, &path).map_err(|e| e.to_string())?;
        let back = feature_io::load_features(&path).map_err(|e| e.to_string())?;
        ensure(back.meta() == f.meta() && back.dim() == f.dim(), || format!("case {case}: metadata differs"))?;
        let same = back.as_flat().iter().zip(f.as_flat()).all(|(a, b)| a.to_bits() == b.to_bits())
            && back.as_flat().len() == f.as_flat().len();
        ensure(same, || format!("case {case}: feature payload differs"))?;

        let n = rng.random_range(1..=100);
        let store = common::random_store(&mut rng, n, d);
        let (e, c) = (dir.path().join(format!("{case}.emb")), dir.path().join(format!("{case}.jsonl")));
        store.save(&e, &c).map_err(|e| e.to_string())?;
        let back = load_datastore(&e, &c, Some(d)).map_err(|e| e.to_string())?;
        ensure(back.captions() == store.captions(), || format!("case {case}: captions differ"))?;
        let same = back.embeddings_flat().len() == store.embeddings_flat().len()
            && back
                .embeddings_flat()
                .iter()
                .zip(store.embeddings_flat())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("case {case}: datastore payload differs"))?;
    }
    Ok("100 feature files and 100 datastores bit-exact".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus_dir = dir.path().join("corpus");
    pipeline::make_synthetic_corpus(&SynthSpec::default(), &corpus_dir).map_err(|e| e.to_string())?;
    let mut digests = Vec::new();
    for (run, jobs) in [Some(1), Some(4), None].into_iter().enumerate() {
        let mut cfg = PipelineConfig::default();
        cfg.paths.features = corpus_dir.join("features");
        cfg.paths.annotations = corpus_dir.join("annotations.jsonl");
        cfg.paths.store_embeddings = corpus_dir.join("store/embeddings.sv4f");
        cfg.paths.store_captions = corpus_dir.join("store/captions.jsonl");
        cfg.paths.out = dir.path().join(format!("run{run}"));
        cfg.jobs = jobs;
        let m = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        ensure(m.stages.len() == 4, || format!("{} stages", m.stages.len()))?;
        let outputs: Vec<_> = m.stages.iter().map(|s| s.outputs.clone()).collect();
        digests.push((m.output_digest, outputs));
    }
    ensure(digests.windows(2).all(|w| w[0] == w[1]), || "output digests differ between runs".into())?;
    Ok(format!("3 runs (1, 4, all threads), digest {}", &digests[0].0[..16]))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "closed-form weight", 1, closed_form_weight),
        (2, "sharpness limit", 5, sharpness_limit),
        (3, "segmentation oracle equivalence", 30, segmentation_oracle),
        (4, "hand-traced segmentation", 1, hand_traced),
        (5, "retrieval exactness", 30, retrieval_exactness),
        (6, "synthetic recovery", 60, synthetic_recovery),
        (7, "localization metrics", 10, localization_checks),
        (8, "latency surface", 60, latency_surface),
        (9, "format round trip", 10, format_round_trip),
        (10, "determinism", 60, determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("over {budget} s budget; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{name}]: {status} ({:.3} s / {budget} s) {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
