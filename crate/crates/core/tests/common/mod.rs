//! Straight-line reference implementations and input generators shared by
//! the integration tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use dvcprep_core::feature_io::CaptionRecord;
use dvcprep_core::{CaptionDatastore, FeatureMetadata, FrameFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Piecewise-constant scenes plus Gaussian noise, as `f32` rows.
pub fn scene_rows(rng: &mut ChaCha8Rng, frames: usize, dim: usize, scenes: usize, noise: f64) -> Vec<Vec<f32>> {
    let centers: Vec<Vec<f64>> = (0..scenes.max(1)).map(|_| unit(&gaussian(rng, dim))).collect();
    let mut cuts: Vec<usize> = (0..scenes.max(1) - 1).map(|_| rng.random_range(1..frames.max(2))).collect();
    cuts.sort_unstable();
    (0..frames)
        .map(|i| {
            let c = &centers[cuts.iter().filter(|&&k| k <= i).count()];
            let n = gaussian(rng, dim);
            c.iter().zip(&n).map(|(a, b)| (a + noise * b) as f32).collect()
        })
        .collect()
}

pub fn features(id: &str, rows: Vec<Vec<f32>>) -> FrameFeatures {
    let t = rows.len() as f64;
    FrameFeatures::from_rows(FeatureMetadata::new(id, t), rows).unwrap()
}

/// Loaded frames, renormalized in `f64`.
pub fn unit_frames(f: &FrameFeatures) -> Vec<Vec<f64>> {
    f.frames().map(|r| unit(&r.iter().map(|&v| v as f64).collect::<Vec<_>>())).collect()
}

/// `1 - cos` between consecutive unit frames, written as the literal dot product.
pub fn cos_diffs(frames: &[Vec<f64>]) -> Vec<f64> {
    frames.windows(2).map(|w| 1.0 - dot(&w[0], &w[1])).collect()
}

pub fn half_sq(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// `1 - cos` between consecutive unit frames, as `||x - y||^2 / 2`.
pub fn dist_diffs(frames: &[Vec<f64>]) -> Vec<f64> {
    frames.windows(2).map(|w| half_sq(&w[0], &w[1])).collect()
}

/// `mean + beta * population std` of the consecutive differences.
pub fn adaptive_tau(frames: &[Vec<f64>], beta: f64) -> f64 {
    let d = dist_diffs(frames);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    mean + beta * var.sqrt()
}

/// Boundary after frame `i` whenever `1 - cos(x_i, x_{i+1}) > tau`.
pub fn framewise(frames: &[Vec<f64>], tau: f64) -> Vec<(usize, usize)> {
    framewise_with(&dist_diffs(frames), tau)
}

pub fn framewise_with(diffs: &[f64], tau: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 1;
    for (i, &d) in diffs.iter().enumerate() {
        if d > tau {
            out.push((start, i + 1));
            start = i + 2;
        }
    }
    out.push((start, diffs.len() + 1));
    out
}

/// Grows a segment while `1 - <mean of segment, next frame>` stays at or
/// below `tau`, with the mean recomputed from scratch each step.
///
/// For unit frames `1 - <z, x> = ||z - x||^2 / 2 + mean_j ||x_j - z||^2 / 2`;
/// `literal` selects the dot-product form instead.
pub fn momentum_with(frames: &[Vec<f64>], tau: f64, literal: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut members: Vec<&Vec<f64>> = vec![&frames[0]];
    let mut start = 1;
    for (i, x) in frames.iter().enumerate().skip(1) {
        let dim = x.len();
        let mean: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
            .collect();
        let d = if literal {
            1.0 - dot(&mean, x)
        } else {
            let spread = members.iter().map(|m| 2.0 * half_sq(m, &mean)).sum::<f64>() / members.len() as f64;
            half_sq(&mean, x) + 0.5 * spread
        };
        if d > tau {
            out.push((start, i));
            start = i + 1;
            members.clear();
        }
        members.push(x);
    }
    out.push((start, frames.len()));
    out
}

pub fn momentum(frames: &[Vec<f64>], tau: f64) -> Vec<(usize, usize)> {
    momentum_with(frames, tau, false)
}

pub fn mean_of(rows: &[&[f32]]) -> Vec<f64> {
    let dim = rows[0].len();
    (0..dim)
        .map(|j| rows.iter().map(|r| r[j] as f64).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Full sort by cosine similarity, descending, ties by caption id.
pub fn topk(store: &CaptionDatastore, query: &[f64], k: usize) -> Vec<(String, f64)> {
    let qn = dot(query, query).sqrt();
    let mut all: Vec<(String, f64)> = (0..store.len())
        .map(|i| {
            let row: Vec<f64> = store.embedding(i).iter().map(|&v| v as f64).collect();
            let s = dot(&row, query) / (dot(&row, &row).sqrt() * qn);
            (store.caption_id(i).to_owned(), s)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// A random store with some duplicated rows and shuffled ids.
pub fn random_store(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> CaptionDatastore {
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.2) {
            let j = rng.random_range(0..i);
            rows.push(rows[j].clone());
        } else {
            let mut v = gaussian(rng, dim);
            if v.iter().all(|x| x.abs() < 1e-3) {
                v[0] = 1.0;
            }
            rows.push(v.iter().map(|&x| x as f32).collect());
        }
    }
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let captions = ids
        .iter()
        .map(|&i| CaptionRecord {
            caption_id: format!("c{i:05}"),
            text: format!("caption {i}"),
        })
        .collect();
    CaptionDatastore::new(dim, captions, rows.concat()).unwrap()
}
