//! Small dense-vector kernels shared by the segmenter and the retriever.
//!
//! Frame and caption embeddings are stored as `f32`; every reduction here
//! accumulates in `f64`.

/// Dot product of two `f32` slices accumulated in `f64`.
#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..4 {
            acc[l] += ca[l] as f64 * cb[l] as f64;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dot product of an `f32` slice with an `f64` slice.
#[inline]
pub fn dot_mixed(a: &[f32], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(&x, &y)| x as f64 * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..4 {
            acc[l] += ca[l] as f64 * cb[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Single-precision dot product with eight independent accumulators.
///
/// Used only as a coarse prefilter; callers must bound its error.
#[inline]
pub fn dot_f32_fast(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let mut tail = 0.0f32;
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn norm_f32(a: &[f32]) -> f64 {
    dot_f32(a, a).sqrt()
}

pub fn norm_f64(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Arithmetic mean of a set of `f32` rows, in `f64`.
///
/// Panics if `rows` is empty.
pub fn mean_rows<'a, I>(rows: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut sum = vec![0.0f64; dim];
    let mut n = 0usize;
    for row in rows {
        for (s, &x) in sum.iter_mut().zip(row) {
            *s += x as f64;
        }
        n += 1;
    }
    assert!(n > 0, "mean of an empty row set");
    let inv = n as f64;
    sum.iter_mut().for_each(|s| *s /= inv);
    sum
}

/// Half the squared Euclidean distance; equals `1 - <a, b>` for unit vectors
/// and is exactly zero for identical inputs.
#[inline]
pub fn half_sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        * 0.5
}
