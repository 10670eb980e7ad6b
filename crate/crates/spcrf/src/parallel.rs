//! Deterministic parallel reductions.
//!
//! Results must not depend on the rayon worker count, so sums are formed
//! over fixed-size index chunks: each chunk is accumulated serially and
//! the chunk totals are folded in index order. The chunking, not the
//! scheduler, fixes the floating-point association.

use rayon::prelude::*;

const CHUNK: usize = 1024;

/// Sum of `f(i)` for `i` in `0..n`, bit-reproducible for any worker count.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut acc = 0.0;
            for i in start..end {
                acc += f(i);
            }
            acc
        })
        .collect();
    partials.into_iter().sum()
}

/// Fills `out[i] = f(i)` in parallel. Trivially deterministic; exists so
/// call sites read as intent rather than rayon plumbing.
pub fn map_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
}
