//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction is evaluated in fixed-size chunks whose partial sums are
//! combined pairwise in index order, so results are bit-identical whether the
//! chunks run on one thread or many.

use num_complex::Complex64;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Chunk length used by the chunked reductions.
pub const CHUNK: usize = 1024;

/// Route all helpers through the sequential path at runtime.
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// `(0..len).map(f).collect()`, possibly in parallel; output order is preserved.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Map over a slice, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_range(items.len(), |i| f(&items[i]))
}

fn chunks(len: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(len))
        .collect()
}

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum_complex(a) + pairwise_sum_complex(b)
        }
    }
}

/// Deterministic sum of `f(i)` over `0..len`.
pub fn sum_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts = map_slice(&chunks(len, CHUNK), |r| {
        r.clone().fold(0.0, |acc, i| acc + f(i))
    });
    pairwise_sum(&parts)
}

/// Deterministic complex sum of `f(i)` over `0..len`.
pub fn sum_range_complex<F>(len: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync + Send,
{
    let parts = map_slice(&chunks(len, CHUNK), |r| {
        r.clone()
            .fold(Complex64::new(0.0, 0.0), |acc, i| acc + f(i))
    });
    pairwise_sum_complex(&parts)
}

/// Deterministic maximum of `f(i)`; `f64::NEG_INFINITY` for an empty range.
pub fn max_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts = map_slice(&chunks(len, CHUNK), |r| {
        r.clone().fold(f64::NEG_INFINITY, |acc, i| acc.max(f(i)))
    });
    parts.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Run `f` on a dedicated pool with `threads` workers (sequentially without the feature).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}
