//! Data-parallel sample execution.
//!
//! Estimators touch every sample independently and reduce by summation, so
//! the work is mapped over sample indices.  Per-sample randomness comes
//! from substreams derived from the master seed by index, which makes the
//! result a pure function of (seed, config) no matter how many workers run
//! the map.  The `parallel` feature switches the map to rayon; the
//! sequential path is compiled unconditionally and benchmarked against it.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference path, always available; the bench suite compares it
/// against the parallel map.
pub fn map_indexed_sequential<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Runs `f` on a rayon pool of the given size ("workers"); with the
/// sequential build the pool size is ignored.
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R>(_workers: usize, f: impl FnOnce() -> R) -> R {
    f()
}
