//! Replication-parallel execution with results returned in index order.
//!
//! The worker count comes from the `WEXP_THREADS` environment variable
//! (default: available parallelism). Every replication draws from its own
//! counter-based stream and results are merged in index order, so outputs
//! are identical for any worker count.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

static POOL: OnceLock<ThreadPool> = OnceLock::new();

/// Worker count requested through `WEXP_THREADS`, if any.
pub fn requested_threads() -> Option<usize> {
    std::env::var("WEXP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

fn pool() -> &'static ThreadPool {
    POOL.get_or_init(|| {
        let threads = requested_threads().unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    })
}

/// Number of workers of the shared pool.
pub fn worker_count() -> usize {
    pool().current_num_threads()
}

/// Evaluate `f(rep)` for `rep in 0..count` and return results in index order.
pub fn par_map<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    pool().install(|| (0..count).into_par_iter().map(&f).collect())
}

/// Like [`par_map`] for fallible work; the first error in index order wins.
pub fn try_par_map<T, E, F>(count: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    let results: Vec<Result<T, E>> = par_map(count, f);
    results.into_iter().collect()
}
