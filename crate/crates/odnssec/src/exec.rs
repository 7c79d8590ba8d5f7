//! Replication driver: independent jobs fan out across a thread pool when
//! the `parallel` feature is on, with a sequential path always available.
//! Results come back in index order either way, so reductions are
//! deterministic regardless of thread interleaving.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `n` independent jobs and collects results in index order.
#[cfg(feature = "parallel")]
pub fn run_jobs<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(job).collect()
}

/// Runs `n` independent jobs and collects results in index order.
#[cfg(not(feature = "parallel"))]
pub fn run_jobs<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    run_jobs_seq(n, job)
}

/// Sequential twin of `run_jobs`; the benchmark baseline.
pub fn run_jobs_seq<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(job).collect()
}
