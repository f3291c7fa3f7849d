//! Data-parallel dispatch with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] maps work items
//! on the rayon pool; without it every mode runs sequentially. Results are
//! always returned in index order, so callers reduce them deterministically.

/// Execution strategy for embarrassingly parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this build can actually run work in parallel.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f` with at most `jobs` worker threads (`None` keeps the global pool).
pub fn with_jobs<R, F>(jobs: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}
