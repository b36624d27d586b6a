//! Worker-count plumbing for the data-parallel kernels.
//!
//! Kernels are written so each output element is reduced sequentially by one
//! worker; the worker count therefore never changes results.

/// Runs `f` with `workers` threads. `1` runs inline on the caller's thread,
/// `0` uses one worker per available core. `f` receives whether it may use
/// rayon parallel iterators.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce(bool) -> R + Send,
{
    if workers == 1 {
        return f(false);
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| f(true)),
        Err(_) => f(false),
    }
}

/// Worker count actually used for a requested value.
pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        workers
    }
}
