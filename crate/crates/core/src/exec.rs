//! Execution helpers for the data-parallel inner loops (solver restarts,
//! selection grids, Monte Carlo trials).
//!
//! With the default `parallel` feature the work is spread over rayon; without
//! it everything runs sequentially with the same results. Outputs are always
//! collected in index order, so downstream reductions are deterministic
//! regardless of thread count.

/// Applies `f` to `0..n` and collects the results in index order, in parallel
/// when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Applies `f` to `0..n` and collects the results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_collect_seq(n, f)
}

/// Sequential twin of [`map_collect`]. Always available; used by the bench
/// suite to compare the two execution paths.
pub fn map_collect_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Caps the global worker pool at `n` threads. Must be called before any
/// parallel work; later calls fail silently (rayon builds the pool once).
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// No-op without the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}
