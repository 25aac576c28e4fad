//! Execution helpers: data-parallel inner loops with a sequential fallback.
//!
//! With the `parallel` feature (default) the `*_par` variants run on the
//! rayon pool and the dispatching functions use them; without it everything
//! is sequential. Results are collected in index order and reduced by a
//! sequential fold, so outputs are bit-identical regardless of how work is
//! scheduled. The criterion bench suite compares the two paths directly.

/// Map `f` over `0..n`, sequentially, collecting in index order.
pub fn indexed_map_seq<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Map `f` over `0..n` on the rayon pool, collecting in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map_par<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n` with the build's execution mode.
#[cfg(feature = "parallel")]
pub fn indexed_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    // Rayon's overhead dominates for very small batches.
    if n < 256 {
        indexed_map_seq(n, f)
    } else {
        indexed_map_par(n, f)
    }
}

/// Map `f` over `0..n` with the build's execution mode.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    indexed_map_seq(n, f)
}

/// Deterministic sum of `f(i)` over `0..n` (parallel map, sequential fold).
pub fn sum_indexed(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    indexed_map(n, f).iter().sum()
}

/// Sequential counterpart of [`sum_indexed`], kept for the bench suite.
pub fn sum_indexed_seq(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        acc += f(i);
    }
    acc
}
