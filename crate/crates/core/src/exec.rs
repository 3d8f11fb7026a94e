//! Execution helpers: parallel/sequential index maps and deterministic sums.
//!
//! With the `parallel` feature the indexed maps run on rayon above a size
//! threshold; below it (and without the feature) they are plain loops. The
//! output `Vec` is always in index order, and sums are always reduced in a
//! fixed pairwise pattern, so results are reproducible independently of the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Problems smaller than this are not worth farming out to the thread pool.
pub const PAR_MIN: usize = 4096;

/// Maps `f` over `0..n`, in parallel when enabled and `n` is large enough.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Parallel map for a small number of independent heavy jobs (multi-start
/// solves, seeded repetitions); no size threshold.
pub fn map_runs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return (0..n).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    (0..n).map(f).collect()
}

/// Sequential variant of [`map_indices`], used by the benchmarks and as the
/// body of the no-rayon build.
pub fn map_indices_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sizes the global thread pool; a no-op once the pool exists and in the
/// sequential build.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}

/// Pairwise (cascade) summation. Deterministic for a fixed input ordering and
/// noticeably more accurate than a running sum on long vectors.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Maximum of `|v_i|` over a slice; 0 for an empty slice.
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
    }

    #[test]
    fn pairwise_is_permutation_stable_to_roundoff() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut w = v.clone();
        w.reverse();
        assert!((pairwise_sum(&v) - pairwise_sum(&w)).abs() < 1e-12);
    }

    #[test]
    fn map_orders_output_by_index() {
        let out = map_indices(10_000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
