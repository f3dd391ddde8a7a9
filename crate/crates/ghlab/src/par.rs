//! Row-parallel fills for symmetric distance matrices.
//!
//! Every all-pairs computation in the crate funnels through these helpers so
//! that the `parallel` feature toggles rayon in exactly one place. Rows are
//! written independently (entry `(i, j)` is computed once for `i <= j` and
//! mirrored), so the parallel and sequential fills produce identical bytes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fills the upper triangle of an `n × n` symmetric matrix sequentially and
/// mirrors it. `f(i, j)` is invoked once per unordered pair with `i <= j`.
pub fn pairwise_symmetric_seq<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if j >= i { f(i, j) } else { 0.0 }).collect())
        .collect();
    mirror_upper(&mut rows);
    rows
}

/// Row-parallel variant of [`pairwise_symmetric_seq`]; same output bytes.
#[cfg(feature = "parallel")]
pub fn pairwise_symmetric_par<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j >= i { f(i, j) } else { 0.0 }).collect())
        .collect();
    mirror_upper(&mut rows);
    rows
}

/// Dispatches to the parallel fill when the `parallel` feature is enabled.
pub fn pairwise_symmetric<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        pairwise_symmetric_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_symmetric_seq(n, f)
    }
}

fn mirror_upper(rows: &mut [Vec<f64>]) {
    let n = rows.len();
    for i in 0..n {
        for j in 0..i {
            rows[i][j] = rows[j][i];
        }
    }
}

/// Maps `f` over `0..n`, in parallel when the feature allows.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_dispatch_agree_bitwise() {
        let f = |i: usize, j: usize| ((i * 31 + j) as f64).sqrt() * 0.25 + (j - i) as f64;
        let a = pairwise_symmetric_seq(17, f);
        let b = pairwise_symmetric(17, f);
        assert_eq!(a, b);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_fill_matches_sequential() {
        let f = |i: usize, j: usize| 1.0 / (1.0 + (i + j) as f64) + (j as f64 - i as f64);
        assert_eq!(pairwise_symmetric_seq(33, f), pairwise_symmetric_par(33, f));
    }

    #[test]
    fn mirror_is_symmetric() {
        let m = pairwise_symmetric(9, |i, j| (i + 2 * j) as f64);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }
}
