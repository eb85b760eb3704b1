//! Data-parallel execution helpers with a sequential fallback.
//!
//! Everything here is deterministic: reductions always combine fixed-size
//! chunks in index order, so results are bit-identical for any thread count
//! and for the sequential build (`--no-default-features`).
//!
//! The `*_seq` variants are always compiled; the unsuffixed entry points
//! dispatch to rayon when the `parallel` feature is on. Benches compare the
//! two directly.

/// Chunk size for grid loops and reductions. Fixed so that summation order
/// does not depend on the worker count.
pub const CHUNK: usize = 8192;

/// Apply `f(chunk_index, chunk)` over fixed-size chunks of `data`, sequentially.
pub fn for_chunks_mut_seq<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
    T: Send,
{
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Apply `f(chunk_index, chunk)` over fixed-size chunks of `data` in parallel.
#[cfg(feature = "parallel")]
pub fn for_chunks_mut_par<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
    T: Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_chunks_mut_par<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
    T: Send,
{
    for_chunks_mut_seq(data, chunk, f);
}

/// Dispatching chunk loop used by the grid kernels.
#[inline]
pub fn for_chunks_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync,
    T: Send,
{
    for_chunks_mut_par(data, chunk, f);
}

/// Deterministic chunked sum of `f(i)` over `0..len`: per-chunk partial sums
/// are combined in index order regardless of how chunks were scheduled.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials = partial_sums(len, &f);
    partials.into_iter().sum()
}

fn partial_sums<F>(len: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = len.div_ceil(CHUNK).max(1);
    let mut partials = vec![0.0; n_chunks];
    for_chunks_mut(&mut partials, 1, |ci, out| {
        let start = ci * CHUNK;
        let end = (start + CHUNK).min(len);
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        out[0] = acc;
    });
    partials
}

/// Deterministic chunked minimum of `f(i)` over `0..len`.
pub fn min_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = len.div_ceil(CHUNK).max(1);
    let mut partials = vec![f64::INFINITY; n_chunks];
    for_chunks_mut(&mut partials, 1, |ci, out| {
        let start = ci * CHUNK;
        let end = (start + CHUNK).min(len);
        let mut acc = f64::INFINITY;
        for i in start..end {
            acc = acc.min(f(i));
        }
        out[0] = acc;
    });
    partials.into_iter().fold(f64::INFINITY, f64::min)
}

/// Deterministic chunked maximum of `f(i)` over `0..len`.
pub fn max_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    -min_indexed(len, |i| -f(i))
}

/// Map a function over items of an indexed range, collecting results in order.
/// Used for independent trajectories and randomized suites.
pub fn map_collect<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}
