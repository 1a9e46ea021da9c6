//! Thin data-parallel layer.
//!
//! With the `parallel` feature (default) these helpers dispatch to rayon;
//! without it they fall back to plain sequential iterators. Every helper
//! produces results whose values do not depend on the number of worker
//! threads: work is split into disjoint output slices and reductions run
//! over fixed-size chunks summed in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by the order-fixed reductions.
pub const REDUCTION_CHUNK: usize = 4096;

/// Number of worker threads available to the data-parallel kernels.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Calls `f(index, chunk)` for every `chunk_len`-sized chunk of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Calls `f(index, item)` for every item.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    #[cfg(not(feature = "parallel"))]
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Evaluates `f` on `0..n` and collects the results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
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

/// Sum of `f(i)` over `0..n`, reduced in a thread-count independent order.
pub fn sum_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let nchunks = n.div_ceil(REDUCTION_CHUNK);
    let partial = map_range(nchunks, |c| {
        let lo = c * REDUCTION_CHUNK;
        let hi = (lo + REDUCTION_CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.iter().sum()
}

/// Splits `data` into consecutive mutable pieces at the given offsets.
///
/// `offsets` has one more entry than the number of pieces, starts at 0 and
/// ends at `data.len()`.
pub fn split_at_offsets<'a, T>(mut data: &'a mut [T], offsets: &[usize]) -> Vec<&'a mut [T]> {
    debug_assert_eq!(offsets.first().copied(), Some(0));
    debug_assert_eq!(offsets.last().copied(), Some(data.len()));
    let mut out = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let (head, tail) = std::mem::take(&mut data).split_at_mut(w[1] - w[0]);
        out.push(head);
        data = tail;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_range_matches_naive() {
        let n = 3 * REDUCTION_CHUNK + 17;
        let s = sum_range(n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
    }

    #[test]
    fn split_offsets_covers_everything() {
        let mut v: Vec<usize> = (0..10).collect();
        let parts = split_at_offsets(&mut v, &[0, 3, 3, 7, 10]);
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[0], &[0, 1, 2]);
        assert!(parts[1].is_empty());
        assert_eq!(parts[3], &[7, 8, 9]);
    }
}
