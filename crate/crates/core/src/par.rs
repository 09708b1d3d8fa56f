//! Thin wrappers over the data-parallel loops.
//!
//! With the `parallel` feature the loops run on rayon; without it they run
//! sequentially. Every call site partitions work into chunks with disjoint
//! outputs and performs reductions in a fixed order outside these helpers,
//! so both modes produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f(chunk_index, chunk)` to each `chunk`-sized mutable window of
/// `data`; the last window may be shorter.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Order-preserving indexed map.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Apply `f(part_index, part)` to disjoint mutable slices.
pub(crate) fn for_each_part<T, F>(parts: Vec<&mut [T]>, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    parts.into_par_iter().enumerate().for_each(|(i, p)| f(i, p));
    #[cfg(not(feature = "parallel"))]
    parts.into_iter().enumerate().for_each(|(i, p)| f(i, p));
}

/// Split `data` into consecutive mutable slices of the given lengths;
/// together with [`for_each_part`] this is the uneven-partition analogue of
/// [`for_each_chunk_mut`].
/// The lengths must sum to `data.len()`.
pub(crate) fn split_lengths<'a, T>(mut data: &'a mut [T], lens: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(lens.len());
    for &l in lens {
        let (head, tail) = data.split_at_mut(l);
        out.push(head);
        data = tail;
    }
    debug_assert!(data.is_empty(), "split_lengths: lengths do not cover the slice");
    out
}
