//! Deterministic data-parallel helpers.
//!
//! Reductions are chunked at a fixed size and the per-chunk partials are
//! folded sequentially in index order, so results are bit-identical whether
//! the `parallel` feature is on or off and independent of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Sum of `f(idx)` over `0..len`, chunk-deterministic.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let starts: Vec<usize> = (0..len).step_by(CHUNK.max(1)).collect();
    let fold_chunk = |&s: &usize| -> f64 {
        let end = (s + CHUNK).min(len);
        let mut acc = 0.0;
        for idx in s..end {
            acc += f(idx);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = starts.par_iter().map(fold_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = starts.iter().map(fold_chunk).collect();
    partials.iter().sum()
}

/// Fill `out[idx] = f(idx)` for all indices, in parallel when enabled.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (j, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + j);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (idx, slot) in out.iter_mut().enumerate() {
            *slot = f(idx);
        }
    }
}

/// Apply `f` to every element of `items`, in parallel when enabled.
/// Order of side effects within an item is the item's own; items are independent.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, item)| f(i, item));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item);
        }
    }
}

/// Pairwise variant of [`for_each_mut`] over two equal-length slices.
pub fn for_each_mut2<A, B, F>(a: &mut [A], b: &mut [B], f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut A, &mut B) + Sync,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .enumerate()
            .for_each(|(i, (ai, bi))| f(i, ai, bi));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, (ai, bi)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
            f(i, ai, bi);
        }
    }
}

/// Map `f` over `0..len` collecting results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Dot product with chunk-deterministic reduction.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_indexed(a.len(), |i| a[i] * b[i])
}
