//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures in order. Every helper produces results in input order,
//! so output is identical under either build and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Element count below which splitting work is not worth it.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 1 << 14;

/// `f(&mut dst[i], &src[i])` for every `i`.
pub(crate) fn zip_mut_for_each<A, B, F>(dst: &mut [A], src: &[B], f: F)
where
    A: Send,
    B: Sync,
    F: Fn(&mut A, &B) + Sync + Send,
{
    debug_assert_eq!(dst.len(), src.len());
    #[cfg(feature = "parallel")]
    {
        dst.par_chunks_mut(MIN_CHUNK)
            .zip(src.par_chunks(MIN_CHUNK))
            .for_each(|(d, s)| d.iter_mut().zip(s).for_each(|(a, b)| f(a, b)));
    }
    #[cfg(not(feature = "parallel"))]
    {
        dst.iter_mut().zip(src).for_each(|(a, b)| f(a, b));
    }
}

/// `f(offset, chunk)` over consecutive chunks of `chunk_len` elements.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk_len, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk_len, c));
    }
}

/// Ordered map over a slice.
pub(crate) fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Ordered map over `0..n`.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
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

/// Runs `f` on a pool of `workers` threads. Sequential builds ignore the count.
pub fn with_workers<R, F>(workers: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if workers == 0 {
        return Err(Error::InvalidParams("worker count must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}

/// Whether this build runs data-parallel.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_preserve_order() {
        let v: Vec<usize> = (0..100_000).collect();
        assert_eq!(map_slice(&v, |x| x * 2)[99_999], 199_998);
        assert_eq!(map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
        let mut dst = vec![0usize; 70_000];
        for_each_chunk_mut(&mut dst, 1000, |off, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = off + k;
            }
        });
        assert!(dst.iter().enumerate().all(|(i, &x)| i == x));
        let mut a = vec![1u32; 40_000];
        zip_mut_for_each(&mut a, &v[..40_000], |x, &y| *x += y as u32);
        assert_eq!(a[39_999], 40_000);
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(with_workers(0, || ()).is_err());
        assert_eq!(with_workers(2, || 7).unwrap(), 7);
    }
}
