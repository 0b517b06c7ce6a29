//! Data-parallel helpers. With the `parallel` feature these fan out over the
//! rayon pool; without it they run the same closures in order. Every helper
//! assigns work by index, so results are bit-identical either way.

/// Below this many scalar elements a kernel stays on the calling thread.
pub const MIN_PARALLEL_LEN: usize = 1 << 15;

/// Calls `f(chunk_index, chunk)` for consecutive `chunk_len` slices of `data`.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if data.len() >= MIN_PARALLEL_LEN && data.len() > chunk_len {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// `(0..n).map(f).collect()`, in parallel when `work` (an estimate of the
/// total scalar work) is large enough to pay for the fan-out.
pub fn map_indices<T, F>(n: usize, work: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n > 1 && work >= MIN_PARALLEL_LEN {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = work;
    (0..n).map(f).collect()
}

/// Runs independent jobs (sweep cells, repeated seeds) concurrently.
pub fn map_jobs<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    items.into_iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
