//! Replicate-level parallelism.
//!
//! With the `parallel` feature, replicates run on a rayon pool; without it
//! they run in order on the calling thread. Results always come back in
//! index order, and each replicate owns its random stream, so the output
//! does not depend on the schedule.

use crate::error::{Error, Result};

pub fn map_sequential<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Runs `f` for every index `0..n`, in parallel when available.
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(n, f)
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    if threads == Some(0) {
        return Err(Error::Config("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    {
        match threads {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?
                .install(f),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}
