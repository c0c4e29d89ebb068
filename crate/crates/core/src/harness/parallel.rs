//! Replication fan-out. Results always come back in replication order.

use std::ops::Range;

/// Maps `f` over `reps` sequentially.
pub fn map_reps_sequential<T, F>(reps: Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    reps.map(f).collect()
}

/// Maps `f` over `reps` on the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_reps_parallel<T, F>(reps: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    reps.into_par_iter().map(f).collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn map_reps<T, F>(reps: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_reps_parallel(reps, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_reps_sequential(reps, f)
    }
}
