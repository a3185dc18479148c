//! Ordered map over independent tasks.
//!
//! With the `parallel` feature the tasks run on the current rayon pool;
//! otherwise sequentially. Output order is the task order either way.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
pub fn map_tasks<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_tasks<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}
