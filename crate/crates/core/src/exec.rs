//! Data-parallel execution over independent workers.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it they
//! fall back to a plain loop. Both paths return results in input order.

/// Applies `f` to every item, in parallel when the feature is enabled.
pub fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_mut_parallel(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_mut_sequential(items, f)
    }
}

pub fn map_mut_sequential<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    F: Fn(&mut T) -> R,
{
    items.iter_mut().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_mut_parallel<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter_mut().map(f).collect()
}

/// Runs `f` with at most `workers` concurrent threads.
///
/// `None` keeps the global pool. Without the `parallel` feature everything is
/// sequential anyway and `workers` is ignored.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
