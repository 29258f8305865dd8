//! Order-preserving data-parallel helpers. Results never depend on the
//! schedule: every output slot is produced by exactly one closure call.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the worker pool used by [`map_range`]. Only the first call in a
/// process takes effect; returns whether this call did.
#[cfg(feature = "parallel")]
pub fn set_thread_count(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_count(_n: usize) -> bool {
    true
}
