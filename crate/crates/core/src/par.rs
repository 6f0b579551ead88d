//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) independent jobs and lattice sweeps
//! run on the rayon pool. Without it, or with [`Exec::Sequential`], the same
//! closures run in order on the calling thread. Results are returned in input
//! order either way, so downstream statistics are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for job lists and lattice sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` when the crate was built with rayon, otherwise `Sequential`.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Order-preserving map over independent jobs.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Fill `out[i] = f(i)` for every index.
pub fn fill_indexed<F>(exec: Exec, out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => out
            .par_chunks_mut(4096)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * 4096;
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = f(base + k);
                }
            }),
        _ => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
    }
}

/// Max of `f(i)` over `0..n` (0 for empty ranges). The reduction is exact, so
/// the result does not depend on scheduling.
pub fn max_indexed<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).reduce(|| 0.0, f64::max),
        _ => (0..n).map(f).fold(0.0, f64::max),
    }
}

/// Number of worker threads `Exec::Parallel` will use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
