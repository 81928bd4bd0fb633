//! Column-parallel execution with a sequential fallback.
//!
//! Every helper here hands each closure invocation a disjoint slice and keeps
//! all reductions inside the closure, so the parallel and sequential paths
//! produce bitwise identical results. Without the `parallel` feature every
//! mode runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of grid cells below which `Auto` stays sequential.
pub const AUTO_PARALLEL_CELLS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    Parallel,
    /// Parallel for work sizes at or above [`AUTO_PARALLEL_CELLS`].
    #[default]
    Auto,
}

impl Execution {
    pub fn is_parallel_for(self, work: usize) -> bool {
        if !cfg!(feature = "parallel") {
            return false;
        }
        match self {
            Execution::Sequential => false,
            Execution::Parallel => true,
            Execution::Auto => work >= AUTO_PARALLEL_CELLS,
        }
    }
}

/// Runs `f(j, column_j)` over consecutive `width`-sized chunks of `buf`.
pub fn for_each_column<F>(parallel: bool, width: usize, buf: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        buf.par_chunks_mut(width)
            .enumerate()
            .for_each(|(j, c)| f(j, c));
        return;
    }
    let _ = parallel;
    buf.chunks_mut(width).enumerate().for_each(|(j, c)| f(j, c));
}

/// Like [`for_each_column`] with one extra per-column output value.
pub fn for_each_column_with<T, F>(
    parallel: bool,
    width: usize,
    buf: &mut [f64],
    scalars: &mut [T],
    f: F,
) where
    T: Send,
    F: Fn(usize, &mut [f64], &mut T) + Send + Sync,
{
    debug_assert_eq!(buf.len(), width * scalars.len());
    #[cfg(feature = "parallel")]
    if parallel {
        buf.par_chunks_mut(width)
            .zip(scalars.par_iter_mut())
            .enumerate()
            .for_each(|(j, (c, s))| f(j, c, s));
        return;
    }
    let _ = parallel;
    buf.chunks_mut(width)
        .zip(scalars.iter_mut())
        .enumerate()
        .for_each(|(j, (c, s))| f(j, c, s));
}

/// Fills `out[k] = f(k)`.
pub fn fill_indexed<T, F>(parallel: bool, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        out.par_iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
        return;
    }
    let _ = parallel;
    out.iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
}

/// Maps `f` over `items`, preserving order.
pub fn map_items<I, T, F>(parallel: bool, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let mut a: Vec<f64> = (0..64).map(|k| k as f64).collect();
        let mut b = a.clone();
        let body = |j: usize, c: &mut [f64]| {
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|v| *v = (*v + s).sin() * j as f64);
        };
        for_each_column(true, 8, &mut a, body);
        for_each_column(false, 8, &mut b, body);
        assert_eq!(a, b);

        let items = [1.0f64, 2.0, 3.0];
        assert_eq!(
            map_items(true, &items, |v| v * 2.0),
            map_items(false, &items, |v| v * 2.0)
        );
    }

    #[test]
    fn auto_threshold() {
        assert!(!Execution::Auto.is_parallel_for(16));
        assert!(!Execution::Sequential.is_parallel_for(1 << 20));
        assert_eq!(
            Execution::Parallel.is_parallel_for(1),
            cfg!(feature = "parallel")
        );
    }
}
