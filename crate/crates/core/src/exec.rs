//! Sequential / data-parallel execution switch for per-cell kernels.
//!
//! With the `parallel` feature (default) large grids are processed with rayon;
//! without it everything runs on the calling thread. Small grids always run
//! sequentially because the split overhead dominates below a few thousand cells.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Grids smaller than this are processed sequentially under [`Exec::Auto`].
pub const PAR_MIN_CELLS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Parallel for large inputs when the feature is enabled.
    #[default]
    Auto,
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Exec {
    fn parallel_for(self, n: usize) -> bool {
        match self {
            Exec::Sequential => false,
            #[cfg(feature = "parallel")]
            Exec::Parallel => true,
            Exec::Auto => cfg!(feature = "parallel") && n >= PAR_MIN_CELLS,
        }
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map_indices<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel_for(n) {
            return (0..n).into_par_iter().map(f).collect();
        }
        let _ = self.parallel_for(n);
        (0..n).map(f).collect()
    }

    /// `items.iter().map(f).collect()`, possibly in parallel. Output order
    /// always matches input order.
    pub fn map_slice<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel_for(items.len()) {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = Exec::Sequential.map_indices(50_000, f);
        let b = Exec::Auto.map_indices(50_000, f);
        assert_eq!(a, b);
        #[cfg(feature = "parallel")]
        assert_eq!(a, Exec::Parallel.map_indices(50_000, f));
    }
}
