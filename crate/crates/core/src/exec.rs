//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper here computes each output element with the same sequential
//! arithmetic regardless of the execution path, so results are bit-identical
//! whether or not the `parallel` feature is enabled.

/// Row blocks smaller than this many elements are always processed inline.
pub const PARALLEL_MIN_ELEMS: usize = 1 << 14;

pub mod sequential {
    /// Calls `f(row_index, row)` for every `cols`-wide row of `out`.
    pub fn for_each_row<F>(out: &mut [f64], cols: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if cols == 0 {
            return;
        }
        for (i, row) in out.chunks_mut(cols).enumerate() {
            f(i, row);
        }
    }

    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub mod parallel {
    use rayon::prelude::*;

    pub fn for_each_row<F>(out: &mut [f64], cols: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if cols == 0 {
            return;
        }
        out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    }

    /// Order-preserving parallel map.
    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

/// Row-wise kernel dispatch: parallel for large outputs when the feature is on.
pub fn for_each_row<F>(out: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PARALLEL_MIN_ELEMS {
            return parallel::for_each_row(out, cols, f);
        }
    }
    sequential::for_each_row(out, cols, f)
}

/// Maps independent work items (sweep points, seeds). Output order follows input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        parallel::map(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sequential::map(items, f)
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
