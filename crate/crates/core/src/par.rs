//! Execution mode for data-parallel loops.
//!
//! Every helper here preserves input order in its output, and callers reduce
//! the per-item results sequentially. Switching between [`Execution::Sequential`]
//! and [`Execution::Parallel`] therefore never changes a floating-point result.

/// Rows per block for chunked accumulation. Fixed so that block boundaries do
/// not depend on the thread count.
pub const ROW_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..len`, returning results in index order.
pub fn map_range<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, returning results in slice order.
pub fn map_slice<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Half-open row ranges of at most [`ROW_CHUNK`] rows covering `0..n`.
pub fn row_chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(ROW_CHUNK)
        .map(|start| (start, (start + ROW_CHUNK).min(n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_rows() {
        assert!(row_chunks(0).is_empty());
        let c = row_chunks(ROW_CHUNK * 2 + 3);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], (0, ROW_CHUNK));
        assert_eq!(c[2], (2 * ROW_CHUNK, 2 * ROW_CHUNK + 3));
    }

    #[test]
    fn modes_agree_on_order() {
        let a = map_range(Execution::Sequential, 100, |i| i * i);
        let b = map_range(Execution::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
    }
}
