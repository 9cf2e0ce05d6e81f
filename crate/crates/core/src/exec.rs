//! Execution policy for data-parallel inner loops.
//!
//! With the `parallel` feature, [`Execution::Parallel`] dispatches to rayon;
//! without it every call runs sequentially. Results never depend on the
//! policy: each output element is produced by one closure call, with no
//! cross-worker reductions.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps `f` over `0..len`, collecting results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// Fills `out` in chunks of `chunk` elements; `f(start, chunk_slice)`.
    pub fn fill_chunks<F>(self, out: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => out
                .par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(k, c)| f(k * chunk, c)),
            _ => out
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(k, c)| f(k * chunk, c)),
        }
    }
}
