//! Data-parallel helpers. With the `parallel` feature enabled, batch work
//! is spread over a rayon pool; results are always collected in input order
//! so parallel and sequential execution produce identical output.

use serde::{Deserialize, Serialize};

/// How batch work (per-domain solves, experiment batches) is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    /// Parallel when the batch is large enough to amortize pool overhead.
    #[default]
    Auto,
    Sequential,
    Parallel,
}

impl Parallelism {
    pub(crate) fn decide(self, len: usize, auto_threshold: usize) -> bool {
        match self {
            Parallelism::Sequential => false,
            Parallelism::Parallel => true,
            Parallelism::Auto => len >= auto_threshold,
        }
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn indexed_map<T, O, F>(items: &[T], mode: Parallelism, auto_threshold: usize, f: F) -> Vec<O>
where
    T: Sync,
    O: Send,
    F: Fn(usize, &T) -> O + Sync,
{
    use rayon::prelude::*;
    if mode.decide(items.len(), auto_threshold) {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    } else {
        items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn indexed_map<T, O, F>(items: &[T], _mode: Parallelism, _auto_threshold: usize, f: F) -> Vec<O>
where
    T: Sync,
    O: Send,
    F: Fn(usize, &T) -> O + Sync,
{
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}
