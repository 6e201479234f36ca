//! Sequential or data-parallel evaluation of independent work items.
//!
//! Results always come back in index order, so downstream aggregation is identical
//! whichever path runs. Without the `parallel` feature every request runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Run on a worker pool; `None` uses the global pool.
    #[default]
    Parallel,
    Threads(usize),
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            None => Execution::Parallel,
            Some(0) => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(t) => Execution::Threads(t),
        }
    }
}

/// `(0..len).map(f)` under the requested execution mode.
pub fn map_indexed<T, F>(len: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..len).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => parallel::run(len, &f),
        #[cfg(feature = "parallel")]
        Execution::Threads(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| parallel::run(len, &f)),
            Err(_) => parallel::run(len, &f),
        },
        #[cfg(not(feature = "parallel"))]
        _ => (0..len).map(f).collect(),
    }
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    pub(super) fn run<T, F>(len: usize, f: &F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).into_par_iter().map(f).collect()
    }
}
