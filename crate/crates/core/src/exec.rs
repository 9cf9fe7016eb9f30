//! Sequential / data-parallel execution switch.
//!
//! Batch stages (classification, abstract recovery, pairwise agreement) map a
//! pure function over independent items. [`Execution::Parallel`] uses rayon when
//! the `parallel` feature is enabled and silently degrades to sequential
//! iteration otherwise. Output order always matches input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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
    /// True when this mode actually fans out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Like [`Execution::map`] but caps the number of items in flight at once.
    ///
    /// Used for calls that hit an external service where the thread pool size
    /// should not decide the concurrency.
    pub fn map_bounded<T, U, F>(self, items: &[T], max_in_flight: usize, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && max_in_flight > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(max_in_flight).build();
            if let Ok(pool) = pool {
                return pool.install(|| items.par_iter().map(&f).collect());
            }
        }
        let _ = max_in_flight;
        items.iter().map(f).collect()
    }
}
