//! Bounded data-parallel execution.
//!
//! With the `parallel` feature, work is spread over a dedicated rayon pool
//! of `parallelism` threads; otherwise (or with `parallelism == 1`) items
//! are processed in order on the calling thread. Results always come back
//! in input order.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone)]
pub struct Executor {
    parallelism: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Executor {
    pub fn new(parallelism: usize) -> Self {
        let parallelism = parallelism.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = (parallelism > 1).then(|| {
                Arc::new(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(parallelism)
                        .thread_name(|i| format!("dsex-worker-{i}"))
                        .build()
                        .expect("failed to start worker pool"),
                )
            });
            Self { parallelism, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Self { parallelism }
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    /// Whether work actually runs on more than one thread.
    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            if items.len() > 1 {
                return pool
                    .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
            }
        }
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}
