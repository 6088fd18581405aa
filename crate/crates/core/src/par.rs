//! Worker pool used for particle fan-out.
//!
//! With the `parallel` feature a [`Workers`] value owns a dedicated rayon pool
//! sized to the configured worker count. Without it, or when a single worker is
//! requested, every map runs on the calling thread. Results are always returned
//! in input order, so outputs do not depend on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("count", &self.count).finish()
    }
}

impl Workers {
    /// Runs everything on the caller's thread.
    pub fn sequential() -> Self {
        Workers {
            count: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A pool of `count` threads. `0` means one per available core.
    pub fn new(count: usize) -> Result<Self> {
        let count = if count == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            count
        };
        if count == 1 {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count)
                .thread_name(|i| format!("rollout-{i}"))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {count} workers: {e}")))?;
            Ok(Workers {
                count,
                pool: Some(pool),
            })
        }
        #[cfg(not(feature = "parallel"))]
        {
            log::warn!("built without `parallel`; ignoring request for {count} workers");
            Ok(Self::sequential())
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

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

    /// Maps `f` over `0..n`, collecting results in index order.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::sequential()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let seq = Workers::sequential();
        let par = Workers::new(3).unwrap();
        let a = seq.map_indexed(100, |i| i * i);
        let b = par.map_indexed(100, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn zero_means_all_cores() {
        let w = Workers::new(0).unwrap();
        assert!(w.count() >= 1);
    }
}
