//! Order-preserving data-parallel map.
//!
//! With the `parallel` feature, work runs on a dedicated rayon pool sized by
//! the caller. Without it, or with one job, everything runs on the calling
//! thread. Results always come back in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub struct Executor {
    jobs: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("jobs", &self.jobs).finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            jobs: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Executor with `jobs` worker threads; 0 means one per available core.
    pub fn new(jobs: usize) -> Self {
        let jobs = if jobs == 0 { available_cores() } else { jobs };
        if jobs <= 1 {
            return Self::sequential();
        }
        #[cfg(feature = "parallel")]
        {
            match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(pool) => Executor { jobs, pool: Some(pool) },
                Err(err) => {
                    log::warn!("cannot start {jobs} worker threads ({err}); running sequentially");
                    Self::sequential()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            log::info!("built without parallel support; ignoring jobs={jobs}");
            Self::sequential()
        }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..10_000).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x).collect();
        for jobs in [1, 2, 8] {
            assert_eq!(Executor::new(jobs).map(&items, |x| x * x), expected);
        }
    }
}
