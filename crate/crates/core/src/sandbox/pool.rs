use rayon::prelude::*;

use super::Sandbox;

/// A fixed-size set of workers, each running one sandbox job at a time.
pub struct SandboxPool {
    sandbox: Sandbox,
    pool: rayon::ThreadPool,
    workers: usize,
}

impl SandboxPool {
    /// `workers == 0` means one worker per logical core.
    pub fn new(sandbox: Sandbox, workers: usize) -> Self {
        let workers = if workers == 0 { default_workers() } else { workers };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("sandbox-{i}"))
            .build()
            .expect("thread pool");
        SandboxPool { sandbox, pool, workers }
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Applies `job` to every item on the pool; results keep input order.
    pub fn map<T, R, F>(&self, items: &[T], job: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&Sandbox, &T) -> R + Sync,
    {
        let sandbox = &self.sandbox;
        self.pool.install(|| items.par_iter().with_max_len(1).map(|item| job(sandbox, item)).collect())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
