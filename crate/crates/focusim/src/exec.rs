use focusim_core::Executor;
use rayon::prelude::*;

use crate::error::CliError;

/// Runs independent jobs on a rayon pool. Results come back in job order,
/// so output does not depend on the worker count.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `None` uses one worker per available core.
    pub fn new(workers: Option<usize>) -> Result<Self, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(k) = workers {
            if k == 0 {
                return Err(CliError::Validation("--workers: must be >= 1".into()));
            }
            b = b.num_threads(k);
        }
        let pool = b
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
        Ok(RayonExecutor { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map_indexed<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_in_job_order() {
        let ex = RayonExecutor::new(Some(4)).unwrap();
        assert_eq!(ex.workers(), 4);
        let v = ex.map_indexed(1000, |k| k * k);
        assert!(v.iter().enumerate().all(|(k, &x)| x == k * k));
    }

    #[test]
    fn zero_workers_is_rejected() {
        assert!(RayonExecutor::new(Some(0)).is_err());
    }
}
