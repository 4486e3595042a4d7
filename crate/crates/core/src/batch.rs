//! Many independent simulations at once. With the `parallel` feature the runs are
//! spread over a rayon pool; without it they run one after another. Results come
//! back in input order either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::orchestrator::{simulate, Config, SimError, Trace};
use crate::telemetry::EventLog;

/// One simulation job: a trace and the seed to run it with.
#[derive(Debug, Clone)]
pub struct Job {
    pub trace: Trace,
    pub seed: u64,
}

#[cfg(feature = "parallel")]
pub fn simulate_batch(jobs: &[Job], config: &Config) -> Vec<Result<EventLog, SimError>> {
    jobs.par_iter().map(|job| simulate(&job.trace, config, job.seed)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn simulate_batch(jobs: &[Job], config: &Config) -> Vec<Result<EventLog, SimError>> {
    simulate_batch_sequential(jobs, config)
}

pub fn simulate_batch_sequential(jobs: &[Job], config: &Config) -> Vec<Result<EventLog, SimError>> {
    jobs.iter().map(|job| simulate(&job.trace, config, job.seed)).collect()
}

/// Apply `f` to every item, in parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map_all<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_all<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
