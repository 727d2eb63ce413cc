//! Independent trajectories with reproducible per-trajectory seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnlsError};
use crate::solver::{GalerkinProblem, SolverConfig, Stepper, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

/// SplitMix64 finalizer applied to `master + index·γ`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(master, index))
}

/// Evaluate `job(i, rng_i)` for `i in 0..count`; results are ordered by index
/// and independent of the execution mode.
pub fn map_trajectories<T, F>(count: usize, master: u64, execution: Execution, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
{
    let run = |i: usize| job(i, &mut trajectory_rng(master, i as u64));
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(run).collect()
        }
        _ => (0..count).map(run).collect(),
    }
}

/// Like [`map_trajectories`] but inside a dedicated pool of `threads` workers.
pub fn map_trajectories_with_threads<T, F>(
    count: usize,
    master: u64,
    execution: Execution,
    threads: Option<usize>,
    job: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
{
    if threads == Some(0) {
        return Err(SnlsError::Config("thread count must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let (Some(n), Execution::Parallel) = (threads, execution) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SnlsError::Config(format!("cannot build thread pool: {e}")))?;
        return pool.install(|| map_trajectories(count, master, execution, job));
    }
    map_trajectories(count, master, execution, job)
}

/// `count` independent trajectories of one problem.
pub fn run_ensemble(
    problem: &GalerkinProblem,
    config: &SolverConfig,
    count: usize,
    master: u64,
    execution: Execution,
) -> Result<Vec<TrajectoryRecord>> {
    let stepper = Stepper::new(problem, *config)?;
    map_trajectories(count, master, execution, |_, rng| stepper.simulate(rng))
}
