//! Raw simulator throughput under a uniformly random policy.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::rng::derive_rng;
use crate::sim::{DiversityRanges, EnvConfig};
use crate::vec_env::{StepBatch, VecEnv};
use crate::N_ACTIONS;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub n: usize,
    pub wall_s: f64,
    pub batches: u64,
    /// Single-copy steps, all copies together.
    pub steps: u64,
    pub steps_per_s: f64,
    /// Per copy: simulated seconds over wall seconds.
    pub real_time_factor: f64,
    pub episodes: u64,
}

/// Steps `n` copies with random actions for roughly `duration`.
pub fn bench_n(
    maps: &[Arc<GridMap>],
    n: usize,
    env: &EnvConfig,
    ranges: &DiversityRanges,
    duration: Duration,
    seed: u64,
) -> Result<BenchResult> {
    if duration.is_zero() {
        return Err(Error::Bench("duration must be positive".into()));
    }
    let mut venv = VecEnv::round_robin(maps, n, env, std::slice::from_ref(ranges))?;
    venv.set_parallel(rayon::current_num_threads() > 1);
    venv.reset_all(seed)?;
    let mut rng = derive_rng(seed, 1 << 41);
    let mut actions = vec![0usize; n];
    let mut out = StepBatch::default();
    let mut batches = 0u64;
    let mut sim_s = 0.0;
    let start = Instant::now();
    while start.elapsed() < duration {
        for a in actions.iter_mut() {
            *a = rng.random_range(0..N_ACTIONS);
        }
        sim_s += venv.control_intervals().iter().sum::<f64>();
        venv.step_batch_into(&actions, &mut out)?;
        batches += 1;
    }
    let wall_s = start.elapsed().as_secs_f64();
    let steps = batches * n as u64;
    let episodes = venv.snapshot_stats().pooled.episodes;
    Ok(BenchResult {
        n,
        wall_s,
        batches,
        steps,
        steps_per_s: steps as f64 / wall_s,
        real_time_factor: sim_s / n as f64 / wall_s,
        episodes,
    })
}

pub fn bench_report(results: &[BenchResult]) -> String {
    let mut s = String::from("n,wall_s,steps,steps_per_s,steps_per_s_per_copy,real_time_factor,episodes\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{:.2},{},{:.0},{:.0},{:.1},{}",
            r.n,
            r.wall_s,
            r.steps,
            r.steps_per_s,
            r.steps_per_s / r.n as f64,
            r.real_time_factor,
            r.episodes
        );
    }
    s
}
