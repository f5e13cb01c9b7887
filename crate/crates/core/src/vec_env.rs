//! N simulator copies stepped in lockstep, each with its own map, diversity
//! ranges and random stream.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::rng::{derive_rng, SimRng};
use crate::sim::{DiversityRanges, Env, EnvConfig, Event, StepInfo};
use crate::STATE_DIM;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CopyStats {
    pub episodes: u64,
    pub arrivals: u64,
    pub collisions: u64,
    pub timeouts: u64,
    pub return_sum: f64,
}

impl CopyStats {
    pub fn arrival_rate(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.arrivals as f64 / self.episodes as f64)
    }

    pub fn mean_return(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.return_sum / self.episodes as f64)
    }

    fn add(&mut self, o: &CopyStats) {
        self.episodes += o.episodes;
        self.arrivals += o.arrivals;
        self.collisions += o.collisions;
        self.timeouts += o.timeouts;
        self.return_sum += o.return_sum;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub per_copy: Vec<CopyStats>,
    pub pooled: CopyStats,
}

/// One finished episode, reported by the step that ended it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeEnd {
    pub copy: usize,
    pub map_index: usize,
    pub event: Event,
    pub episode_return: f64,
    pub length: u32,
}

/// Output of one batched step. Row `i` of `next_states` is what the policy
/// sees next (a fresh initial state if copy `i` just ended); row `i` of
/// `storage_next_states` is the true successor to store in replay.
#[derive(Clone, Debug, Default)]
pub struct StepBatch {
    pub next_states: Vec<f32>,
    pub storage_next_states: Vec<f32>,
    pub rewards: Vec<f32>,
    /// Collision or arrival; timeouts are reported in `truncated` only.
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    pub events: Vec<Event>,
    pub finished: Vec<EpisodeEnd>,
}

impl StepBatch {
    fn resize(&mut self, n: usize) {
        self.next_states.resize(n * STATE_DIM, 0.0);
        self.storage_next_states.resize(n * STATE_DIM, 0.0);
        self.rewards.resize(n, 0.0);
        self.dones.resize(n, false);
        self.truncated.resize(n, false);
        self.events.resize(n, Event::None);
        self.finished.clear();
    }
}

struct Slot {
    env: Env,
    rng: SimRng,
    map_index: usize,
    stats: CopyStats,
    running_return: f64,
    running_len: u32,
}

pub struct VecEnv {
    copies: Vec<Slot>,
    states: Vec<f32>,
    parallel: bool,
    ready: bool,
}

impl VecEnv {
    /// `assignment[i]` is the map index of copy `i`. `cfgs` and `ranges` each
    /// hold one entry per copy or a single entry shared by all.
    pub fn new(
        maps: &[Arc<GridMap>],
        assignment: &[usize],
        cfgs: &[EnvConfig],
        ranges: &[DiversityRanges],
    ) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::Config("a vectorized environment needs at least one copy".into()));
        }
        if ranges.len() != 1 && ranges.len() != n {
            return Err(Error::Config(format!(
                "{} diversity range sets for {n} copies",
                ranges.len()
            )));
        }
        if cfgs.len() != 1 && cfgs.len() != n {
            return Err(Error::Config(format!("{} environment configs for {n} copies", cfgs.len())));
        }
        let mut copies = Vec::with_capacity(n);
        for (i, &m) in assignment.iter().enumerate() {
            let map = maps
                .get(m)
                .ok_or_else(|| Error::Config(format!("copy {i} refers to missing map {m}")))?;
            let r = if ranges.len() == 1 { &ranges[0] } else { &ranges[i] };
            let cfg = if cfgs.len() == 1 { &cfgs[0] } else { &cfgs[i] };
            copies.push(Slot {
                env: Env::new(map.clone(), cfg.clone(), r.clone())?,
                rng: derive_rng(0, i as u64),
                map_index: m,
                stats: CopyStats::default(),
                running_return: 0.0,
                running_len: 0,
            });
        }
        Ok(Self {
            copies,
            states: vec![0.0; n * STATE_DIM],
            parallel: true,
            ready: false,
        })
    }

    /// Copy `i` gets map `i mod maps.len()`.
    pub fn round_robin(maps: &[Arc<GridMap>], n: usize, cfg: &EnvConfig, ranges: &[DiversityRanges]) -> Result<Self> {
        let cfgs = std::slice::from_ref(cfg);
        if maps.is_empty() {
            return Err(Error::Config("no maps given".into()));
        }
        let assignment: Vec<usize> = (0..n).map(|i| i % maps.len()).collect();
        Self::new(maps, &assignment, cfgs, ranges)
    }

    /// Step copies on the rayon pool (default) or sequentially. Outputs are
    /// identical either way.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn n(&self) -> usize {
        self.copies.len()
    }

    pub fn env(&self, i: usize) -> &Env {
        &self.copies[i].env
    }

    pub fn map_index(&self, i: usize) -> usize {
        self.copies[i].map_index
    }

    /// Current policy input, `N×32`.
    pub fn states(&self) -> &[f32] {
        &self.states
    }

    /// Resets every copy; copy `i` draws from stream `i` of `seed`.
    pub fn reset_all(&mut self, seed: u64) -> Result<&[f32]> {
        let parallel = self.parallel;
        let job = |(i, (c, row)): (usize, (&mut Slot, &mut [f32]))| -> Result<()> {
            c.rng = derive_rng(seed, i as u64);
            c.running_return = 0.0;
            c.running_len = 0;
            c.env.reset_into(&mut c.rng, row)
        };
        let res: Result<()> = if parallel {
            self.copies
                .par_iter_mut()
                .zip(self.states.par_chunks_mut(STATE_DIM))
                .enumerate()
                .try_for_each(job)
        } else {
            self.copies
                .iter_mut()
                .zip(self.states.chunks_mut(STATE_DIM))
                .enumerate()
                .try_for_each(job)
        };
        res?;
        self.ready = true;
        Ok(&self.states)
    }

    pub fn step_batch(&mut self, actions: &[usize]) -> Result<StepBatch> {
        let mut out = StepBatch::default();
        self.step_batch_into(actions, &mut out)?;
        Ok(out)
    }

    /// Steps every copy once and auto-resets those whose episode ended.
    pub fn step_batch_into(&mut self, actions: &[usize], out: &mut StepBatch) -> Result<()> {
        let n = self.n();
        if actions.len() != n {
            return Err(Error::Usage(format!("{} actions for {n} copies", actions.len())));
        }
        if !self.ready {
            return Err(Error::Usage("reset_all must be called before step_batch".into()));
        }
        out.resize(n);

        let job = |((c, &a), (store, next)): ((&mut Slot, &usize), (&mut [f32], &mut [f32]))| -> Result<StepInfo> {
            let info = c.env.step_into(a, &mut c.rng, store)?;
            if info.done || info.truncated {
                c.env.reset_into(&mut c.rng, next)?;
            } else {
                next.copy_from_slice(store);
            }
            Ok(info)
        };
        let infos: Result<Vec<StepInfo>> = if self.parallel {
            self.copies
                .par_iter_mut()
                .zip(actions.par_iter())
                .zip(out.storage_next_states.par_chunks_mut(STATE_DIM).zip(out.next_states.par_chunks_mut(STATE_DIM)))
                .map(job)
                .collect()
        } else {
            self.copies
                .iter_mut()
                .zip(actions.iter())
                .zip(out.storage_next_states.chunks_mut(STATE_DIM).zip(out.next_states.chunks_mut(STATE_DIM)))
                .map(job)
                .collect()
        };
        let infos = match infos {
            Ok(v) => v,
            Err(e) => {
                self.ready = false;
                return Err(e);
            }
        };

        for (i, (c, info)) in self.copies.iter_mut().zip(&infos).enumerate() {
            out.rewards[i] = info.reward;
            out.dones[i] = info.done;
            out.truncated[i] = info.truncated;
            out.events[i] = info.event;
            c.running_return += info.reward as f64;
            c.running_len += 1;
            if info.done || info.truncated {
                c.stats.episodes += 1;
                match info.event {
                    Event::Arrival => c.stats.arrivals += 1,
                    Event::Collision => c.stats.collisions += 1,
                    Event::Timeout => c.stats.timeouts += 1,
                    Event::None => {}
                }
                c.stats.return_sum += c.running_return;
                out.finished.push(EpisodeEnd {
                    copy: i,
                    map_index: c.map_index,
                    event: info.event,
                    episode_return: c.running_return,
                    length: c.running_len,
                });
                c.running_return = 0.0;
                c.running_len = 0;
            }
        }
        self.states.copy_from_slice(&out.next_states);
        Ok(())
    }

    pub fn snapshot_stats(&self) -> StatsReport {
        let per_copy: Vec<CopyStats> = self.copies.iter().map(|c| c.stats).collect();
        let mut pooled = CopyStats::default();
        for s in &per_copy {
            pooled.add(s);
        }
        StatsReport { per_copy, pooled }
    }

    pub fn reset_stats(&mut self) {
        for c in &mut self.copies {
            c.stats = CopyStats::default();
        }
    }

    /// Control interval of each copy's current episode, for real-time factors.
    pub fn control_intervals(&self) -> Vec<f64> {
        self.copies.iter().map(|c| c.env.params().control_interval_s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Rect, Vec2};
    use crate::sim::SimParams;
    use crate::N_ACTIONS;
    use rand::Rng;

    fn maps() -> Vec<Arc<GridMap>> {
        (0..3)
            .map(|k| {
                let g = Vec2::new(300.0 + 40.0 * k as f64, 300.0);
                Arc::new(
                    GridMap::open(400, 400, 5, Rect { x0: 40.0, y0: 40.0, x1: 80.0, y1: 80.0 }, g, 20.0).unwrap(),
                )
            })
            .collect()
    }

    fn ranges() -> Vec<DiversityRanges> {
        vec![DiversityRanges::around(&SimParams::default(), 0.3)]
    }

    #[test]
    fn single_copy_matches_plain_env() {
        let ms = maps();
        let cfg = EnvConfig::default();
        let mut v = VecEnv::new(&ms, &[1], std::slice::from_ref(&cfg), &ranges()).unwrap();
        let mut env = Env::new(ms[1].clone(), cfg, ranges()[0].clone()).unwrap();
        let mut rng = derive_rng(42, 0);
        assert_eq!(v.reset_all(42).unwrap(), &env.reset(&mut rng).unwrap()[..]);
        for t in 0..50 {
            let a = t % N_ACTIONS;
            let b = v.step_batch(&[a]).unwrap();
            let o = env.step(a, &mut rng).unwrap();
            assert_eq!(&b.storage_next_states[..], &o.state[..]);
            assert_eq!(b.rewards[0], o.reward);
            if o.done || o.truncated {
                break;
            }
        }
    }

    #[test]
    fn lockstep_rows_equal_independent_runs_with_auto_reset() {
        let ms = maps();
        let mut cfg = EnvConfig::default();
        cfg.timeout_steps = 25;
        let n = 6;
        let mut v = VecEnv::round_robin(&ms, n, &cfg, &ranges()).unwrap();
        let mut singles: Vec<(Env, SimRng)> = (0..n)
            .map(|i| {
                let env = Env::new(ms[i % ms.len()].clone(), cfg.clone(), ranges()[0].clone()).unwrap();
                (env, derive_rng(7, i as u64))
            })
            .collect();
        let first = v.reset_all(7).unwrap().to_vec();
        for (i, (env, rng)) in singles.iter_mut().enumerate() {
            assert_eq!(&first[i * STATE_DIM..(i + 1) * STATE_DIM], &env.reset(rng).unwrap()[..]);
        }
        let mut pick = derive_rng(99, 0);
        let mut ends = 0;
        for _ in 0..120 {
            let actions: Vec<usize> = (0..n).map(|_| pick.random_range(0..N_ACTIONS)).collect();
            let b = v.step_batch(&actions).unwrap();
            for (i, (env, rng)) in singles.iter_mut().enumerate() {
                let o = env.step(actions[i], rng).unwrap();
                let row = i * STATE_DIM..(i + 1) * STATE_DIM;
                assert_eq!(&b.storage_next_states[row.clone()], &o.state[..]);
                assert_eq!(b.dones[i], o.done);
                assert_eq!(b.truncated[i], o.truncated);
                if o.done || o.truncated {
                    ends += 1;
                    let fresh = env.reset(rng).unwrap();
                    assert_eq!(&b.next_states[row], &fresh[..]);
                } else {
                    assert_eq!(&b.next_states[row.clone()], &b.storage_next_states[row]);
                }
            }
        }
        assert!(ends >= n, "every copy should time out at least once");
        assert_eq!(v.snapshot_stats().pooled.episodes, ends as u64);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let ms = maps();
        let cfg = EnvConfig::default();
        let mut a = VecEnv::round_robin(&ms, 8, &cfg, &ranges()).unwrap();
        let mut b = VecEnv::round_robin(&ms, 8, &cfg, &ranges()).unwrap();
        b.set_parallel(false);
        assert_eq!(a.reset_all(3).unwrap(), b.reset_all(3).unwrap());
        for t in 0..200 {
            let actions: Vec<usize> = (0..8).map(|i| (i + t) % N_ACTIONS).collect();
            let x = a.step_batch(&actions).unwrap();
            let y = b.step_batch(&actions).unwrap();
            assert_eq!(x.next_states, y.next_states);
            assert_eq!(x.rewards, y.rewards);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let ms = maps();
        let cfg = EnvConfig::default();
        let mut v = VecEnv::round_robin(&ms, 16, &cfg, &ranges()).unwrap();
        let a = v.reset_all(5).unwrap().to_vec();
        let b = v.reset_all(5).unwrap().to_vec();
        assert_eq!(a, b);
        assert_ne!(a, v.reset_all(6).unwrap());
    }

    #[test]
    fn shape_and_usage_errors() {
        let ms = maps();
        let cfg = EnvConfig::default();
        let mut v = VecEnv::round_robin(&ms, 4, &cfg, &ranges()).unwrap();
        assert!(matches!(v.step_batch(&[0; 4]), Err(Error::Usage(_))));
        v.reset_all(0).unwrap();
        assert!(matches!(v.step_batch(&[0; 3]), Err(Error::Usage(_))));
        let b = v.step_batch(&[2; 4]).unwrap();
        assert_eq!(b.next_states.len(), 4 * STATE_DIM);
        assert_eq!(b.rewards.len(), 4);
        assert!(VecEnv::new(&ms, &[5], std::slice::from_ref(&cfg), &ranges()).is_err());
        assert!(VecEnv::new(&ms, &[], std::slice::from_ref(&cfg), &ranges()).is_err());
    }

    #[test]
    fn arrival_rate_definitions() {
        let empty = CopyStats::default();
        assert_eq!(empty.arrival_rate(), None);
        let s = CopyStats { episodes: 10, arrivals: 8, ..Default::default() };
        assert_eq!(s.arrival_rate(), Some(0.8));
    }

    #[test]
    fn pooled_rate_is_ratio_of_sums() {
        let ms = maps();
        let mut cfg = EnvConfig::default();
        cfg.timeout_steps = 15;
        let mut v = VecEnv::round_robin(&ms, 5, &cfg, &ranges()).unwrap();
        v.reset_all(11).unwrap();
        for t in 0..300 {
            v.step_batch(&[2, 1, 3, t % 5, 2]).unwrap();
        }
        let r = v.snapshot_stats();
        let eps: u64 = r.per_copy.iter().map(|c| c.episodes).sum();
        let arr: u64 = r.per_copy.iter().map(|c| c.arrivals).sum();
        assert_eq!(r.pooled.episodes, eps);
        assert_eq!(r.pooled.arrival_rate(), Some(arr as f64 / eps as f64));
        for c in &r.per_copy {
            assert_eq!(c.episodes, c.arrivals + c.collisions + c.timeouts);
        }
        v.reset_stats();
        assert_eq!(v.snapshot_stats().pooled.episodes, 0);
    }
}
