use std::sync::Arc;
use std::time::Duration;

use color_core::asl::{
    actor_loop, learner_loop, run, ActorConfig, BatchEnv, LearnerAlgo, LearnerConfig, Sharer, TfmConfig, VemSchedule,
};
use color_core::ddqn::UpdateStats;
use color_core::error::Result;
use color_core::map::{GridMap, Rect, Vec2};
use color_core::net::Mlp;
use color_core::replay::Batch;
use color_core::sim::{DiversityRanges, EnvConfig, SimParams};
use color_core::vec_env::{StepBatch, VecEnv};
use color_core::{N_ACTIONS, STATE_DIM};

fn vec_env(n: usize) -> VecEnv {
    let map = Arc::new(
        GridMap::open(400, 400, 5, Rect { x0: 30.0, y0: 30.0, x1: 90.0, y1: 90.0 }, Vec2::new(330.0, 330.0), 20.0)
            .unwrap(),
    );
    let ranges = DiversityRanges::fixed(&SimParams::default());
    let mut env = VecEnv::round_robin(&[map], n, &EnvConfig::default(), &[ranges]).unwrap();
    env.set_parallel(false);
    env.reset_all(5).unwrap();
    env
}

fn vem(n: usize) -> VemSchedule {
    VemSchedule {
        n,
        or_init: n,
        or_final: 1,
        ..VemSchedule::default()
    }
}

fn tfm(n: usize, batch: usize) -> TfmConfig {
    TfmConfig {
        n,
        batch,
        ..TfmConfig::default()
    }
}

/// Single linear layer whose output is its bias: argmax is `best`.
fn constant_policy(best: usize, version: u64) -> Mlp<f32> {
    let mut net = Mlp::zeros(&[STATE_DIM, N_ACTIONS]);
    net.layer_mut(0).1[best] = 1.0;
    net.set_version(version);
    net
}

#[test]
fn t_equal_to_n_runs_one_iteration() {
    let n = 4;
    let sharer = Sharer::new(constant_policy(0, 0), 100, tfm(n, 8), 10);
    let mut env = vec_env(n);
    let cfg = ActorConfig { max_t_steps: n as u64, vem: vem(n), seed: 1 };
    let r = actor_loop(&sharer, &mut env, &cfg).unwrap();
    assert_eq!(r.iterations, 1);
    assert_eq!(r.transitions, n as u64);
    assert_eq!(sharer.replay.len(), n);
    assert_eq!(sharer.t_step(), n as u64);
    assert!(sharer.should_stop());
}

#[test]
fn actor_alone_never_sleeps_and_counts_progress() {
    let n = 3;
    let cap = 50;
    let sharer = Sharer::new(constant_policy(0, 0), cap, tfm(n, 8), 10);
    let mut env = vec_env(n);
    let cfg = ActorConfig { max_t_steps: 3 * 40, vem: vem(n), seed: 2 };
    let r = actor_loop(&sharer, &mut env, &cfg).unwrap();
    assert_eq!(r.transitions, n as u64 * r.iterations);
    assert_eq!(sharer.replay.len(), (r.transitions as usize).min(cap));
    assert_eq!(sharer.replay.total_pushed(), r.transitions);
    let (actor_sleeps, learner_sleeps, _, _) = sharer.tfm.sleep_totals();
    assert_eq!((actor_sleeps, learner_sleeps), (0, 0));
    assert_eq!(r.torn_snapshots, 0);
}

/// Fixed state; records the actions it receives and publishes a new policy
/// after a given iteration.
struct ProbeEnv<'a> {
    sharer: &'a Sharer,
    states: Vec<f32>,
    seen: Vec<usize>,
    swap_after: usize,
}

impl BatchEnv for ProbeEnv<'_> {
    fn n(&self) -> usize {
        1
    }

    fn states(&self) -> &[f32] {
        &self.states
    }

    fn step_batch_into(&mut self, actions: &[usize], out: &mut StepBatch) -> Result<()> {
        self.seen.push(actions[0]);
        if self.seen.len() == self.swap_after {
            self.sharer.publish(&constant_policy(4, 9));
        }
        out.next_states.clear();
        out.next_states.extend_from_slice(&self.states);
        out.storage_next_states.clear();
        out.storage_next_states.extend_from_slice(&self.states);
        out.rewards.clear();
        out.rewards.push(0.0);
        out.dones.clear();
        out.dones.push(false);
        out.truncated.clear();
        out.truncated.push(false);
        out.events.clear();
        out.events.push(color_core::sim::Event::None);
        out.finished.clear();
        Ok(())
    }
}

#[test]
fn actor_picks_up_a_new_version_on_the_next_iteration() {
    let sharer = Sharer::new(constant_policy(1, 1), 100, tfm(1, 8), 10);
    let mut env = ProbeEnv { sharer: &sharer, states: vec![0.5; STATE_DIM], seen: Vec::new(), swap_after: 3 };
    let greedy = VemSchedule { n: 1, or_init: 1, or_final: 1, decay_steps: 1, e_min: 0.0, e_max: 0.0 };
    let cfg = ActorConfig { max_t_steps: 6, vem: greedy, seed: 3 };
    let r = actor_loop(&sharer, &mut env, &cfg).unwrap();
    assert_eq!(env.seen, vec![1, 1, 1, 4, 4, 4]);
    assert_eq!(r.model_refreshes, 1);
}

/// Counts updates, bumping the parameter version each time like an optimizer.
struct CountingAlgo {
    net: Mlp<f32>,
}

impl LearnerAlgo for CountingAlgo {
    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        assert_eq!(batch.len(), 8);
        let v = self.net.version() + 1;
        self.net.set_version(v);
        Ok(UpdateStats { loss: 0.0, mean_abs_td: 0.0, online_version: v, target_version: 0, synced: false })
    }

    fn online(&self) -> &Mlp<f32> {
        &self.net
    }
}

#[test]
fn learner_publishes_once_per_upload_period() {
    let n = 2;
    let sharer = Sharer::new(constant_policy(0, 0), 10_000, tfm(n, 8), 10);
    let mut env = vec_env(n);
    let actor_cfg = ActorConfig { max_t_steps: 2_000, vem: vem(n), seed: 4 };
    let learner_cfg = LearnerConfig { batch_size: 8, start_threshold: 20, upload_period: 50, seed: 4 };
    let mut algo = CountingAlgo { net: constant_policy(0, 0) };
    let (_, l) = run(&sharer, &mut env, &actor_cfg, &mut algo, &learner_cfg, Duration::from_millis(5), |_| Ok(())).unwrap();
    assert!(l.updates > 100, "only {} updates", l.updates);
    // Publishes follow the updates at B_step 0, 50, 100, ...
    let expected = l.updates.div_ceil(50);
    assert_eq!(l.publishes, expected);
    assert_eq!(sharer.publishes(), expected);
    assert_eq!(sharer.published_version(), (expected - 1) * 50 + 1);
    assert_eq!(sharer.b_step(), l.updates);
}

#[test]
fn learner_waits_for_the_start_threshold() {
    let n = 2;
    let sharer = Sharer::new(constant_policy(0, 0), 10_000, tfm(n, 8), 10);
    let mut env = vec_env(n);
    let actor_cfg = ActorConfig { max_t_steps: 100, vem: vem(n), seed: 5 };
    let learner_cfg = LearnerConfig { batch_size: 8, start_threshold: 100, upload_period: 50, seed: 5 };
    let mut algo = CountingAlgo { net: constant_policy(0, 0) };
    let (a, l) = run(&sharer, &mut env, &actor_cfg, &mut algo, &learner_cfg, Duration::from_millis(5), |_| Ok(())).unwrap();
    assert_eq!(a.transitions, 100);
    assert_eq!(l.updates, 0);
    assert_eq!(sharer.b_step(), 0);
}

#[test]
fn learner_alone_exits_on_stop() {
    let sharer = Sharer::new(constant_policy(0, 0), 100, tfm(1, 8), 10);
    sharer.request_stop();
    let mut algo = CountingAlgo { net: constant_policy(0, 0) };
    let cfg = LearnerConfig { batch_size: 8, start_threshold: 0, upload_period: 1, seed: 0 };
    let r = learner_loop(&sharer, &mut algo, &cfg).unwrap();
    assert_eq!(r.updates, 0);
}

#[test]
fn monitor_error_stops_the_run() {
    let n = 2;
    let sharer = Sharer::new(constant_policy(0, 0), 10_000, tfm(n, 8), 10);
    let mut env = vec_env(n);
    let actor_cfg = ActorConfig { max_t_steps: u64::MAX, vem: vem(n), seed: 6 };
    let learner_cfg = LearnerConfig { batch_size: 8, start_threshold: 20, upload_period: 50, seed: 6 };
    let mut algo = CountingAlgo { net: constant_policy(0, 0) };
    let res = run(&sharer, &mut env, &actor_cfg, &mut algo, &learner_cfg, Duration::from_millis(5), |s| {
        if s.t_step() > 200 {
            Err(color_core::error::Error::Training("enough".into()))
        } else {
            Ok(())
        }
    });
    assert!(res.is_err());
    assert!(sharer.failure().unwrap().contains("enough"));
}
