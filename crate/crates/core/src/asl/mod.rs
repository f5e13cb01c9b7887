//! Actor–sharer–learner training: an actor thread collecting transitions from
//! vectorized environments and a learner thread optimizing the Q-network run
//! concurrently, exchanging data only through the [`Sharer`].

mod actor;
mod learner;
mod tfm;
mod vem;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

pub use actor::{actor_loop, ActorConfig, ActorReport, BatchEnv};
pub use learner::{learner_loop, LearnerAlgo, LearnerConfig, LearnerReport};
pub use tfm::{compute_xi, precise_sleep, sleeper, AtomicF64, PeriodEstimate, Sleeper, TfmConfig, TfmState};
pub use vem::{select_actions, VemSchedule};

use crate::error::{Error, Result};
use crate::net::Mlp;
use crate::replay::SharedReplay;
use crate::sim::Event;
use crate::vec_env::EpisodeEnd;

/// An immutable published parameter set.
#[derive(Debug)]
pub struct PublishedModel {
    pub net: Mlp<f32>,
    /// Checksum taken when the snapshot was built.
    pub checksum: u64,
}

impl PublishedModel {
    pub fn new(net: Mlp<f32>) -> Self {
        let checksum = net.checksum();
        Self { net, checksum }
    }

    pub fn version(&self) -> u64 {
        self.net.version()
    }

    pub fn is_intact(&self) -> bool {
        self.net.checksum() == self.checksum
    }
}

/// Recent finished episodes, for rolling statistics.
#[derive(Debug)]
pub struct EpisodeLog {
    window: usize,
    recent: VecDeque<EpisodeEnd>,
    pub total_episodes: u64,
    pub total_arrivals: u64,
}

impl EpisodeLog {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::new(),
            total_episodes: 0,
            total_arrivals: 0,
        }
    }

    pub fn push(&mut self, e: EpisodeEnd) {
        self.total_episodes += 1;
        self.total_arrivals += (e.event == Event::Arrival) as u64;
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(e);
    }

    pub fn recent_arrival_rate(&self) -> Option<f64> {
        let n = self.recent.len();
        (n > 0).then(|| self.recent.iter().filter(|e| e.event == Event::Arrival).count() as f64 / n as f64)
    }

    pub fn recent_mean_return(&self) -> Option<f64> {
        let n = self.recent.len();
        (n > 0).then(|| self.recent.iter().map(|e| e.episode_return).sum::<f64>() / n as f64)
    }

    pub fn recent_len(&self) -> usize {
        self.recent.len()
    }
}

/// Everything the actor and learner share.
pub struct Sharer {
    pub replay: SharedReplay,
    pub tfm: TfmState,
    published: Mutex<Arc<PublishedModel>>,
    published_version: AtomicU64,
    publishes: AtomicU64,
    t_step: AtomicU64,
    b_step: AtomicU64,
    stop: AtomicBool,
    failure: Mutex<Option<String>>,
    episodes: Mutex<EpisodeLog>,
    epsilon_min_active: AtomicF64,
    last_loss: AtomicF64,
}

impl Sharer {
    pub fn new(initial: Mlp<f32>, replay_capacity: usize, tfm: TfmConfig, episode_window: usize) -> Self {
        let v = initial.version();
        Self {
            replay: SharedReplay::new(replay_capacity),
            tfm: TfmState::new(tfm),
            published: Mutex::new(Arc::new(PublishedModel::new(initial))),
            published_version: AtomicU64::new(v),
            publishes: AtomicU64::new(0),
            t_step: AtomicU64::new(0),
            b_step: AtomicU64::new(0),
            stop: AtomicBool::new(false),
            failure: Mutex::new(None),
            episodes: Mutex::new(EpisodeLog::new(episode_window)),
            epsilon_min_active: AtomicF64::new(f64::NAN),
            last_loss: AtomicF64::new(f64::NAN),
        }
    }

    /// Replaces the published snapshot with a copy of `net`.
    pub fn publish(&self, net: &Mlp<f32>) {
        let snap = Arc::new(PublishedModel::new(net.clone()));
        let v = snap.version();
        *self.published.lock() = snap;
        self.published_version.store(v, Ordering::Release);
        self.publishes.fetch_add(1, Ordering::Relaxed);
    }

    pub fn model(&self) -> Arc<PublishedModel> {
        self.published.lock().clone()
    }

    pub fn published_version(&self) -> u64 {
        self.published_version.load(Ordering::Acquire)
    }

    /// Number of `publish` calls so far.
    pub fn publishes(&self) -> u64 {
        self.publishes.load(Ordering::Relaxed)
    }

    pub fn t_step(&self) -> u64 {
        self.t_step.load(Ordering::Acquire)
    }

    pub fn b_step(&self) -> u64 {
        self.b_step.load(Ordering::Acquire)
    }

    pub(crate) fn add_t_steps(&self, n: u64) {
        self.t_step.fetch_add(n, Ordering::AcqRel);
    }

    pub(crate) fn add_b_step(&self) {
        self.b_step.fetch_add(1, Ordering::AcqRel);
    }

    /// `B·B_step / T_step`; zero before any interaction.
    pub fn measured_tps(&self) -> f64 {
        let t = self.t_step();
        if t == 0 {
            0.0
        } else {
            self.tfm.cfg.batch as f64 * self.b_step() as f64 / t as f64
        }
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn should_stop(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    /// Records the first failure and stops both loops.
    pub fn fail(&self, msg: String) {
        let mut f = self.failure.lock();
        if f.is_none() {
            *f = Some(msg);
        }
        drop(f);
        self.request_stop();
    }

    pub fn failure(&self) -> Option<String> {
        self.failure.lock().clone()
    }

    pub fn log_episodes(&self, ends: &[EpisodeEnd]) {
        if ends.is_empty() {
            return;
        }
        let mut log = self.episodes.lock();
        for &e in ends {
            log.push(e);
        }
    }

    pub fn with_episodes<R>(&self, f: impl FnOnce(&EpisodeLog) -> R) -> R {
        f(&self.episodes.lock())
    }

    pub fn epsilon_min_active(&self) -> f64 {
        self.epsilon_min_active.load()
    }

    pub(crate) fn set_epsilon_min_active(&self, e: f64) {
        self.epsilon_min_active.store(e);
    }

    pub fn last_loss(&self) -> f64 {
        self.last_loss.load()
    }

    pub(crate) fn set_last_loss(&self, l: f64) {
        self.last_loss.store(l);
    }
}

/// Runs the actor and learner on two scoped threads while `monitor` is
/// polled on the calling thread every `poll`. Returns when both loops exit.
/// The monitor may stop the run by returning an error.
pub fn run<E, A, M>(
    sharer: &Sharer,
    env: &mut E,
    actor_cfg: &ActorConfig,
    algo: &mut A,
    learner_cfg: &LearnerConfig,
    poll: Duration,
    mut monitor: M,
) -> Result<(ActorReport, LearnerReport)>
where
    E: BatchEnv + Send,
    A: LearnerAlgo + Send,
    M: FnMut(&Sharer) -> Result<()>,
{
    let (actor_res, learner_res, monitor_res) = std::thread::scope(|s| {
        let actor = s.spawn(|| actor_loop(sharer, env, actor_cfg));
        let learner = s.spawn(|| learner_loop(sharer, algo, learner_cfg));
        let mut monitor_res = Ok(());
        while !(actor.is_finished() && learner.is_finished()) {
            std::thread::sleep(poll);
            if monitor_res.is_ok() {
                monitor_res = monitor(sharer);
                if let Err(e) = &monitor_res {
                    sharer.fail(e.to_string());
                }
            }
        }
        let a = actor.join().unwrap_or_else(|_| Err(Error::Training("actor thread panicked".into())));
        let l = learner.join().unwrap_or_else(|_| Err(Error::Training("learner thread panicked".into())));
        (a, l, monitor_res)
    });
    monitor_res?;
    let a = actor_res?;
    let l = learner_res?;
    Ok((a, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn publish_bumps_version_and_keeps_checksum() {
        let mut net = Mlp::<f32>::new(&[4, 3, 2], &mut derive_rng(0, 0));
        let sharer = Sharer::new(net.clone(), 10, TfmConfig::default(), 10);
        assert_eq!(sharer.published_version(), 0);
        net.set_version(7);
        net.params_mut()[0] += 1.0;
        sharer.publish(&net);
        let m = sharer.model();
        assert_eq!(m.version(), 7);
        assert!(m.is_intact());
        assert_eq!(m.net, net);
        assert_eq!(sharer.published_version(), 7);
    }

    #[test]
    fn episode_log_window() {
        let mut log = EpisodeLog::new(3);
        assert_eq!(log.recent_arrival_rate(), None);
        let e = |event, r| EpisodeEnd { copy: 0, map_index: 0, event, episode_return: r, length: 1 };
        log.push(e(Event::Collision, -10.0));
        log.push(e(Event::Arrival, 75.0));
        log.push(e(Event::Arrival, 75.0));
        log.push(e(Event::Arrival, 75.0));
        assert_eq!(log.recent_arrival_rate(), Some(1.0));
        assert_eq!(log.recent_mean_return(), Some(75.0));
        assert_eq!(log.total_episodes, 4);
        assert_eq!(log.total_arrivals, 3);
    }

    #[test]
    fn failure_keeps_first_message_and_stops() {
        let sharer = Sharer::new(Mlp::zeros(&[2, 2]), 4, TfmConfig::default(), 4);
        sharer.fail("a".into());
        sharer.fail("b".into());
        assert!(sharer.should_stop());
        assert_eq!(sharer.failure().as_deref(), Some("a"));
    }
}
