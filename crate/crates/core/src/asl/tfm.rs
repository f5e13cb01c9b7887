//! Time feedback: keeps the learner's consumption rate at a fixed number of
//! sampled transitions per collected transition by putting the faster of the
//! two loops to sleep.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfmConfig {
    /// Environment copies.
    pub n: usize,
    /// Target transitions per step: `B·B_step / T_step`.
    pub tps: f64,
    /// Minibatch size.
    pub batch: usize,
    pub ema_factor: f64,
    /// Period samples each loop must report before anyone sleeps.
    pub warmup: u64,
    pub max_sleep: Duration,
    pub enabled: bool,
}

impl Default for TfmConfig {
    fn default() -> Self {
        Self {
            n: 16,
            tps: 256.0,
            batch: 256,
            ema_factor: 0.1,
            warmup: 10,
            max_sleep: Duration::from_secs(1),
            enabled: true,
        }
    }
}

impl TfmConfig {
    /// Actor periods per learner period at the target rate: `N·TPS/B`.
    pub fn rho(&self) -> f64 {
        self.n as f64 * self.tps / self.batch as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.batch == 0 || !(self.tps > 0.0) {
            return Err(Error::Config("TFM needs N, B and TPS positive".into()));
        }
        if !(self.ema_factor > 0.0 && self.ema_factor <= 1.0) {
            return Err(Error::Config(format!("EMA factor {} outside (0, 1]", self.ema_factor)));
        }
        Ok(())
    }
}

/// `ξ = ρ·B_period − V_period`.
pub fn compute_xi(rho: f64, b_period_s: f64, v_period_s: f64) -> f64 {
    rho * b_period_s - v_period_s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sleeper {
    /// The actor sleeps `ξ` seconds.
    Actor(f64),
    /// The learner sleeps `−ξ/ρ` seconds.
    Learner(f64),
}

pub fn sleeper(xi: f64, rho: f64) -> Sleeper {
    if xi > 0.0 {
        Sleeper::Actor(xi)
    } else {
        Sleeper::Learner(-xi / rho)
    }
}

/// An `f64` in an atomic cell.
#[derive(Debug, Default)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        Self(AtomicU64::new(v.to_bits()))
    }

    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    pub fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed)
    }
}

/// Moving-average period of one loop. Only the owning loop writes.
#[derive(Debug, Default)]
pub struct PeriodEstimate {
    mean: AtomicF64,
    samples: AtomicU64,
}

impl PeriodEstimate {
    pub fn record(&self, seconds: f64, ema: f64) {
        let n = self.samples.load(Ordering::Relaxed);
        let m = if n == 0 {
            seconds
        } else {
            (1.0 - ema) * self.mean.load() + ema * seconds
        };
        self.mean.store(m);
        self.samples.store(n + 1, Ordering::Release);
    }

    pub fn mean(&self) -> f64 {
        self.mean.load()
    }

    pub fn samples(&self) -> u64 {
        self.samples.load(Ordering::Acquire)
    }
}

#[derive(Debug)]
pub struct TfmState {
    pub cfg: TfmConfig,
    pub actor: PeriodEstimate,
    pub learner: PeriodEstimate,
    last_xi: AtomicF64,
    actor_sleeps: AtomicU64,
    learner_sleeps: AtomicU64,
    actor_slept_ns: AtomicU64,
    learner_slept_ns: AtomicU64,
}

impl TfmState {
    pub fn new(cfg: TfmConfig) -> Self {
        Self {
            cfg,
            actor: PeriodEstimate::default(),
            learner: PeriodEstimate::default(),
            last_xi: AtomicF64::new(0.0),
            actor_sleeps: AtomicU64::new(0),
            learner_sleeps: AtomicU64::new(0),
            actor_slept_ns: AtomicU64::new(0),
            learner_slept_ns: AtomicU64::new(0),
        }
    }

    pub fn record_actor(&self, d: Duration) {
        self.actor.record(d.as_secs_f64(), self.cfg.ema_factor);
    }

    pub fn record_learner(&self, d: Duration) {
        self.learner.record(d.as_secs_f64(), self.cfg.ema_factor);
    }

    /// `ξ` once both loops are past warmup and regulation is on.
    pub fn xi(&self) -> Option<f64> {
        if !self.cfg.enabled
            || self.actor.samples() < self.cfg.warmup
            || self.learner.samples() < self.cfg.warmup
        {
            return None;
        }
        let xi = compute_xi(self.cfg.rho(), self.learner.mean(), self.actor.mean());
        self.last_xi.store(xi);
        Some(xi)
    }

    pub fn last_xi(&self) -> f64 {
        self.last_xi.load()
    }

    /// Called by the actor after its work; sleeps if `ξ > 0` and returns
    /// the requested sleep.
    pub fn actor_pause(&self) -> Duration {
        match self.xi().map(|x| sleeper(x, self.cfg.rho())) {
            Some(Sleeper::Actor(s)) => {
                let d = self.cap(s);
                precise_sleep(d);
                self.actor_sleeps.fetch_add(1, Ordering::Relaxed);
                self.actor_slept_ns.fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
                d
            }
            _ => Duration::ZERO,
        }
    }

    /// Called by the learner after its work; sleeps if `ξ ≤ 0` and returns
    /// the requested sleep.
    pub fn learner_pause(&self) -> Duration {
        match self.xi().map(|x| sleeper(x, self.cfg.rho())) {
            Some(Sleeper::Learner(s)) => {
                let d = self.cap(s);
                precise_sleep(d);
                self.learner_sleeps.fetch_add(1, Ordering::Relaxed);
                self.learner_slept_ns.fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
                d
            }
            _ => Duration::ZERO,
        }
    }

    fn cap(&self, s: f64) -> Duration {
        Duration::from_secs_f64(s.max(0.0)).min(self.cfg.max_sleep)
    }

    /// (actor sleeps, learner sleeps, actor seconds slept, learner seconds slept).
    pub fn sleep_totals(&self) -> (u64, u64, f64, f64) {
        (
            self.actor_sleeps.load(Ordering::Relaxed),
            self.learner_sleeps.load(Ordering::Relaxed),
            self.actor_slept_ns.load(Ordering::Relaxed) as f64 * 1e-9,
            self.learner_slept_ns.load(Ordering::Relaxed) as f64 * 1e-9,
        )
    }
}

/// Sleeps until `d` has elapsed, finishing the last stretch by yielding so
/// the wake-up lands close to the deadline instead of a timer slack later.
pub fn precise_sleep(d: Duration) {
    const SPIN: Duration = Duration::from_micros(300);
    if d.is_zero() {
        return;
    }
    let deadline = Instant::now() + d;
    if d > SPIN {
        std::thread::sleep(d - SPIN);
    }
    while Instant::now() < deadline {
        std::thread::yield_now();
    }
}
