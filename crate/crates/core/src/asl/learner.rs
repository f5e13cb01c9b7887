use std::time::{Duration, Instant};

use super::Sharer;
use crate::ddqn::{Ddqn, UpdateStats};
use crate::error::Result;
use crate::net::Mlp;
use crate::replay::Batch;
use crate::rng::derive_rng;

/// The update rule run by the learner.
pub trait LearnerAlgo {
    fn update(&mut self, batch: &Batch) -> Result<UpdateStats>;
    /// Parameters to publish.
    fn online(&self) -> &Mlp<f32>;
}

impl LearnerAlgo for Ddqn {
    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        Ddqn::update(self, batch)
    }

    fn online(&self) -> &Mlp<f32> {
        Ddqn::online(self)
    }
}

#[derive(Clone, Debug)]
pub struct LearnerConfig {
    pub batch_size: usize,
    /// Learning starts once the buffer holds more than this.
    pub start_threshold: usize,
    /// Publish every `upload_period` updates.
    pub upload_period: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnerReport {
    pub updates: u64,
    pub publishes: u64,
    pub last: Option<UpdateStats>,
}

const LEARNER_STREAM: u64 = 2 << 40;

/// Samples and optimizes until the actor finishes or a stop request.
pub fn learner_loop<A: LearnerAlgo + ?Sized>(sharer: &Sharer, algo: &mut A, cfg: &LearnerConfig) -> Result<LearnerReport> {
    let res = learner_inner(sharer, algo, cfg);
    if let Err(e) = &res {
        sharer.fail(format!("learner: {e}"));
    }
    res
}

fn learner_inner<A: LearnerAlgo + ?Sized>(sharer: &Sharer, algo: &mut A, cfg: &LearnerConfig) -> Result<LearnerReport> {
    let mut rng = derive_rng(cfg.seed, LEARNER_STREAM);
    let mut report = LearnerReport::default();
    let mut batch = Batch::default();
    let threshold = cfg.start_threshold.max(cfg.batch_size.saturating_sub(1));

    while sharer.replay.len() <= threshold {
        if sharer.should_stop() {
            return Ok(report);
        }
        std::thread::sleep(Duration::from_micros(500));
    }

    while !sharer.should_stop() {
        let start = Instant::now();
        sharer.replay.sample_into(cfg.batch_size, &mut rng, &mut batch)?;
        let stats = algo.update(&batch)?;
        let b_step = sharer.b_step();
        if b_step.is_multiple_of(cfg.upload_period) {
            sharer.publish(algo.online());
            report.publishes += 1;
        }
        sharer.set_last_loss(stats.loss);
        report.updates += 1;
        report.last = Some(stats);

        // The period counts everything but the requested sleep, so wake-up
        // latency feeds back into the next ξ.
        let slept = sharer.tfm.learner_pause();
        sharer.tfm.record_learner(start.elapsed().saturating_sub(slept));
        sharer.add_b_step();
    }
    Ok(report)
}
