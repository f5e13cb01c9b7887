use std::sync::Arc;
use std::time::Instant;

use super::{select_actions, PublishedModel, Sharer, VemSchedule};
use crate::error::Result;
use crate::net::Workspace;
use crate::rng::derive_rng;
use crate::vec_env::{StepBatch, VecEnv};
use crate::STATE_DIM;

/// Batched environment driven by the actor.
pub trait BatchEnv {
    fn n(&self) -> usize;
    /// Current policy input, `n×32`.
    fn states(&self) -> &[f32];
    fn step_batch_into(&mut self, actions: &[usize], out: &mut StepBatch) -> Result<()>;
}

impl BatchEnv for VecEnv {
    fn n(&self) -> usize {
        VecEnv::n(self)
    }

    fn states(&self) -> &[f32] {
        VecEnv::states(self)
    }

    fn step_batch_into(&mut self, actions: &[usize], out: &mut StepBatch) -> Result<()> {
        VecEnv::step_batch_into(self, actions, out)
    }
}

#[derive(Clone, Debug)]
pub struct ActorConfig {
    /// Stop once `T_step` reaches this.
    pub max_t_steps: u64,
    pub vem: VemSchedule,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActorReport {
    pub iterations: u64,
    pub transitions: u64,
    pub model_refreshes: u64,
    /// Snapshots whose checksum did not match their contents.
    pub torn_snapshots: u64,
}

/// Stream index of the actor's exploration RNG under the run seed.
const ACTOR_STREAM: u64 = 1 << 40;

/// Collects transitions until `T_step ≥ max_t_steps` or a stop request.
/// Expects `env` to be reset already.
pub fn actor_loop<E: BatchEnv + ?Sized>(sharer: &Sharer, env: &mut E, cfg: &ActorConfig) -> Result<ActorReport> {
    let res = actor_inner(sharer, env, cfg);
    match &res {
        Ok(_) => sharer.request_stop(),
        Err(e) => sharer.fail(format!("actor: {e}")),
    }
    res
}

fn actor_inner<E: BatchEnv + ?Sized>(sharer: &Sharer, env: &mut E, cfg: &ActorConfig) -> Result<ActorReport> {
    let n = env.n();
    let mut vem = cfg.vem;
    vem.n = n;
    vem.validate()?;
    let mut rng = derive_rng(cfg.seed, ACTOR_STREAM);
    let mut model: Arc<PublishedModel> = sharer.model();
    let mut report = ActorReport::default();
    let mut ws = Workspace::new();
    let mut eps = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    let mut states = vec![0.0f32; n * STATE_DIM];
    let mut batch = StepBatch::default();

    while !sharer.should_stop() {
        let t = sharer.t_step();
        if t >= cfg.max_t_steps {
            break;
        }
        let start = Instant::now();

        if sharer.published_version() != model.version() {
            model = sharer.model();
            report.model_refreshes += 1;
            if !model.is_intact() {
                report.torn_snapshots += 1;
            }
        }

        states.copy_from_slice(env.states());
        let q = model.net.forward_ws(&states, n, &mut ws);
        vem.epsilons_into(t, &mut eps);
        select_actions(q, model.net.output_dim(), &eps, &mut rng, &mut actions);

        env.step_batch_into(&actions, &mut batch)?;

        sharer.replay.with_writer(|buf| {
            for i in 0..n {
                let row = i * STATE_DIM..(i + 1) * STATE_DIM;
                buf.push_parts(
                    &states[row.clone()],
                    actions[i] as u8,
                    batch.rewards[i],
                    &batch.storage_next_states[row],
                    batch.dones[i],
                );
            }
        });
        sharer.log_episodes(&batch.finished);
        sharer.set_epsilon_min_active(eps.iter().copied().fold(f64::INFINITY, f64::min));

        let slept = sharer.tfm.actor_pause();
        sharer.tfm.record_actor(start.elapsed().saturating_sub(slept));
        sharer.add_t_steps(n as u64);
        report.iterations += 1;
        report.transitions += n as u64;
    }
    Ok(report)
}
