//! Double DQN: the online network picks the next action, the target network
//! scores it.

use crate::error::{Error, Result};
use crate::net::{argmax, Adam, AdamConfig, Mlp, Workspace};
use crate::replay::Batch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdqnConfig {
    pub gamma: f64,
    pub target_sync_period: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            target_sync_period: 200,
            batch_size: 256,
            adam: AdamConfig::default(),
        }
    }
}

impl DdqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if self.target_sync_period == 0 || self.batch_size == 0 {
            return Err(Error::Config("target_sync_period and batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

/// `y = r + γ(1 − done)·Q_target(s′, argmax_a Q_online(s′, a))` per row.
pub fn compute_targets(batch: &Batch, online: &Mlp<f32>, target: &Mlp<f32>, gamma: f64) -> Vec<f32> {
    let mut ws_a = Workspace::new();
    let mut ws_b = Workspace::new();
    let mut out = Vec::new();
    targets_into(batch, online, target, gamma, &mut ws_a, &mut ws_b, &mut out);
    out
}

fn targets_into(
    batch: &Batch,
    online: &Mlp<f32>,
    target: &Mlp<f32>,
    gamma: f64,
    ws_online: &mut Workspace<f32>,
    ws_target: &mut Workspace<f32>,
    out: &mut Vec<f32>,
) {
    let b = batch.len();
    let n = online.output_dim();
    let q_on = online.forward_ws(&batch.next_states, b, ws_online);
    let q_tg = target.forward_ws(&batch.next_states, b, ws_target);
    out.clear();
    let g = gamma as f32;
    for i in 0..b {
        let a_star = argmax(&q_on[i * n..(i + 1) * n]);
        out.push(batch.rewards[i] + g * (1.0 - batch.dones[i]) * q_tg[i * n + a_star]);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub mean_abs_td: f64,
    pub online_version: u64,
    pub target_version: u64,
    pub synced: bool,
}

/// Learner-private state: online and target networks plus optimizer.
pub struct Ddqn {
    pub cfg: DdqnConfig,
    online: Mlp<f32>,
    target: Mlp<f32>,
    opt: Adam<f32>,
    updates: u64,
    ws_online: Workspace<f32>,
    ws_target: Workspace<f32>,
    ws_train: Workspace<f32>,
    grad: Vec<f32>,
    targets: Vec<f32>,
}

impl Ddqn {
    pub fn new(online: Mlp<f32>, cfg: DdqnConfig) -> Self {
        let mut target = online.clone();
        target.sync_from(&online);
        let n = online.n_params();
        Self {
            cfg,
            opt: Adam::new(n, cfg.adam),
            online,
            target,
            updates: 0,
            ws_online: Workspace::new(),
            ws_target: Workspace::new(),
            ws_train: Workspace::new(),
            grad: vec![0.0; n],
            targets: Vec::new(),
        }
    }

    pub fn online(&self) -> &Mlp<f32> {
        &self.online
    }

    pub fn target(&self) -> &Mlp<f32> {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        targets_into(
            batch,
            &self.online,
            &self.target,
            self.cfg.gamma,
            &mut self.ws_online,
            &mut self.ws_target,
            &mut self.targets,
        );
        let loss = self
            .online
            .backward(&batch.states, &batch.actions, &self.targets, &mut self.ws_train, &mut self.grad)?;
        let q = self.ws_train.output();
        let n = self.online.output_dim();
        let mean_abs_td = batch
            .actions
            .iter()
            .zip(&self.targets)
            .enumerate()
            .map(|(i, (&a, &y))| (q[i * n + a] - y).abs() as f64)
            .sum::<f64>()
            / batch.len() as f64;

        self.opt.step(&mut self.online, &self.grad);
        if !self.online.all_finite() {
            return Err(Error::Training(format!(
                "non-finite parameters after update {}",
                self.updates + 1
            )));
        }
        self.updates += 1;
        let synced = self.updates.is_multiple_of(self.cfg.target_sync_period);
        if synced {
            self.target.sync_from(&self.online);
        }
        Ok(UpdateStats {
            loss,
            mean_abs_td,
            online_version: self.online.version(),
            target_version: self.target.version(),
            synced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::STATE_DIM;
    use rand::Rng;

    fn random_batch(rng: &mut impl Rng, b: usize, dim: usize) -> Batch {
        Batch {
            states: (0..b * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            actions: (0..b).map(|_| rng.random_range(0..5)).collect(),
            rewards: (0..b).map(|_| rng.random_range(-1.0..1.0)).collect(),
            next_states: (0..b * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            dones: (0..b).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect(),
        }
    }

    #[test]
    fn terminal_rows_do_not_bootstrap() {
        let mut rng = derive_rng(5, 0);
        let online = Mlp::new(&[STATE_DIM, 16, 5], &mut rng);
        let target = Mlp::new(&[STATE_DIM, 16, 5], &mut rng);
        let mut batch = random_batch(&mut rng, 8, STATE_DIM);
        batch.dones = vec![1.0; 8];
        assert_eq!(compute_targets(&batch, &online, &target, 0.98), batch.rewards);
    }

    #[test]
    fn identical_networks_give_max_target() {
        let mut rng = derive_rng(6, 0);
        let online = Mlp::new(&[STATE_DIM, 16, 5], &mut rng);
        let batch = random_batch(&mut rng, 8, STATE_DIM);
        let y = compute_targets(&batch, &online, &online, 0.9);
        let q = online.forward(&batch.next_states, 8);
        for i in 0..8 {
            let m = q[i * 5..(i + 1) * 5].iter().copied().fold(f32::MIN, f32::max);
            let expect = batch.rewards[i] + 0.9 * (1.0 - batch.dones[i]) * m;
            assert!((y[i] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn repeated_updates_on_one_batch_reduce_loss() {
        let mut rng = derive_rng(7, 0);
        let cfg = DdqnConfig {
            adam: AdamConfig { lr: 1e-3, ..Default::default() },
            ..Default::default()
        };
        let mut algo = Ddqn::new(Mlp::new(&[STATE_DIM, 32, 5], &mut rng), cfg);
        let batch = random_batch(&mut rng, 32, STATE_DIM);
        let first = algo.update(&batch).unwrap().loss;
        let second = algo.update(&batch).unwrap().loss;
        assert!(second < first, "{second} !< {first}");
    }

    #[test]
    fn target_syncs_on_period_boundary() {
        let mut rng = derive_rng(8, 0);
        let cfg = DdqnConfig {
            target_sync_period: 3,
            ..Default::default()
        };
        let mut algo = Ddqn::new(Mlp::new(&[STATE_DIM, 8, 5], &mut rng), cfg);
        let batch = random_batch(&mut rng, 4, STATE_DIM);
        for k in 1..=7u64 {
            let s = algo.update(&batch).unwrap();
            assert_eq!(s.synced, k % 3 == 0);
            assert_eq!(s.target_version, (k / 3) * 3);
            assert_eq!(s.online_version, k);
        }
    }

    #[test]
    fn zero_residual_leaves_params_unchanged() {
        // gamma = 0 and rewards equal to current Q: targets match predictions.
        let mut rng = derive_rng(9, 0);
        let cfg = DdqnConfig { gamma: 0.0, ..Default::default() };
        let mut algo = Ddqn::new(Mlp::new(&[STATE_DIM, 8, 5], &mut rng), cfg);
        let mut batch = random_batch(&mut rng, 4, STATE_DIM);
        let q = algo.online().forward(&batch.states, 4);
        batch.rewards = (0..4).map(|i| q[i * 5 + batch.actions[i]]).collect();
        let before = algo.online().params().to_vec();
        let s = algo.update(&batch).unwrap();
        assert_eq!(s.loss, 0.0);
        assert_eq!(algo.online().params(), &before[..]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(DdqnConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(DdqnConfig { target_sync_period: 0, ..Default::default() }.validate().is_err());
        assert!(DdqnConfig::default().validate().is_ok());
    }
}
