//! One training run: build everything from a `RunConfig`, run the actor and
//! learner, track metrics and checkpoints, and evaluate the result.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::config::RunConfig;
use super::eval::{evaluate, EvalOptions, EvalReport};
use super::metrics::{MetricsRow, MetricsWriter};
use crate::asl::{self, ActorConfig, ActorReport, LearnerConfig, LearnerReport, Sharer};
use crate::ddqn::Ddqn;
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::mapgen;
use crate::net::{Mlp, Q_NET_SIZES};
use crate::rng::derive_rng;
use crate::vec_env::VecEnv;

const NET_STREAM: u64 = 3 << 40;

pub type NamedMap = (String, Arc<GridMap>);

/// Loads map files in order; a directory contributes its `map_*.txt` files.
pub fn load_maps(paths: &[PathBuf]) -> Result<Vec<NamedMap>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for (f, m) in mapgen::load_dir(p)? {
                out.push((stem(&f), Arc::new(m)));
            }
        } else {
            out.push((stem(p), Arc::new(GridMap::load(p)?)));
        }
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Output directory of a run.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}-{}-s{}", cfg.name, cfg.mode.as_str(), cfg.seed))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub actor: ActorReport,
    pub learner: LearnerReport,
    pub wall_time_s: f64,
    pub measured_tps: f64,
    /// B_step at which the selected checkpoint was taken.
    pub best_b_step: u64,
    pub best_train_rate: f64,
    /// Selected network on the maps it trained on.
    pub train_eval: EvalReport,
    pub heldout_eval: Option<EvalReport>,
}

struct Best {
    net: Mlp<f32>,
    b_step: u64,
    rate: f64,
}

/// Trains, then evaluates the best checkpoint (by training-map arrival rate)
/// on the training and held-out maps.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dir = run_dir(cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg_path = dir.join("config.ini");
    std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;

    let train_maps = load_maps(&cfg.train_maps)?;
    if train_maps.is_empty() {
        return Err(Error::Config("no training maps found".into()));
    }
    let heldout_maps = load_maps(&cfg.heldout_maps)?;

    let assignment = cfg.assignment(train_maps.len());
    let used: BTreeSet<usize> = assignment.iter().copied().collect();
    let eval_train: Vec<NamedMap> = used.iter().map(|&i| train_maps[i].clone()).collect();
    let env_cfgs: Vec<_> = assignment.iter().map(|&m| cfg.env_for_map(m)).collect();
    let arcs: Vec<Arc<GridMap>> = train_maps.iter().map(|(_, m)| m.clone()).collect();
    let mut env = VecEnv::new(&arcs, &assignment, &env_cfgs, &[cfg.ranges()])?;
    env.set_parallel(rayon::current_num_threads() > 1);
    env.reset_all(cfg.seed)?;

    let net = Mlp::new(&Q_NET_SIZES, &mut derive_rng(cfg.seed, NET_STREAM));
    let mut ddqn = Ddqn::new(net.clone(), cfg.ddqn());
    let sharer = Sharer::new(net, cfg.replay_capacity, cfg.tfm(), cfg.episode_window);
    let actor_cfg = ActorConfig {
        max_t_steps: cfg.max_t_steps,
        vem: cfg.vem,
        seed: cfg.seed,
    };
    let learner_cfg = LearnerConfig {
        batch_size: cfg.batch_size,
        start_threshold: cfg.start_threshold,
        upload_period: cfg.upload_period,
        seed: cfg.seed,
    };
    let eval_opts = EvalOptions::new(cfg.eval_episodes, cfg.eval_seed, &cfg.env, &cfg.nominal);

    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let evals_path = dir.join("evals.csv");
    std::fs::write(&evals_path, "wall_time_s,T_step,B_step,train_arrival_rate\n").map_err(|e| Error::io(&evals_path, e))?;
    let best_path = dir.join("best.ckpt");
    let latest_path = dir.join("latest.ckpt");

    let start = Instant::now();
    let mut last_metrics = f64::NEG_INFINITY;
    let mut next_eval = cfg.eval_every_b_steps;
    let mut best: Option<Best> = None;

    let checkpoint = |net: &Mlp<f32>, b_step: u64, t_step: u64, best: &mut Option<Best>| -> Result<()> {
        let r = evaluate(net, &eval_train, &eval_opts)?;
        let rate = r.mean_arrival_rate();
        let mut f = OpenOptions::new()
            .append(true)
            .open(&evals_path)
            .map_err(|e| Error::io(&evals_path, e))?;
        writeln!(f, "{:.3},{t_step},{b_step},{rate:.4}", start.elapsed().as_secs_f64())
            .map_err(|e| Error::io(&evals_path, e))?;
        net.save(&latest_path)?;
        if best.as_ref().is_none_or(|b| rate > b.rate) {
            net.save(&best_path)?;
            *best = Some(Best { net: net.clone(), b_step, rate });
        }
        Ok(())
    };

    let poll = Duration::from_millis(50);
    let every = cfg.eval_every_b_steps;
    let (actor, learner) = asl::run(&sharer, &mut env, &actor_cfg, &mut ddqn, &learner_cfg, poll, |s| {
        let now = start.elapsed().as_secs_f64();
        if now - last_metrics >= cfg.metrics_every_s {
            last_metrics = now;
            metrics.write(&metrics_row(s, now))?;
        }
        let b = s.b_step();
        if every > 0 && b >= next_eval {
            next_eval = (b / every + 1) * every;
            let model = s.model();
            checkpoint(&model.net, b, s.t_step(), &mut best)?;
        }
        Ok(())
    })?;
    metrics.write(&metrics_row(&sharer, start.elapsed().as_secs_f64()))?;

    let wall_time_s = start.elapsed().as_secs_f64();
    let measured_tps = sharer.measured_tps();
    let b_final = sharer.b_step();
    checkpoint(ddqn.online(), b_final, sharer.t_step(), &mut best)?;
    let best = best.expect("final checkpoint always sets a best");

    let train_eval = evaluate(&best.net, &train_maps, &eval_opts)?;
    let heldout_eval = if heldout_maps.is_empty() {
        None
    } else {
        Some(evaluate(&best.net, &heldout_maps, &eval_opts)?)
    };

    let outcome = TrainOutcome {
        run_dir: dir.clone(),
        actor,
        learner,
        wall_time_s,
        measured_tps,
        best_b_step: best.b_step,
        best_train_rate: best.rate,
        train_eval,
        heldout_eval,
    };
    let report_path = dir.join("report.txt");
    std::fs::write(&report_path, outcome.report()).map_err(|e| Error::io(&report_path, e))?;
    Ok(outcome)
}

fn metrics_row(s: &Sharer, now: f64) -> MetricsRow {
    let (rate, ret) = s.with_episodes(|e| (e.recent_arrival_rate(), e.recent_mean_return()));
    MetricsRow {
        wall_time_s: now,
        t_step: s.t_step(),
        b_step: s.b_step(),
        measured_tps: s.measured_tps(),
        xi_ms: s.tfm.last_xi() * 1e3,
        epsilon_min_active: s.epsilon_min_active(),
        buffer_size: s.replay.len(),
        recent_arrival_rate: rate,
        recent_mean_return: ret,
    }
}

impl TrainOutcome {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "wall_time_s = {:.1}", self.wall_time_s);
        let _ = writeln!(s, "T_step = {}", self.actor.transitions);
        let _ = writeln!(s, "B_step = {}", self.learner.updates);
        let _ = writeln!(s, "measured_TPS = {:.2}", self.measured_tps);
        let _ = writeln!(s, "publishes = {}", self.learner.publishes);
        let _ = writeln!(s, "best_B_step = {}", self.best_b_step);
        let _ = writeln!(s, "best_train_rate = {:.4}", self.best_train_rate);
        let _ = writeln!(s, "\n# training maps\n{}", self.train_eval.to_text());
        if let Some(h) = &self.heldout_eval {
            let _ = writeln!(s, "# held-out maps\n{}", h.to_text());
        }
        s
    }
}
