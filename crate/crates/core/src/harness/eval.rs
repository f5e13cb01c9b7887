//! Greedy-policy evaluation at fixed parameters.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::Result;
use crate::map::GridMap;
use crate::net::{argmax, Mlp, Workspace};
use crate::rng::{derive_rng, mix_seed};
use crate::sim::{DiversityRanges, Env, EnvConfig, Event, RandomObstacles, SimParams};
use crate::STATE_DIM;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub env: EnvConfig,
    /// Every episode runs with these parameters unless `ranges` is set.
    pub nominal: SimParams,
    pub ranges: Option<DiversityRanges>,
}

impl EvalOptions {
    /// Per-episode random obstacles are always off during evaluation.
    pub fn new(episodes: usize, seed: u64, env: &EnvConfig, nominal: &SimParams) -> Self {
        let mut env = env.clone();
        env.random_obstacles = RandomObstacles { count: 0, ..env.random_obstacles };
        Self {
            episodes,
            seed,
            env,
            nominal: *nominal,
            ranges: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub name: String,
    pub episodes: usize,
    pub arrivals: usize,
    pub collisions: usize,
    /// Timeouts count as failures.
    pub timeouts: usize,
    pub returns: Vec<f64>,
}

impl MapResult {
    pub fn arrival_rate(&self) -> f64 {
        self.arrivals as f64 / self.episodes as f64
    }

    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub maps: Vec<MapResult>,
}

impl EvalReport {
    /// Mean of the per-map arrival rates.
    pub fn mean_arrival_rate(&self) -> f64 {
        self.maps.iter().map(MapResult::arrival_rate).sum::<f64>() / self.maps.len() as f64
    }

    /// Arrival rate over all episodes pooled.
    pub fn pooled_arrival_rate(&self) -> f64 {
        let eps: usize = self.maps.iter().map(|m| m.episodes).sum();
        let arr: usize = self.maps.iter().map(|m| m.arrivals).sum();
        arr as f64 / eps as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("map,episodes,arrivals,collisions,timeouts,arrival_rate,mean_return\n");
        for m in &self.maps {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.4},{:.3}",
                m.name,
                m.episodes,
                m.arrivals,
                m.collisions,
                m.timeouts,
                m.arrival_rate(),
                m.mean_return()
            );
        }
        let _ = writeln!(s, "mean,,,,,{:.4},", self.mean_arrival_rate());
        s
    }
}

/// Runs `episodes` greedy episodes on each map. Episode `e` on map `m`
/// draws from stream `e` of `mix_seed(seed, m)`, so results depend only on
/// the network, the maps in order, and the options.
pub fn evaluate(net: &Mlp<f32>, maps: &[(String, Arc<GridMap>)], opts: &EvalOptions) -> Result<EvalReport> {
    let ranges = opts.ranges.clone().unwrap_or_else(|| DiversityRanges::fixed(&opts.nominal));
    let mut out = Vec::with_capacity(maps.len());
    let mut ws = Workspace::new();
    for (m, (name, map)) in maps.iter().enumerate() {
        let k = opts.episodes;
        let map_seed = mix_seed(opts.seed, m as u64);
        let mut envs = Vec::with_capacity(k);
        let mut rngs = Vec::with_capacity(k);
        let mut states = vec![0f32; k * STATE_DIM];
        for e in 0..k {
            let mut env = Env::new(map.clone(), opts.env.clone(), ranges.clone())?;
            let mut rng = derive_rng(map_seed, e as u64);
            env.reset_into(&mut rng, &mut states[e * STATE_DIM..(e + 1) * STATE_DIM])?;
            envs.push(env);
            rngs.push(rng);
        }
        let mut returns = vec![0.0; k];
        let mut events = vec![Event::None; k];
        let mut active: Vec<usize> = (0..k).collect();
        let mut batch = Vec::with_capacity(k * STATE_DIM);
        while !active.is_empty() {
            batch.clear();
            for &e in &active {
                batch.extend_from_slice(&states[e * STATE_DIM..(e + 1) * STATE_DIM]);
            }
            let q = net.forward_ws(&batch, active.len(), &mut ws);
            let n_act = net.output_dim();
            let actions: Vec<usize> = q.chunks_exact(n_act).map(argmax).collect();
            let mut still = Vec::with_capacity(active.len());
            for (&e, &a) in active.iter().zip(&actions) {
                let row = &mut states[e * STATE_DIM..(e + 1) * STATE_DIM];
                let info = envs[e].step_into(a, &mut rngs[e], row)?;
                returns[e] += info.reward as f64;
                if info.done || info.truncated {
                    events[e] = info.event;
                } else {
                    still.push(e);
                }
            }
            active = still;
        }
        out.push(MapResult {
            name: name.clone(),
            episodes: k,
            arrivals: events.iter().filter(|&&e| e == Event::Arrival).count(),
            collisions: events.iter().filter(|&&e| e == Event::Collision).count(),
            timeouts: events.iter().filter(|&&e| e == Event::Timeout).count(),
            returns,
        });
    }
    Ok(EvalReport { maps: out })
}
