use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use color_core::harness::bench::{bench_n, bench_report};
use color_core::harness::{self, evaluate, load_maps, EvalOptions, RunConfig};
use color_core::mapgen::{self, MapGenConfig};
use color_core::net::{Mlp, Q_NET_SIZES};
use color_core::sim::{EnvConfig, SimParams};

#[derive(Parser)]
#[command(name = "color", version, about = "Train, evaluate and benchmark a vectorized robot-navigation learner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint greedily on a directory (or file) of maps.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 12_345)]
        seed: u64,
        /// Take environment settings and nominal parameters from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Random-policy simulator throughput at N = 1, 16 and 64.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Wall-clock budget per N, in seconds.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// Copy counts to measure.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 16, 64])]
        n: Vec<usize>,
    },
    /// Generate procedural maps.
    Mapgen {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 400)]
        size: u32,
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train { config, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.out_dir = harness::out_root(&cfg.out_dir);
            let out = harness::train(&cfg)?;
            print!("{}", out.report());
            println!("run directory: {}", out.run_dir.display());
        }
        Cmd::Eval {
            ckpt,
            maps,
            episodes,
            seed,
            config,
        } => {
            if episodes == 0 {
                bail!("--episodes must be at least 1");
            }
            let net = Mlp::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            if net.sizes() != Q_NET_SIZES {
                bail!("checkpoint has layer sizes {:?}, expected {:?}", net.sizes(), Q_NET_SIZES);
            }
            let (env, nominal) = match config {
                Some(p) => {
                    let c = RunConfig::load(&p)?;
                    (c.env, c.nominal)
                }
                None => (EnvConfig::default(), SimParams::default()),
            };
            let maps = load_maps(&[maps])?;
            if maps.is_empty() {
                bail!("no maps found");
            }
            let report = evaluate(&net, &maps, &EvalOptions::new(episodes, seed, &env, &nominal))?;
            print!("{}", report.to_text());
        }
        Cmd::Bench { config, duration, n } => {
            let cfg = RunConfig::load(&config)?;
            if !(duration > 0.0) {
                bail!("--duration must be positive");
            }
            let maps: Vec<Arc<_>> = load_maps(&cfg.train_maps)?.into_iter().map(|(_, m)| m).collect();
            let mut results = Vec::new();
            for &k in &n {
                results.push(bench_n(
                    &maps,
                    k,
                    &cfg.env,
                    &cfg.ranges(),
                    Duration::from_secs_f64(duration),
                    cfg.seed,
                )?);
            }
            print!("{}", bench_report(&results));
        }
        Cmd::Mapgen {
            count,
            size,
            density,
            seed,
            out,
        } => {
            let cfg = MapGenConfig {
                size_cm: size,
                density,
                ..MapGenConfig::default()
            };
            let maps = mapgen::generate_set(&cfg, count, seed)?;
            for p in mapgen::write_set(&maps, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
