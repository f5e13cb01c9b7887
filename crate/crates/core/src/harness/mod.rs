//! Run configuration, training, evaluation and benchmarking.

pub mod bench;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod train;

use std::path::{Path, PathBuf};

pub use config::{Mode, RunConfig};
pub use eval::{evaluate, EvalOptions, EvalReport, MapResult};
pub use train::{load_maps, train, TrainOutcome};

/// Output root: `COLOR_OUT_DIR` when set, else `configured`.
pub fn out_root(configured: &Path) -> PathBuf {
    std::env::var_os("COLOR_OUT_DIR")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| configured.to_path_buf())
}
