use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "wall_time_s,T_step,B_step,measured_TPS,xi_ms,epsilon_min_active,buffer_size,recent_arrival_rate,recent_mean_return";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub wall_time_s: f64,
    pub t_step: u64,
    pub b_step: u64,
    pub measured_tps: f64,
    pub xi_ms: f64,
    pub epsilon_min_active: f64,
    pub buffer_size: usize,
    pub recent_arrival_rate: Option<f64>,
    pub recent_mean_return: Option<f64>,
}

/// Append-only CSV, flushed after every row.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        };
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, r: &MetricsRow) -> Result<()> {
        let s = format!(
            "{:.3},{},{},{:.3},{:.3},{:.4},{},{},{}",
            r.wall_time_s,
            r.t_step,
            r.b_step,
            r.measured_tps,
            r.xi_ms,
            r.epsilon_min_active,
            r.buffer_size,
            opt(r.recent_arrival_rate),
            opt(r.recent_mean_return)
        );
        self.line(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_flushed_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&p).unwrap();
        w.write(&MetricsRow {
            wall_time_s: 1.0,
            t_step: 16,
            b_step: 0,
            measured_tps: 0.0,
            xi_ms: 0.0,
            epsilon_min_active: 0.01,
            buffer_size: 16,
            recent_arrival_rate: None,
            recent_mean_return: Some(-3.5),
        })
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "1.000,16,0,0.000,0.000,0.0100,16,,-3.5000");
    }
}
