//! Per-episode physical parameters and the intervals they are drawn from.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Upper bound on `control_delay_steps`.
pub const DELAY_QUEUE_CAPACITY: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Velocity smoothing factor of the first-order response, in (0, 1).
    pub k: f64,
    /// Simulated seconds advanced per step.
    pub control_interval_s: f64,
    pub control_delay_steps: usize,
    pub v_linear_max_cm_s: f64,
    pub v_angular_max_rad_s: f64,
    pub lidar_noise_std_cm: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            k: 0.6,
            control_interval_s: 0.1,
            control_delay_steps: 1,
            v_linear_max_cm_s: 18.0,
            v_angular_max_rad_s: 1.0,
            lidar_noise_std_cm: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::Config(format!("K must lie in (0, 1), got {}", self.k)));
        }
        if !(self.control_interval_s > 0.0) {
            return Err(Error::Config("control interval must be positive".into()));
        }
        if self.control_delay_steps > DELAY_QUEUE_CAPACITY {
            return Err(Error::Config(format!(
                "control delay {} exceeds queue capacity {DELAY_QUEUE_CAPACITY}",
                self.control_delay_steps
            )));
        }
        if !(self.v_linear_max_cm_s > 0.0 && self.v_angular_max_rad_s > 0.0) {
            return Err(Error::Config("velocity limits must be positive".into()));
        }
        if !(self.lidar_noise_std_cm >= 0.0) {
            return Err(Error::Config("sensor noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn around(v: f64, fraction: f64) -> Self {
        let half = (v * fraction).abs();
        Self { lo: v - half, hi: v + half }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }
}

/// Uniform intervals every [`SimParams`] field is resampled from at reset.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityRanges {
    pub k: Interval,
    pub control_interval_s: Interval,
    /// Inclusive integer range.
    pub control_delay_steps: (usize, usize),
    pub v_linear_max_cm_s: Interval,
    pub v_angular_max_rad_s: Interval,
    pub lidar_noise_std_cm: Interval,
}

impl DiversityRanges {
    /// Zero-width ranges: every reset yields `nominal`.
    pub fn fixed(nominal: &SimParams) -> Self {
        Self::around(nominal, 0.0)
    }

    /// `nominal ± fraction·nominal` per field. The integer delay widens to
    /// `nominal ± ceil(fraction·nominal)` so that small delays still vary.
    pub fn around(nominal: &SimParams, fraction: f64) -> Self {
        let d = nominal.control_delay_steps;
        let spread = if fraction > 0.0 {
            (fraction * d as f64).ceil().max(1.0) as usize
        } else {
            0
        };
        Self {
            k: Interval::around(nominal.k, fraction),
            control_interval_s: Interval::around(nominal.control_interval_s, fraction),
            control_delay_steps: (d.saturating_sub(spread), d + spread),
            v_linear_max_cm_s: Interval::around(nominal.v_linear_max_cm_s, fraction),
            v_angular_max_rad_s: Interval::around(nominal.v_angular_max_rad_s, fraction),
            lidar_noise_std_cm: Interval::around(nominal.lidar_noise_std_cm, fraction),
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.k.width() == 0.0
            && self.control_interval_s.width() == 0.0
            && self.control_delay_steps.0 == self.control_delay_steps.1
            && self.v_linear_max_cm_s.width() == 0.0
            && self.v_angular_max_rad_s.width() == 0.0
            && self.lidar_noise_std_cm.width() == 0.0
    }

    /// Checks that every value inside the ranges is a valid [`SimParams`].
    pub fn validate(&self) -> Result<()> {
        let ordered = [
            self.k,
            self.control_interval_s,
            self.v_linear_max_cm_s,
            self.v_angular_max_rad_s,
            self.lidar_noise_std_cm,
        ]
        .iter()
        .all(|i| i.lo <= i.hi)
            && self.control_delay_steps.0 <= self.control_delay_steps.1;
        if !ordered {
            return Err(Error::Config("diversity range with lo > hi".into()));
        }
        for corner in [false, true] {
            let pick = |i: Interval| if corner { i.hi } else { i.lo };
            SimParams {
                k: pick(self.k),
                control_interval_s: pick(self.control_interval_s),
                control_delay_steps: if corner { self.control_delay_steps.1 } else { self.control_delay_steps.0 },
                v_linear_max_cm_s: pick(self.v_linear_max_cm_s),
                v_angular_max_rad_s: pick(self.v_angular_max_rad_s),
                lidar_noise_std_cm: pick(self.lidar_noise_std_cm),
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut SimRng) -> SimParams {
        let k = self.k.sample(rng);
        let control_interval_s = self.control_interval_s.sample(rng);
        let (dlo, dhi) = self.control_delay_steps;
        let control_delay_steps = rng.random_range(dlo..=dhi);
        SimParams {
            k,
            control_interval_s,
            control_delay_steps,
            v_linear_max_cm_s: self.v_linear_max_cm_s.sample(rng),
            v_angular_max_rad_s: self.v_angular_max_rad_s.sample(rng),
            lidar_noise_std_cm: self.lidar_noise_std_cm.sample(rng),
        }
    }
}
