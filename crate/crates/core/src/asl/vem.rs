//! Vectorized ε-greedy exploration: copies below the exploring interval act
//! with `e_min`; ε grows linearly across the exploring interval up to
//! `e_max`, and the interval shrinks over training.

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::argmax;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VemSchedule {
    pub n: usize,
    pub or_init: usize,
    pub or_final: usize,
    pub decay_steps: u64,
    pub e_min: f64,
    pub e_max: f64,
}

impl Default for VemSchedule {
    fn default() -> Self {
        Self {
            n: 16,
            or_init: 16,
            or_final: 3,
            decay_steps: 500_000,
            e_min: 0.01,
            e_max: 0.8,
        }
    }
}

impl VemSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.or_final && self.or_final <= self.or_init && self.or_init <= self.n) {
            return Err(Error::Config(format!(
                "need 1 <= or_final ({}) <= or_init ({}) <= N ({})",
                self.or_final, self.or_init, self.n
            )));
        }
        if !(0.0 <= self.e_min && self.e_min <= self.e_max && self.e_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= e_min ({}) <= e_max ({}) <= 1",
                self.e_min, self.e_max
            )));
        }
        if self.decay_steps == 0 {
            return Err(Error::Config("decay_steps must be positive".into()));
        }
        Ok(())
    }

    /// Size of the exploring interval after `t` environment steps.
    pub fn exploring(&self, t: u64) -> usize {
        let frac = (t as f64 / self.decay_steps as f64).min(1.0);
        let or = self.or_init as f64 + (self.or_final as f64 - self.or_init as f64) * frac;
        or.round() as usize
    }

    pub fn epsilon(&self, i: usize, t: u64) -> f64 {
        assert!(i < self.n, "copy index {i} out of range");
        let or = self.exploring(t);
        let first = self.n - or;
        if i < first {
            self.e_min
        } else if or == 1 {
            self.e_max
        } else {
            let f = (i - first) as f64 / (or - 1) as f64;
            self.e_min * (1.0 - f) + self.e_max * f
        }
    }

    pub fn epsilons_into(&self, t: u64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n).map(|i| self.epsilon(i, t)));
    }
}

/// Per row: a uniform random action with probability `eps[i]`, otherwise
/// the greedy one (lowest index on ties).
pub fn select_actions<R: Rng + ?Sized>(
    q: &[f32],
    n_actions: usize,
    eps: &[f64],
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    assert_eq!(q.len(), eps.len() * n_actions, "q/epsilon shape mismatch");
    out.clear();
    for (row, &e) in q.chunks_exact(n_actions).zip(eps) {
        let explore = rng.random::<f64>() < e;
        out.push(if explore { rng.random_range(0..n_actions) } else { argmax(row) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use proptest::prelude::*;

    #[test]
    fn endpoint_values() {
        let v = VemSchedule::default();
        for t in [0, 100_000, 500_000, 2_000_000] {
            assert_eq!(v.epsilon(15, t), 0.8);
        }
        for t in [1, 100_000, 500_000] {
            assert_eq!(v.epsilon(0, t), 0.01);
        }
        let e = v.epsilon(8, 0);
        assert!((e - (0.01 + 0.79 * 8.0 / 15.0)).abs() < 1e-12);
        assert_eq!(v.exploring(0), 16);
        assert_eq!(v.exploring(500_000), 3);
        assert_eq!(v.exploring(10_000_000), 3);
    }

    #[test]
    fn single_explorer_gets_e_max() {
        let v = VemSchedule { or_init: 1, or_final: 1, ..Default::default() };
        assert_eq!(v.epsilon(15, 0), 0.8);
        assert_eq!(v.epsilon(14, 0), 0.01);
    }

    #[test]
    fn greedy_and_ties() {
        let mut out = Vec::new();
        let q = [0.0, 2.0, 2.0, 1.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0];
        select_actions(&q, 5, &[0.0, 0.0], &mut derive_rng(0, 0), &mut out);
        assert_eq!(out, vec![1, 0]);
    }

    #[test]
    fn full_exploration_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = derive_rng(1, 0);
        let q = vec![0.0f32; 100 * 5];
        let eps = vec![1.0; 100];
        let mut counts = [0f64; 5];
        let mut out = Vec::new();
        for _ in 0..1000 {
            select_actions(&q, 5, &eps, &mut rng, &mut out);
            for &a in &out {
                counts[a] += 1.0;
            }
        }
        let e = 100_000.0 / 5.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn bad_schedules_rejected() {
        assert!(VemSchedule { or_init: 17, ..Default::default() }.validate().is_err());
        assert!(VemSchedule { or_final: 0, ..Default::default() }.validate().is_err());
        assert!(VemSchedule { e_min: 0.9, ..Default::default() }.validate().is_err());
        assert!(VemSchedule::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(n in 1usize..40, a in 1usize..40, b in 1usize..40, t in 0u64..2_000_000, t2 in 0u64..2_000_000) {
            let (or_final, or_init) = (a.min(b).min(n), a.max(b).min(n));
            let v = VemSchedule { n, or_init, or_final, decay_steps: 500_000, e_min: 0.01, e_max: 0.8 };
            prop_assert!(v.validate().is_ok());
            let mut prev = 0.0;
            for i in 0..n {
                let e = v.epsilon(i, t);
                prop_assert!(e >= v.e_min - 1e-15 && e <= v.e_max + 1e-15);
                prop_assert!(e >= prev);
                prev = e;
            }
            let (lo, hi) = (t.min(t2), t.max(t2));
            prop_assert!(v.exploring(hi) <= v.exploring(lo));
        }
    }
}
