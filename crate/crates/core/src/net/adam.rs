use super::{Mlp, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Each step bumps the network version.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grad: &[T]) {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        self.t += 1;
        let c = self.cfg;
        let b1 = T::from(c.beta1).unwrap();
        let b2 = T::from(c.beta2).unwrap();
        let one = T::one();
        let bc1 = 1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = T::from(c.lr * bc2.sqrt() / bc1).unwrap();
        let eps = T::from(c.eps * bc2.sqrt()).unwrap();
        for (((p, &g), m), v) in net.params_mut().iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        }
        net.bump_version();
    }
}
