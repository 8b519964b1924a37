use serde::{Deserialize, Serialize};

use super::RankerParams;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: RankerParams<T>,
    v: RankerParams<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, d: usize, h: usize) -> Self {
        Adam {
            cfg,
            m: RankerParams::zeros(d, h),
            v: RankerParams::zeros(d, h),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut RankerParams<T>, grad: &RankerParams<T>) {
        self.t += 1;
        let b1 = T::of(self.cfg.beta1);
        let b2 = T::of(self.cfg.beta2);
        let one = T::one();
        self.m.zip_mut(grad, |m, g| *m = b1 * *m + (one - b1) * g);
        self.v.zip_mut(grad, |v, g| *v = b2 * *v + (one - b2) * g * g);

        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let lr = T::of(self.cfg.learning_rate);
        let eps = T::of(self.cfg.epsilon);
        // Combine the moment buffers into one per-parameter update.
        let mut update = self.m.clone();
        update.zip_mut(&self.v, |m, v| {
            *m = lr * (*m / c1) / ((v / c2).sqrt() + eps);
        });
        params.zip_mut(&update, |p, u| *p -= u);
    }
}
