use serde::{Deserialize, Serialize};

use super::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i].as_f64();
                let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * gi * gi;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                p[i] = T::lit(p[i].as_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0f64, -2.0];
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        adam.step(vec![&mut p], &[vec![0.0, 0.0]]);
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0f64];
        let mut adam = Adam::new(cfg, &[1]);
        let mut last = 0.0;
        for _ in 0..1000 {
            let before = p[0];
            adam.step(vec![&mut p], &[vec![0.3]]);
            last = before - p[0];
        }
        // closed form at step t: m_hat = g and v_hat = g^2 exactly, so update = lr*g/(|g|+eps)
        let expected = cfg.lr * 0.3 / (0.3 + cfg.eps);
        assert!((last - expected).abs() < 1e-12, "{last}");
    }

    #[test]
    fn first_step_is_scale_invariant() {
        let mut p = vec![0.0f64, 0.0];
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        adam.step(vec![&mut p], &[vec![0.7, 1.4]]);
        assert!((p[0] - p[1]).abs() < 1e-10);
        assert!((p[0] + 1e-3).abs() < 1e-9);
    }
}
