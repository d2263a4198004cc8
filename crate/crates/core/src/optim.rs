//! First-order optimizers over flat parameter vectors.

use alloc::vec;
use alloc::vec::Vec;

/// Rescale `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = libm::sqrt(crate::math::sq_norm(grad));
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= k;
        }
    }
    norm
}

/// SGD with heavy-ball momentum (`momentum = 0` gives plain SGD).
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(n: usize, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_norm() {
        let mut g = [3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut h = [0.1, 0.0];
        clip_grad_norm(&mut h, 1.0);
        assert_eq!(h, [0.1, 0.0]);
    }

    #[test]
    fn optimizers_minimize_a_bowl() {
        let mut p = [2.0, -3.0];
        let mut sgd = Sgd::new(2, 0.1, 0.9);
        let mut q = [2.0, -3.0];
        let mut adam = Adam::new(2, 0.05);
        for _ in 0..500 {
            let g = [2.0 * p[0], 2.0 * p[1]];
            sgd.step(&mut p, &g);
            let g = [2.0 * q[0], 2.0 * q[1]];
            adam.step(&mut q, &g);
        }
        assert!(p[0].abs() < 1e-6 && p[1].abs() < 1e-6);
        assert!(q[0].abs() < 1e-2 && q[1].abs() < 1e-2);
    }
}
