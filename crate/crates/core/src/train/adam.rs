//! Adaptive-moment updates and the cosine learning-rate schedule.

use crate::autodiff::Tensor;
use crate::container::Container;
use crate::error::Result;
use crate::nn::Params;

/// `lr_min + (lr_max - lr_min)(1 + cos(pi step / total)) / 2`; `total = 0` gives `lr_max`.
pub fn cosine_lr(step: usize, total: usize, lr_min: f64, lr_max: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let t = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        let zeros = || -> Vec<Tensor> {
            params
                .values()
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update of every non-frozen parameter.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor], lr: f64) {
        debug_assert_eq!(grads.len(), params.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, g) in grads.iter().enumerate() {
            if params.is_frozen(k) {
                continue;
            }
            let mut value = params.get(k).clone();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((x, &g), m), v) in value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
            params.set(k, value);
        }
    }

    pub fn write_into(&self, c: &mut Container, params: &Params, prefix: &str) {
        for (k, name) in params.names().iter().enumerate() {
            c.push_tensor(format!("{prefix}m.{name}"), &self.m[k]);
            c.push_tensor(format!("{prefix}v.{name}"), &self.v[k]);
        }
    }

    pub fn read_from(&mut self, c: &Container, params: &Params, prefix: &str, t: u64) -> Result<()> {
        for (k, name) in params.names().iter().enumerate() {
            self.m[k] = c.tensor(&format!("{prefix}m.{name}"))?;
            self.v[k] = c.tensor(&format!("{prefix}v.{name}"))?;
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-5, 1e-3), 1e-3);
        assert!((cosine_lr(100, 100, 1e-5, 1e-3) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-5, 1e-3) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = Params::new();
        p.add("x", Tensor::row(vec![1.0, -2.0]));
        let before = p.clone();
        let mut adam = Adam::new(&p);
        for _ in 0..10 {
            adam.step(&mut p, &[Tensor::zeros(1, 2)], 1e-2);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut p = Params::new();
        let k = p.add("x", Tensor::scalar(1.0));
        p.set_frozen(k, true);
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &[Tensor::scalar(5.0)], 0.1);
        assert_eq!(p.get(k).item(), 1.0);
    }

    #[test]
    fn scalar_quadratic_converges() {
        let mut p = Params::new();
        p.add("x", Tensor::scalar(1.0));
        let mut adam = Adam::new(&p);
        for step in 0..500 {
            let x = p.get(0).item();
            adam.step(&mut p, &[Tensor::scalar(2.0 * x)], cosine_lr(step, 500, 1e-5, 5e-2));
        }
        assert!(p.get(0).item().abs() < 1e-3, "{}", p.get(0).item());
    }
}
