//! Fully connected layer on row-major batches.

use rand::Rng;

use super::{sgemm, Param};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    /// Uniform(±1/√in) initialization for weight and bias.
    pub fn new<R: Rng + ?Sized>(name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Linear {
            weight: Param::uniform(format!("{name}.weight"), vec![out_features, in_features], bound, rng),
            bias: Param::uniform(format!("{name}.bias"), vec![out_features], bound, rng),
            in_features,
            out_features,
        }
    }

    /// `x` holds `batch` rows of `in_features`.
    pub fn forward(&self, x: &[f32], batch: usize) -> Vec<f32> {
        assert_eq!(x.len(), batch * self.in_features, "{}: input width", self.weight.name);
        let mut y: Vec<f32> = (0..batch).flat_map(|_| self.bias.value.iter().copied()).collect();
        sgemm(batch, self.in_features, self.out_features, x, false, &self.weight.value, true, &mut y, 1.0);
        y
    }

    /// Gradient with respect to the input only; parameters are left untouched.
    pub fn input_grad(&self, dy: &[f32], batch: usize) -> Vec<f32> {
        let mut dx = vec![0.0; batch * self.in_features];
        sgemm(batch, self.out_features, self.in_features, dy, false, &self.weight.value, false, &mut dx, 0.0);
        dx
    }

    /// Accumulates weight and bias gradients for the pair (x, dy).
    pub fn accumulate_grad(&mut self, x: &[f32], dy: &[f32], batch: usize) {
        sgemm(self.out_features, batch, self.in_features, dy, true, x, false, &mut self.weight.grad, 1.0);
        for row in dy.chunks_exact(self.out_features) {
            self.bias.grad.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
    }

    /// Full backward: accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[f32], dy: &[f32], batch: usize) -> Vec<f32> {
        self.accumulate_grad(x, dy, batch);
        self.input_grad(dy, batch)
    }
}
