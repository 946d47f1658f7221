//! Batch normalization over (N, H, W) per channel.

use super::{Buffer, FeatureMap, Param};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct BnTrace {
    xhat: Vec<f32>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    /// Unbiased batch variance, for the running estimate.
    var_unbiased: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::filled(format!("{name}.weight"), vec![channels], 1.0),
            beta: Param::filled(format!("{name}.bias"), vec![channels], 0.0),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: vec![0.0; channels],
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: vec![1.0; channels],
            },
            channels,
        }
    }

    fn plane(x: &FeatureMap, n: usize, c: usize) -> std::ops::Range<usize> {
        let hw = x.h * x.w;
        let start = (n * x.c + c) * hw;
        start..start + hw
    }

    /// Normalizes with batch statistics.
    pub fn forward_train(&self, x: &FeatureMap) -> (FeatureMap, BnTrace) {
        assert_eq!(x.c, self.channels);
        let m = (x.n * x.h * x.w) as f64;
        let mut out = FeatureMap::zeros(x.n, x.c, x.h, x.w);
        let mut xhat = vec![0.0f32; x.data.len()];
        let mut inv_std = vec![0.0; x.c];
        let mut mean = vec![0.0; x.c];
        let mut var_unbiased = vec![0.0; x.c];
        for c in 0..x.c {
            let mut sum = 0.0f64;
            for n in 0..x.n {
                sum += x.data[Self::plane(x, n, c)].iter().map(|&v| v as f64).sum::<f64>();
            }
            let mu = sum / m;
            let mut sq = 0.0f64;
            for n in 0..x.n {
                sq += x.data[Self::plane(x, n, c)]
                    .iter()
                    .map(|&v| (v as f64 - mu).powi(2))
                    .sum::<f64>();
            }
            let var = sq / m;
            let is = 1.0 / (var + BN_EPS).sqrt();
            let (g, b) = (self.gamma.value[c] as f64, self.beta.value[c] as f64);
            for n in 0..x.n {
                let r = Self::plane(x, n, c);
                for j in r {
                    let xh = (x.data[j] as f64 - mu) * is;
                    xhat[j] = xh as f32;
                    out.data[j] = (g * xh + b) as f32;
                }
            }
            inv_std[c] = is;
            mean[c] = mu;
            var_unbiased[c] = if m > 1.0 { sq / (m - 1.0) } else { var };
        }
        (
            out,
            BnTrace {
                xhat,
                inv_std,
                mean,
                var_unbiased,
            },
        )
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &FeatureMap) -> FeatureMap {
        assert_eq!(x.c, self.channels);
        let mut out = x.clone();
        for c in 0..x.c {
            let is = 1.0 / (self.running_var.value[c] as f64 + BN_EPS).sqrt();
            let scale = (self.gamma.value[c] as f64 * is) as f32;
            let shift = (self.beta.value[c] as f64 - self.running_mean.value[c] as f64 * self.gamma.value[c] as f64 * is) as f32;
            for n in 0..x.n {
                out.data[Self::plane(x, n, c)]
                    .iter_mut()
                    .for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }

    pub fn update_running(&mut self, trace: &BnTrace) {
        let mom = BN_MOMENTUM;
        for c in 0..self.channels {
            let rm = &mut self.running_mean.value[c];
            *rm = (1.0 - mom) * *rm + mom * trace.mean[c] as f32;
            let rv = &mut self.running_var.value[c];
            *rv = (1.0 - mom) * *rv + mom * trace.var_unbiased[c] as f32;
        }
    }

    /// Backward through the batch-statistics forward.
    pub fn backward(&mut self, trace: &BnTrace, dy: &FeatureMap) -> FeatureMap {
        let m = (dy.n * dy.h * dy.w) as f64;
        let mut dx = FeatureMap::zeros(dy.n, dy.c, dy.h, dy.w);
        for c in 0..dy.c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for n in 0..dy.n {
                for j in Self::plane(dy, n, c) {
                    sum_dy += dy.data[j] as f64;
                    sum_dy_xhat += dy.data[j] as f64 * trace.xhat[j] as f64;
                }
            }
            self.gamma.grad[c] += sum_dy_xhat as f32;
            self.beta.grad[c] += sum_dy as f32;
            let k = self.gamma.value[c] as f64 * trace.inv_std[c] / m;
            for n in 0..dy.n {
                for j in Self::plane(dy, n, c) {
                    dx.data[j] = (k * (m * dy.data[j] as f64 - sum_dy - trace.xhat[j] as f64 * sum_dy_xhat)) as f32;
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;

    #[test]
    fn normalizes_each_channel() {
        let x = random_map(3, 2, 4, 5, 1);
        let bn = BatchNorm2d::new("bn", 2);
        let (y, _) = bn.forward_train(&x);
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|n| y.data[BatchNorm2d::plane(&y, n, c)].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = random_map(2, 3, 3, 3, 2);
        let mut bn = BatchNorm2d::new("bn", 3);
        bn.gamma.value = vec![0.5, 1.5, -1.0];
        bn.beta.value = vec![0.1, -0.2, 0.3];
        let upstream = random_vec(x.data.len(), 3);
        let (_, trace) = bn.forward_train(&x);
        let dy = FeatureMap::from_vec(2, 3, 3, 3, upstream.clone());
        let dx = bn.backward(&trace, &dy);
        let f = |xv: &[f32]| {
            let xm = FeatureMap::from_vec(2, 3, 3, 3, xv.to_vec());
            dot(&bn.forward_train(&xm).0.data, &upstream)
        };
        for i in [0, 4, 13, 26, 53] {
            assert_close(dx.data[i] as f64, fd(&x.data, i, 1e-2, f), 2e-2, "dx");
        }
        let g0 = bn.gamma.value.clone();
        for c in 0..3 {
            let num = fd(&g0, c, 1e-2, |g| {
                let mut b = bn.clone();
                b.gamma.value = g.to_vec();
                dot(&b.forward_train(&x).0.data, &upstream)
            });
            assert_close(bn.gamma.grad[c] as f64, num, 1e-2, "dgamma");
        }
    }

    #[test]
    fn running_statistics_converge_to_batch_statistics() {
        let x = random_map(4, 1, 3, 3, 9);
        let mut bn = BatchNorm2d::new("bn", 1);
        for _ in 0..200 {
            let (_, t) = bn.forward_train(&x);
            bn.update_running(&t);
        }
        let (train_out, _) = bn.forward_train(&x);
        let eval_out = bn.forward_eval(&x);
        // eval uses the unbiased variance, so outputs agree up to sqrt((m-1)/m)
        let ratio = ((36.0 - 1.0) / 36.0f64).sqrt();
        for (a, b) in train_out.data.iter().zip(&eval_out.data) {
            assert!((*a as f64 * ratio - *b as f64).abs() < 1e-4);
        }
    }
}
