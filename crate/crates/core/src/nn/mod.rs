//! Minimal CPU layers with explicit backward passes.
//!
//! Forward passes take `&self` and return a trace holding whatever the
//! backward pass needs, so inference can run concurrently on a shared model
//! and a single training forward can feed several backward calls. Backward
//! passes accumulate into [`Param::grad`].
//!
//! All per-sample work is spread over the batch through [`Exec`]; parameter
//! gradients are reduced over samples in index order, so sequential and
//! parallel execution give bit-identical results.

pub mod adam;
pub mod block;
pub mod conv;
pub mod linear;
pub mod norm;
pub mod pool;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig, AdamState, WeightDecay};
pub use block::{BasicBlock, BlockTrace, Stage, StageTrace};
pub use conv::Conv2d;
pub use linear::Linear;
pub use norm::{BatchNorm2d, BnTrace};
pub use pool::{global_avg_pool, global_avg_pool_backward, MaxPool, MaxPoolTrace};

/// Batch statistics and a backward trace (`Train`) or running statistics only (`Eval`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense NCHW activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        FeatureMap {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "feature map data length");
        FeatureMap { n, c, h, w, data }
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        assert_eq!(self.dims(), other.dims());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// The six parameter groups of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Backbone,
    SynthStream,
    SynthHead,
    ContentStream,
    ContentHeads,
    FinalHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Backbone,
        ParamGroup::SynthStream,
        ParamGroup::SynthHead,
        ParamGroup::ContentStream,
        ParamGroup::ContentHeads,
        ParamGroup::FinalHead,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param {
            name: name.into(),
            shape,
            value,
            grad,
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: f32) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![v; len])
    }

    pub fn he_normal<R: Rng + ?Sized>(name: impl Into<String>, shape: Vec<usize>, fan: usize, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, (2.0 / fan as f64).sqrt()).unwrap();
        let len = shape.iter().product();
        let value = (0..len).map(|_| dist.sample(rng) as f32).collect();
        Self::new(name, shape, value)
    }

    pub fn uniform<R: Rng + ?Sized>(name: impl Into<String>, shape: Vec<usize>, bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound);
        let len = shape.iter().product();
        let value = (0..len).map(|_| dist.sample(rng) as f32).collect();
        Self::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.grad.iter().map(|&g| g as f64 * g as f64).sum()
    }
}

/// Non-trainable state that still belongs in checkpoints (normalization statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub value: Vec<f32>,
}

/// Row-major `C = A·B + beta·C` for logical shapes `A: m×k`, `B: k×n`.
/// `a_t`/`b_t` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn relu_inplace(data: &mut [f32]) {
    data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `grad` wherever the post-activation value is not positive.
pub fn relu_backward_inplace(grad: &mut [f32], activated: &[f32]) {
    grad.iter_mut()
        .zip(activated)
        .for_each(|(g, a)| {
            if *a <= 0.0 {
                *g = 0.0
            }
        });
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub fn random_map(n: usize, c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let data = (0..n * c * h * w).map(|_| dist.sample(&mut rng) as f32).collect();
        FeatureMap::from_vec(n, c, h, w, data)
    }

    pub fn random_vec(len: usize, seed: u64) -> Vec<f32> {
        random_map(1, 1, 1, len, seed).data
    }

    pub fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
    }

    /// Central finite difference of `f` at coordinate `i` of `x`, in f64.
    pub fn fd<F: FnMut(&[f32]) -> f64>(x: &[f32], i: usize, h: f32, mut f: F) -> f64 {
        let mut xp = x.to_vec();
        xp[i] += h;
        let mut xm = x.to_vec();
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (xp[i] as f64 - xm[i] as f64)
    }

    pub fn assert_close(analytic: f64, numeric: f64, rel: f64, what: &str) {
        let scale = analytic.abs().max(numeric.abs()).max(1e-2);
        assert!(
            (analytic - numeric).abs() <= rel * scale,
            "{what}: analytic {analytic} vs numeric {numeric}"
        );
    }
}
