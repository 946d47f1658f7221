use super::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolTrace {
    /// Flat input index of the winner for every output element.
    argmax: Vec<usize>,
    in_dims: [usize; 4],
}

impl MaxPool {
    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &FeatureMap) -> (FeatureMap, MaxPoolTrace) {
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        let mut out = FeatureMap::zeros(x.n, x.c, ho, wo);
        let mut argmax = vec![0usize; out.data.len()];
        let p = self.padding as isize;
        for plane in 0..x.n * x.c {
            let base = plane * x.h * x.w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = base;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - p;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - p;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * x.w + ix as usize;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    out.data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        (out, MaxPoolTrace { argmax, in_dims: x.dims() })
    }

    pub fn backward(&self, trace: &MaxPoolTrace, dy: &FeatureMap) -> FeatureMap {
        let [n, c, h, w] = trace.in_dims;
        let mut dx = FeatureMap::zeros(n, c, h, w);
        for (g, &idx) in dy.data.iter().zip(&trace.argmax) {
            dx.data[idx] += g;
        }
        dx
    }
}

/// Mean over the spatial extent: (N, C, H, W) → N rows of C values.
pub fn global_avg_pool(x: &FeatureMap) -> Vec<f32> {
    let hw = x.h * x.w;
    x.data
        .chunks_exact(hw)
        .map(|plane| (plane.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32)
        .collect()
}

pub fn global_avg_pool_backward(dpooled: &[f32], dims: [usize; 4]) -> FeatureMap {
    let [n, c, h, w] = dims;
    let hw = h * w;
    let scale = 1.0 / hw as f32;
    let data = dpooled
        .iter()
        .flat_map(|&g| std::iter::repeat(g * scale).take(hw))
        .collect();
    FeatureMap::from_vec(n, c, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;

    #[test]
    fn stem_pool_geometry() {
        let pool = MaxPool { kernel: 3, stride: 2, padding: 1 };
        assert_eq!(pool.out_size(129), 65);
        assert_eq!(pool.out_size(9), 5);
    }

    #[test]
    fn routes_gradient_to_the_maximum() {
        let pool = MaxPool { kernel: 3, stride: 2, padding: 1 };
        let x = random_map(1, 2, 5, 5, 4);
        let (y, trace) = pool.forward(&x);
        assert_eq!(y.dims(), [1, 2, 3, 3]);
        let dy = FeatureMap::from_vec(1, 2, 3, 3, vec![1.0; 18]);
        let dx = pool.backward(&trace, &dy);
        assert!((dx.data.iter().sum::<f32>() - 18.0).abs() < 1e-6);
        for (o, &idx) in trace.argmax.iter().enumerate() {
            assert_eq!(x.data[idx], y.data[o]);
        }
    }

    #[test]
    fn average_pool_and_its_adjoint() {
        let x = random_map(2, 3, 4, 4, 1);
        let pooled = global_avg_pool(&x);
        assert_eq!(pooled.len(), 6);
        let g = random_vec(6, 2);
        let dx = global_avg_pool_backward(&g, x.dims());
        // <pool(x), g> == <x, pool^T(g)>
        assert!((dot(&pooled, &g) - dot(&x.data, &dx.data)).abs() < 1e-5);
    }
}
