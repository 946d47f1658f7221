//! 2-D convolution without bias, lowered to im2col + GEMM per sample.

use rand::Rng;

use super::{sgemm, FeatureMap, Param};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Writes the transpose of the row-major `rows x cols` matrix `src` into `dst`.
fn transpose(src: &[f32], rows: usize, cols: usize, dst: &mut [f32]) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                let line = &src[r * cols..(r + 1) * cols];
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = line[c];
                }
            }
        }
    }
}

impl Conv2d {
    /// He-normal initialization with fan-out scaling.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let weight = Param::he_normal(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel, kernel],
            out_channels * kernel * kernel,
            rng,
        );
        Conv2d {
            weight,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride - padding + kx` lies inside `0..w`.
    fn valid_cols(&self, kx: usize, w: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if w + p > kx { ((w + p - kx - 1) / s + 1).min(wo) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[f32], h: usize, w: usize, cols: &mut [f32]) {
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        let k = self.kernel;
        let (s, p) = (self.stride, self.padding);
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                    let (lo, hi) = self.valid_cols(kx, w, wo);
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let line = &mut dst[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= h as isize || lo >= hi {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        line[..lo].fill(0.0);
                        line[hi..].fill(0.0);
                        let first = lo * s + kx - p;
                        if s == 1 {
                            line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (v, &x) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(s)) {
                                *v = x;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f32], h: usize, w: usize, dx: &mut [f32]) {
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        let k = self.kernel;
        let (s, p) = (self.stride, self.padding);
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                    let (lo, hi) = self.valid_cols(kx, w, wo);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let line = &src[oy * wo + lo..oy * wo + hi];
                        let first = lo * s + kx - p;
                        if s == 1 {
                            for (d, v) in dst[first..first + hi - lo].iter_mut().zip(line) {
                                *d += v;
                            }
                        } else {
                            for (d, v) in dst[first..].iter_mut().step_by(s).zip(line) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &FeatureMap, exec: Exec) -> FeatureMap {
        assert_eq!(x.c, self.in_channels, "{}: input channels", self.weight.name);
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        let mut out = FeatureMap::zeros(x.n, self.out_channels, ho, wo);
        let out_len = out.sample_len();
        let patch = self.patch_len();
        exec.for_each_chunk_mut(&mut out.data, out_len, |i, y| {
            let mut cols = vec![0.0; patch * ho * wo];
            self.im2col(x.sample(i), x.h, x.w, &mut cols);
            sgemm(self.out_channels, patch, ho * wo, &self.weight.value, false, &cols, false, y, 0.0);
        });
        out
    }

    /// Accumulates the weight gradient; returns the input gradient when `need_dx`.
    pub fn backward(&mut self, x: &FeatureMap, dy: &FeatureMap, need_dx: bool, exec: Exec) -> Option<FeatureMap> {
        let (ho, wo) = (dy.h, dy.w);
        let patch = self.patch_len();
        let wlen = self.weight.len();
        let this = &*self;
        let per_sample: Vec<(Vec<f32>, Option<Vec<f32>>)> = exec.map_range(x.n, |i| {
            let mut cols = vec![0.0; patch * ho * wo];
            this.im2col(x.sample(i), x.h, x.w, &mut cols);
            let dyi = dy.sample(i);
            let mut dw = vec![0.0; wlen];
            let mut rows = vec![0.0f32; cols.len()];
            transpose(&cols, patch, ho * wo, &mut rows);
            sgemm(this.out_channels, ho * wo, patch, dyi, false, &rows, false, &mut dw, 0.0);
            let dx = need_dx.then(|| {
                sgemm(patch, this.out_channels, ho * wo, &this.weight.value, true, dyi, false, &mut cols, 0.0);
                let mut dx = vec![0.0; x.sample_len()];
                this.col2im(&cols, x.h, x.w, &mut dx);
                dx
            });
            (dw, dx)
        });
        let mut dx_all = need_dx.then(|| FeatureMap::zeros(x.n, x.c, x.h, x.w));
        let slen = x.sample_len();
        for (i, (dw, dx)) in per_sample.into_iter().enumerate() {
            self.weight.grad.iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
            if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
                all.data[i * slen..(i + 1) * slen].copy_from_slice(&dx);
            }
        }
        dx_all
    }
}
