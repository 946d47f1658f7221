//! Band-limited resampling by windowed-sinc interpolation with a Kaiser window.
//!
//! The rate ratio is reduced to `orig / new` in lowest terms and one filter
//! phase is precomputed for each of the `new` output positions inside a
//! block of `orig` input samples.

/// Zero crossings of the sinc kept on each side of the center tap.
pub const LOWPASS_FILTER_WIDTH: usize = 6;
/// Cutoff as a fraction of the lower Nyquist frequency.
pub const ROLLOFF: f64 = 0.99;
/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 14.769_656_459_379_492;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Number of output samples for `len` input samples.
pub fn resampled_len(len: usize, orig_rate: u32, new_rate: u32) -> usize {
    let num = new_rate as u128 * len as u128;
    num.div_ceil(orig_rate as u128) as usize
}

#[derive(Debug, Clone)]
pub struct Resampler {
    orig: usize,
    new: usize,
    width: usize,
    /// `new` phases, each with `2 * width + orig` taps.
    kernels: Vec<Vec<f64>>,
    orig_rate: u32,
    new_rate: u32,
}

impl Resampler {
    pub fn new(orig_rate: u32, new_rate: u32) -> Self {
        assert!(orig_rate > 0 && new_rate > 0, "sample rates must be positive");
        let g = gcd(orig_rate as u64, new_rate as u64);
        let orig = (orig_rate as u64 / g) as usize;
        let new = (new_rate as u64 / g) as usize;
        let base = orig.min(new) as f64 * ROLLOFF;
        let width = (LOWPASS_FILTER_WIDTH as f64 * orig as f64 / base).ceil() as usize;
        let lpw = LOWPASS_FILTER_WIDTH as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let scale = base / orig as f64;
        let taps = 2 * width + orig;
        let kernels = (0..new)
            .map(|phase| {
                (0..taps)
                    .map(|k| {
                        let idx = (k as f64 - width as f64) / orig as f64;
                        let t = ((idx - phase as f64 / new as f64) * base).clamp(-lpw, lpw);
                        let r = t / lpw;
                        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                        let x = t * std::f64::consts::PI;
                        let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                        sinc * window * scale
                    })
                    .collect()
            })
            .collect();
        Resampler {
            orig,
            new,
            width,
            kernels,
            orig_rate,
            new_rate,
        }
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.orig == self.new {
            return input.to_vec();
        }
        let out_len = resampled_len(input.len(), self.orig_rate, self.new_rate);
        let mut out = Vec::with_capacity(out_len);
        let at = |j: isize| -> f64 {
            if j < 0 || j as usize >= input.len() {
                0.0
            } else {
                input[j as usize] as f64
            }
        };
        let mut block = 0usize;
        'outer: loop {
            let start = (block * self.orig) as isize - self.width as isize;
            for kernel in &self.kernels {
                if out.len() == out_len {
                    break 'outer;
                }
                let acc: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * at(start + k as isize))
                    .sum();
                out.push(acc as f32);
            }
            block += 1;
        }
        out
    }
}

/// One-shot convenience wrapper around [`Resampler`].
pub fn resample(input: &[f32], orig_rate: u32, new_rate: u32) -> Vec<f32> {
    Resampler::new(orig_rate, new_rate).process(input)
}
