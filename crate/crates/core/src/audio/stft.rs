//! Log-magnitude spectrogram: `ln(|STFT(x)| + 1e-7)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioClip, CLIP_SAMPLES};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Additive floor inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Reflect-pad `n_fft / 2` samples on both sides so frame `t` is centered on sample `t * hop`.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 512,
            hop: 187,
            window: WindowKind::Hann,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn freq_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        if self.center {
            len / self.hop + 1
        } else if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }
}

/// Log-magnitude spectrogram, row-major with one row per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub freq_bins: usize,
    pub time_frames: usize,
}

impl Spectrogram {
    pub fn shape(&self) -> (usize, usize) {
        (self.freq_bins, self.time_frames)
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.time_frames + frame]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Reusable STFT plan.
#[derive(Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Self {
        let n = config.n_fft;
        let window = match config.window {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; n],
        };
        let fft = FftPlanner::new().plan_fft_forward(n);
        Stft {
            config,
            window,
            fft,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Works on any signal at least `n_fft / 2 + 1` samples long (reflect padding needs it).
    pub fn log_magnitude(&self, samples: &[f32]) -> Result<Spectrogram> {
        let n = self.config.n_fft;
        let half = n / 2;
        if samples.is_empty() || (self.config.center && samples.len() <= half) {
            return Err(Error::InvalidInput(format!(
                "signal of {} samples is too short for n_fft {n}",
                samples.len()
            )));
        }
        let padded: Vec<f64> = if self.config.center {
            let len = samples.len() as isize;
            (-(half as isize)..len + half as isize)
                .map(|i| {
                    let j = if i < 0 {
                        -i
                    } else if i >= len {
                        2 * (len - 1) - i
                    } else {
                        i
                    };
                    samples[j as usize] as f64
                })
                .collect()
        } else {
            samples.iter().map(|&v| v as f64).collect()
        };
        let frames = self.config.frames(samples.len());
        let bins = self.config.freq_bins();
        let mut values = vec![0.0; bins * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.config.hop;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(padded[start + k] * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (f, c) in buf.iter().take(bins).enumerate() {
                values[f * frames + t] = (c.norm() + LOG_FLOOR).ln();
            }
        }
        Ok(Spectrogram {
            values,
            freq_bins: bins,
            time_frames: frames,
        })
    }
}

/// Spectrogram of a three-second clip with the default transform: shape (257, 257).
pub fn log_spectrogram(clip: &AudioClip) -> Result<Spectrogram> {
    if clip.samples.len() != CLIP_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "expected {CLIP_SAMPLES} samples, got {}",
            clip.samples.len()
        )));
    }
    Stft::new(StftConfig::default()).log_magnitude(&clip.samples)
}

/// Spectrograms of many clips with one shared plan.
pub fn log_spectrogram_batch(stft: &Stft, clips: &[&[f32]], exec: Exec) -> Result<Vec<Spectrogram>> {
    exec.map(clips, |c| stft.log_magnitude(c)).into_iter().collect()
}
