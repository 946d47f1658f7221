//! Audio loading, normalization to 16 kHz mono, the three-second clip policy
//! and the log-spectrogram front end.

pub mod cache;
pub mod resample;
pub mod stft;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use resample::{resample, Resampler};
pub use stft::{log_spectrogram, Spectrogram, Stft, StftConfig, WindowKind};

pub const SAMPLE_RATE: u32 = 16_000;
/// Three seconds at 16 kHz.
pub const CLIP_SAMPLES: usize = 48_000;

/// Mono waveform. After [`load_and_normalize`] the rate is always 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn mono(samples: Vec<f32>) -> Self {
        AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> u16 {
        1
    }
}

/// Reads a PCM WAV file, averages channels and resamples to 16 kHz.
pub fn load_and_normalize(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?
        }
    };
    normalize(&interleaved, spec.channels as usize, spec.sample_rate)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))
}

/// Downmixes interleaved samples by channel mean and resamples to 16 kHz.
pub fn normalize(interleaved: &[f32], channels: usize, sample_rate: u32) -> Result<AudioClip> {
    if channels == 0 || sample_rate == 0 {
        return Err(Error::Audio("zero channels or sample rate".into()));
    }
    if interleaved.len() < channels {
        return Err(Error::Audio("audio holds no samples".into()));
    }
    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    if mono.iter().any(|v| !v.is_finite()) {
        return Err(Error::Audio("non-finite sample values".into()));
    }
    let samples = if sample_rate == SAMPLE_RATE {
        mono
    } else {
        resample(&mono, sample_rate, SAMPLE_RATE)
    };
    Ok(AudioClip::mono(samples))
}

/// Writes a 16 kHz mono clip as 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let err = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(err)?;
    }
    w.finalize().map_err(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    /// Uniformly random three-second window (training).
    TrainRandom,
    /// Centered three-second window (validation and test).
    EvalMiddle,
}

/// Brings a clip to exactly [`CLIP_SAMPLES`] samples.
///
/// Short clips are tiled with whole copies of themselves and truncated; long
/// clips are cropped according to `mode`.
pub fn fix_length<R: Rng + ?Sized>(clip: &AudioClip, mode: CropMode, rng: &mut R) -> Result<AudioClip> {
    fix_length_to(clip, CLIP_SAMPLES, mode, rng)
}

pub fn fix_length_to<R: Rng + ?Sized>(
    clip: &AudioClip,
    target: usize,
    mode: CropMode,
    rng: &mut R,
) -> Result<AudioClip> {
    let n = clip.samples.len();
    if n == 0 {
        return Err(Error::Audio("cannot fix the length of an empty clip".into()));
    }
    let samples = if n == target {
        clip.samples.clone()
    } else if n < target {
        clip.samples.iter().copied().cycle().take(target).collect()
    } else {
        let start = match mode {
            CropMode::TrainRandom => rng.gen_range(0..=n - target),
            CropMode::EvalMiddle => (n - target) / 2,
        };
        clip.samples[start..start + target].to_vec()
    };
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> AudioClip {
        AudioClip::mono((0..n).map(|i| i as f32).collect())
    }

    #[test]
    fn exact_length_is_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ramp(CLIP_SAMPLES);
        assert_eq!(fix_length(&c, CropMode::TrainRandom, &mut rng).unwrap(), c);
        assert_eq!(fix_length(&c, CropMode::EvalMiddle, &mut rng).unwrap(), c);
    }

    #[test]
    fn short_clip_is_tiled() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ramp(32000);
        let out = fix_length(&c, CropMode::TrainRandom, &mut rng).unwrap();
        assert_eq!(out.len(), CLIP_SAMPLES);
        assert_eq!(&out.samples[..32000], &c.samples[..]);
        assert_eq!(&out.samples[32000..], &c.samples[..16000]);
        let tiny = ramp(7);
        let out = fix_length(&tiny, CropMode::EvalMiddle, &mut rng).unwrap();
        assert!(out.samples.iter().enumerate().all(|(i, v)| *v == (i % 7) as f32));
    }

    #[test]
    fn long_clip_crops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ramp(96000);
        let mid = fix_length(&c, CropMode::EvalMiddle, &mut rng).unwrap();
        assert_eq!(mid.samples[0], 24000.0);
        assert_eq!(*mid.samples.last().unwrap(), 71999.0);
        for _ in 0..20 {
            let r = fix_length(&c, CropMode::TrainRandom, &mut rng).unwrap();
            let start = r.samples[0] as usize;
            assert!(start <= 48000);
            assert!(r.samples.iter().enumerate().all(|(i, v)| *v == (start + i) as f32));
        }
        assert!(fix_length(&ramp(0), CropMode::EvalMiddle, &mut rng).is_err());
    }

    #[test]
    fn downmix_and_resample() {
        let stereo: Vec<f32> = (0..200).flat_map(|i| [i as f32 * 0.01, i as f32 * 0.01]).collect();
        let c = normalize(&stereo, 2, SAMPLE_RATE).unwrap();
        assert_eq!(c.samples, (0..200).map(|i| i as f32 * 0.01).collect::<Vec<_>>());
        let up = normalize(&vec![0.0; 1000], 1, 8000).unwrap();
        assert_eq!(up.len(), 2000);
        assert!(normalize(&[], 1, 16000).is_err());
    }
}
