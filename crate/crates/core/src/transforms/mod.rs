//! Pseudo-label transforms for the content stream.
//!
//! Every training clip is compressed with one of ten codec settings and then
//! sped up or slowed down by one of sixteen factors. The indices of the two
//! settings are the compression and speed labels.
//!
//! Compression grid (frozen):
//!
//! | index | codec    | bitrate (bit/s) |
//! |-------|----------|-----------------|
//! | 0     | identity | none            |
//! | 1     | aac      | 16000           |
//! | 2     | aac      | 32000           |
//! | 3     | aac      | 64000           |
//! | 4     | opus     | 16000           |
//! | 5     | opus     | 32000           |
//! | 6     | opus     | 64000           |
//! | 7     | mp3      | 16000           |
//! | 8     | mp3      | 32000           |
//! | 9     | mp3      | 64000           |
//!
//! Speed grid (frozen): index `k` ↦ factor `0.5 + 0.1·k`, `k = 0..16`, so
//! index 5 is the unchanged speed and index 15 is double speed.

pub mod codec;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{fix_length, AudioClip, CropMode, Resampler, SAMPLE_RATE};
use crate::error::{Error, Result};
pub use codec::{align_to_reference, Codec, CodecBackend, Ffmpeg, NoCodecs, FFMPEG_ENV};

pub const N_COMPRESSION: usize = 10;
pub const N_SPEED: usize = 16;
pub const IDENTITY_SPEED_INDEX: usize = 5;

const BITRATES: [u32; 3] = [16_000, 32_000, 64_000];
const CODECS: [Codec; 3] = [Codec::Aac, Codec::Opus, Codec::Mp3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressionSetting {
    pub index: usize,
    pub codec: Codec,
    pub bitrate: Option<u32>,
}

impl CompressionSetting {
    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(CompressionSetting {
                index,
                codec: Codec::Identity,
                bitrate: None,
            }),
            1..=9 => Some(CompressionSetting {
                index,
                codec: CODECS[(index - 1) / 3],
                bitrate: Some(BITRATES[(index - 1) % 3]),
            }),
            _ => None,
        }
    }

    /// Inverse of [`CompressionSetting::from_index`].
    pub fn index_of(codec: Codec, bitrate: Option<u32>) -> Option<usize> {
        match (codec, bitrate) {
            (Codec::Identity, None) => Some(0),
            (Codec::Identity, Some(_)) | (_, None) => None,
            (c, Some(b)) => {
                let ci = CODECS.iter().position(|&x| x == c)?;
                let bi = BITRATES.iter().position(|&x| x == b)?;
                Some(1 + 3 * ci + bi)
            }
        }
    }

    pub fn all() -> Vec<Self> {
        (0..N_COMPRESSION).filter_map(Self::from_index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSetting {
    pub index: usize,
    pub factor: f64,
}

impl SpeedSetting {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < N_SPEED).then(|| SpeedSetting {
            index,
            factor: (5 + index) as f64 / 10.0,
        })
    }

    pub fn index_of(factor: f64) -> Option<usize> {
        let k = (factor * 10.0).round() as i64 - 5;
        ((0..N_SPEED as i64).contains(&k) && (factor * 10.0 - (k + 5) as f64).abs() < 1e-9)
            .then_some(k as usize)
    }

    /// Source rate that, resampled to 16 kHz, plays back `factor` times faster.
    fn source_rate(&self) -> u32 {
        SAMPLE_RATE / 10 * (5 + self.index as u32)
    }

    pub fn all() -> Vec<Self> {
        (0..N_SPEED).filter_map(Self::from_index).collect()
    }
}

/// Speed change by band-limited resampling; output length is `ceil(len / factor)`.
pub fn apply_speed(clip: &AudioClip, setting: SpeedSetting) -> Result<AudioClip> {
    if !(setting.factor > 0.0) {
        return Err(Error::InvalidInput(format!("speed factor {} must be positive", setting.factor)));
    }
    let resampler = Resampler::new(setting.source_rate(), SAMPLE_RATE);
    Ok(AudioClip::mono(resampler.process(&clip.samples)))
}

/// Codec round trip at the same length as the input; identity returns the clip unchanged.
pub fn apply_compression(
    clip: &AudioClip,
    setting: CompressionSetting,
    backend: &dyn CodecBackend,
) -> Result<AudioClip> {
    let Some(bitrate) = setting.bitrate else {
        return Ok(clip.clone());
    };
    if clip.is_empty() {
        return Err(Error::Audio("cannot compress an empty clip".into()));
    }
    let decoded = backend.round_trip(&clip.samples, setting.codec, bitrate)?;
    Ok(AudioClip::mono(align_to_reference(&clip.samples, &decoded)))
}

/// A transformed clip with its two pseudo labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeled {
    pub clip: AudioClip,
    pub compression: usize,
    pub speed: usize,
}

/// Draws and applies pseudo-label transforms.
///
/// Compression settings whose codec the backend cannot run are dropped from
/// the active grid (with a warning at construction); labels keep their fixed
/// grid indices regardless.
#[derive(Clone)]
pub struct PseudoLabeler {
    backend: Arc<dyn CodecBackend>,
    active_compression: Vec<CompressionSetting>,
    resamplers: Vec<Resampler>,
}

impl std::fmt::Debug for PseudoLabeler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PseudoLabeler")
            .field("backend", &self.backend.name())
            .field("active_compression", &self.active_compression)
            .finish()
    }
}

impl PseudoLabeler {
    pub fn new(backend: Arc<dyn CodecBackend>) -> Self {
        let (active, skipped): (Vec<_>, Vec<_>) = CompressionSetting::all()
            .into_iter()
            .partition(|s| backend.supports(s.codec));
        if !skipped.is_empty() {
            log::warn!(
                "codec backend {:?} cannot run compression settings {:?}; they are skipped",
                backend.name(),
                skipped.iter().map(|s| s.index).collect::<Vec<_>>()
            );
        }
        let resamplers = SpeedSetting::all()
            .iter()
            .map(|s| Resampler::new(s.source_rate(), SAMPLE_RATE))
            .collect();
        PseudoLabeler {
            backend,
            active_compression: active,
            resamplers,
        }
    }

    pub fn backend(&self) -> &dyn CodecBackend {
        self.backend.as_ref()
    }

    pub fn active_compression(&self) -> &[CompressionSetting] {
        &self.active_compression
    }

    /// Uniform draw over the active compression grid and the full speed grid.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (CompressionSetting, SpeedSetting) {
        let c = self.active_compression[rng.gen_range(0..self.active_compression.len())];
        let s = SpeedSetting::from_index(rng.gen_range(0..N_SPEED)).unwrap();
        (c, s)
    }

    /// Compress, change speed, then bring to three seconds.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        clip: &AudioClip,
        compression: CompressionSetting,
        speed: SpeedSetting,
        crop: CropMode,
        rng: &mut R,
    ) -> Result<PseudoLabeled> {
        let compressed = apply_compression(clip, compression, self.backend.as_ref())?;
        let sped = AudioClip::mono(self.resamplers[speed.index].process(&compressed.samples));
        let clip = fix_length(&sped, crop, rng)?;
        Ok(PseudoLabeled {
            clip,
            compression: compression.index,
            speed: speed.index,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, clip: &AudioClip, crop: CropMode, rng: &mut R) -> Result<PseudoLabeled> {
        let (c, s) = self.draw(rng);
        self.apply(clip, c, s, crop, rng)
    }
}

/// Draws one compression and one speed setting, applies them in that order and
/// fixes the length to three seconds with a random crop.
pub fn sample_pseudo_labeled<R: Rng + ?Sized>(
    clip: &AudioClip,
    labeler: &PseudoLabeler,
    rng: &mut R,
) -> Result<PseudoLabeled> {
    labeler.sample(clip, CropMode::TrainRandom, rng)
}
