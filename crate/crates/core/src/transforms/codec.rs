//! Codec round-trip port.
//!
//! A backend receives 16 kHz mono PCM (f32), encodes it with the requested
//! codec and bitrate, decodes it back and returns 16 kHz mono PCM. Decoder
//! delay is removed by the caller ([`align_to_reference`]), so backends may
//! return a shifted or slightly longer signal.
//!
//! The bundled backend shells out to `ffmpeg`; the binary is taken from the
//! `DUALSTREAM_FFMPEG` environment variable, falling back to `ffmpeg` on `PATH`.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FFMPEG_ENV: &str = "DUALSTREAM_FFMPEG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Identity,
    Aac,
    Opus,
    Mp3,
}

pub trait CodecBackend: Send + Sync {
    fn name(&self) -> &str;
    fn supports(&self, codec: Codec) -> bool;
    fn round_trip(&self, samples: &[f32], codec: Codec, bitrate: u32) -> Result<Vec<f32>>;
}

/// Backend with no codecs; only the identity setting stays active.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCodecs;

impl CodecBackend for NoCodecs {
    fn name(&self) -> &str {
        "none"
    }

    fn supports(&self, codec: Codec) -> bool {
        codec == Codec::Identity
    }

    fn round_trip(&self, samples: &[f32], codec: Codec, _bitrate: u32) -> Result<Vec<f32>> {
        match codec {
            Codec::Identity => Ok(samples.to_vec()),
            other => Err(Error::Codec(format!("no backend for {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ffmpeg {
    binary: PathBuf,
    available: Vec<Codec>,
}

impl Ffmpeg {
    /// Probes the binary for the three encoders. Returns `None` when it cannot be run.
    pub fn detect() -> Option<Self> {
        let binary: PathBuf = std::env::var_os(FFMPEG_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| "ffmpeg".into());
        Self::with_binary(binary)
    }

    pub fn with_binary(binary: PathBuf) -> Option<Self> {
        let out = Command::new(&binary)
            .args(["-hide_banner", "-encoders"])
            .stdin(Stdio::null())
            .stderr(Stdio::null())
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        let listing = String::from_utf8_lossy(&out.stdout);
        let has = |name: &str| listing.split_whitespace().any(|w| w == name);
        let mut available = vec![Codec::Identity];
        for codec in [Codec::Aac, Codec::Opus, Codec::Mp3] {
            if has(encoder_name(codec)) {
                available.push(codec);
            }
        }
        Some(Ffmpeg { binary, available })
    }

    fn run(&self, args: &[&str]) -> Result<()> {
        let out = Command::new(&self.binary)
            .args(["-hide_banner", "-loglevel", "error", "-nostdin", "-y", "-threads", "1"])
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| Error::Codec(format!("cannot run {}: {e}", self.binary.display())))?;
        if !out.status.success() {
            return Err(Error::Codec(format!(
                "ffmpeg failed: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(())
    }
}

fn encoder_name(codec: Codec) -> &'static str {
    match codec {
        Codec::Aac => "aac",
        Codec::Opus => "libopus",
        Codec::Mp3 => "libmp3lame",
        Codec::Identity => "pcm_f32le",
    }
}

fn container_ext(codec: Codec) -> &'static str {
    match codec {
        Codec::Aac => "adts",
        Codec::Opus => "ogg",
        Codec::Mp3 => "mp3",
        Codec::Identity => "raw",
    }
}

impl CodecBackend for Ffmpeg {
    fn name(&self) -> &str {
        "ffmpeg"
    }

    fn supports(&self, codec: Codec) -> bool {
        self.available.contains(&codec)
    }

    fn round_trip(&self, samples: &[f32], codec: Codec, bitrate: u32) -> Result<Vec<f32>> {
        if codec == Codec::Identity {
            return Ok(samples.to_vec());
        }
        if !self.supports(codec) {
            return Err(Error::Codec(format!("ffmpeg lacks an encoder for {codec:?}")));
        }
        let dir = tempfile::tempdir().map_err(|e| Error::Codec(e.to_string()))?;
        let pcm_in = dir.path().join("in.f32");
        let encoded = dir.path().join(format!("enc.{}", container_ext(codec)));
        let pcm_out = dir.path().join("out.f32");
        {
            let mut f = std::fs::File::create(&pcm_in).map_err(|e| Error::io(&pcm_in, e))?;
            let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
            f.write_all(&bytes).map_err(|e| Error::io(&pcm_in, e))?;
        }
        let path = |p: &PathBuf| p.to_string_lossy().into_owned();
        let rate = bitrate.to_string();
        let fmt = container_ext(codec);
        self.run(&[
            "-f", "f32le", "-ar", "16000", "-ac", "1", "-i", &path(&pcm_in),
            "-c:a", encoder_name(codec), "-b:a", &rate, "-f", fmt, &path(&encoded),
        ])?;
        self.run(&[
            "-i", &path(&encoded), "-f", "f32le", "-ar", "16000", "-ac", "1", &path(&pcm_out),
        ])?;
        let bytes = std::fs::read(&pcm_out).map_err(|e| Error::io(&pcm_out, e))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Largest decoder delay searched when aligning, in samples.
pub const MAX_DELAY: usize = 4096;
/// Largest negative shift searched (decoders that trim too much).
pub const MAX_ADVANCE: usize = 1024;

/// Shifts `decoded` by the lag that maximizes its cross-correlation with
/// `reference`, then trims or zero-pads it to `reference.len()`.
pub fn align_to_reference(reference: &[f32], decoded: &[f32]) -> Vec<f32> {
    let n = reference.len();
    if n == 0 {
        return Vec::new();
    }
    if decoded.is_empty() {
        return vec![0.0; n];
    }
    let size = (n + decoded.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex<f64>> = decoded.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = reference.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    // a[lag] = sum_t decoded[t + lag] * reference[t] (circular; negative lags wrap).
    let corr = |lag: isize| -> f64 {
        let idx = lag.rem_euclid(size as isize) as usize;
        a[idx].re
    };
    let max_lag = MAX_DELAY.min(decoded.len().saturating_sub(1)) as isize;
    let min_lag = -(MAX_ADVANCE.min(n.saturating_sub(1)) as isize);
    let best = (min_lag..=max_lag)
        .max_by(|&x, &y| corr(x).partial_cmp(&corr(y)).unwrap().then(y.cmp(&x)))
        .unwrap_or(0);
    (0..n as isize)
        .map(|t| {
            let j = t + best;
            if j < 0 || j as usize >= decoded.len() {
                0.0
            } else {
                decoded[j as usize]
            }
        })
        .collect()
}
