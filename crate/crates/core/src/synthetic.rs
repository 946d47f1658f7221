//! Toy corpus for smoke tests and demonstrations.
//!
//! "Real" clips are band-limited noise bursts. Each "synthesizer" renders
//! harmonic tone bursts with its own harmonic signature: synthesizer `s`
//! keeps harmonics `1, 1 + (s+1), 1 + 2(s+1), ...` with amplitudes falling as
//! `h^-(1 + s/2)`. Every real recording gets fake counterparts sharing its
//! `file_id`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, Label, ManifestEntry, REAL_SYNTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_real: usize,
    pub synthesizers: Vec<String>,
    /// Fake clips per real recording; synthesizers are assigned round-robin.
    pub fakes_per_real: usize,
    pub duration_s: [f64; 2],
    /// Assigned round-robin over recordings.
    pub languages: Vec<String>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_real: 200,
            synthesizers: vec!["synth_a".into(), "synth_b".into()],
            fakes_per_real: 1,
            duration_s: [3.0, 3.0],
            languages: vec!["en".into()],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Real,
    Synthesizer(usize),
}

/// Smooth on/off envelope made of a few raised-cosine bursts.
fn burst_envelope<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut env = vec![0.0; len];
    let bursts = rng.gen_range(3..=6);
    for _ in 0..bursts {
        let width = rng.gen_range(len / 10..=len / 3).max(2);
        let start = rng.gen_range(0..len.saturating_sub(width).max(1));
        let gain = rng.gen_range(0.5..1.0);
        for k in 0..width.min(len - start) {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (width - 1) as f64).cos();
            env[start + k] = f64::max(env[start + k], gain * w);
        }
    }
    env
}

fn band_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let lo = rng.gen_range(200.0..1500.0);
    let hi = lo + rng.gen_range(500.0..3000.0);
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let bin_hz = SAMPLE_RATE as f64 / len as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * bin_hz;
        if f < lo || f > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re / len as f64).collect()
}

fn harmonic_tone<R: Rng + ?Sized>(len: usize, synth: usize, rng: &mut R) -> Vec<f64> {
    let f0 = rng.gen_range(100.0..300.0);
    let step = synth + 1;
    let decay = 1.0 + synth as f64 / 2.0;
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let harmonics: Vec<(f64, f64, f64)> = (0..)
        .map(|m| 1 + m * step)
        .take_while(|&h| f0 * h as f64 <= 0.9 * nyquist)
        .take(12)
        .map(|h| (f0 * h as f64, (h as f64).powf(-decay), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            harmonics.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum::<f64>()
                + 1e-3 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Renders one clip of `len` samples, peak-normalized to 0.5.
pub fn generate_clip(kind: SourceKind, len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let carrier = match kind {
        SourceKind::Real => band_noise(len, &mut rng),
        SourceKind::Synthesizer(s) => harmonic_tone(len, s, &mut rng),
    };
    let env = burst_envelope(len, &mut rng);
    let raw: Vec<f64> = carrier.iter().zip(&env).map(|(c, e)| c * e).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    AudioClip::mono(raw.iter().map(|v| (0.5 * v / peak) as f32).collect())
}

/// Manifest entries of the corpus, without audio.
pub fn plan_corpus(config: &SyntheticConfig) -> Result<Vec<(ManifestEntry, SourceKind, usize, u64)>> {
    if config.n_real == 0 || config.languages.is_empty() {
        return Err(Error::InvalidInput("synthetic corpus needs recordings and a language".into()));
    }
    if config.fakes_per_real > 0 && config.synthesizers.is_empty() {
        return Err(Error::InvalidInput("fake clips requested without synthesizers".into()));
    }
    if config.synthesizers.iter().any(|s| s == REAL_SYNTH) {
        return Err(Error::InvalidInput(format!("{REAL_SYNTH:?} is reserved")));
    }
    let [lo, hi] = config.duration_s;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidInput(format!("bad duration range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut plan = Vec::new();
    let mut next_synth = 0usize;
    for i in 0..config.n_real {
        let file_id = format!("utt{i:05}");
        let language = config.languages[i % config.languages.len()].clone();
        let secs = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let len = (secs * SAMPLE_RATE as f64).round() as usize;
        let mut push = |synth_id: &str, kind: SourceKind, rng: &mut ChaCha8Rng| {
            plan.push((
                ManifestEntry {
                    file_id: file_id.clone(),
                    path: PathBuf::from(synth_id).join(format!("{file_id}.wav")),
                    label: if kind == SourceKind::Real { Label::Real } else { Label::Fake },
                    synthesizer_id: synth_id.to_string(),
                    language: language.clone(),
                    duration_s: Some(len as f64 / SAMPLE_RATE as f64),
                },
                kind,
                len,
                rng.gen(),
            ));
        };
        push(REAL_SYNTH, SourceKind::Real, &mut rng);
        for _ in 0..config.fakes_per_real {
            let s = next_synth % config.synthesizers.len();
            next_synth += 1;
            push(&config.synthesizers[s], SourceKind::Synthesizer(s), &mut rng);
        }
    }
    Ok(plan)
}

/// Renders the corpus in memory; entry paths are relative.
pub fn generate_corpus(config: &SyntheticConfig) -> Result<Vec<(ManifestEntry, AudioClip)>> {
    Ok(plan_corpus(config)?
        .into_iter()
        .map(|(e, kind, len, seed)| (e, generate_clip(kind, len, seed)))
        .collect())
}

/// Writes WAV files and `manifest.jsonl` under `dir`; returns the manifest path.
pub fn write_corpus(config: &SyntheticConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut entries = Vec::new();
    for (entry, clip) in generate_corpus(config)? {
        let path = dir.join(&entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_wav(&path, &clip)?;
        entries.push(entry);
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
