//! Training data: decoded clips, epoch ordering and per-sample batch assembly.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, Batch, STREAM_DATA, STREAM_SAMPLE};
use crate::audio::{load_and_normalize, AudioClip, CropMode, Stft, CLIP_SAMPLES};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::losses::LabelBundle;
use crate::manifest::{oversample_real, Label, ManifestEntry, SplitSet};
use crate::nn::FeatureMap;
use crate::transforms::{CodecBackend, PseudoLabeler};

#[derive(Debug, Clone)]
pub struct Sample {
    pub file_id: String,
    pub clip: Arc<AudioClip>,
    pub label: Label,
    /// Index into the synthesizer vocabulary.
    pub synth: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub synthesizer_vocab: Vec<String>,
}

/// Decodes every distinct path once.
pub fn load_clips(entries: &[ManifestEntry], exec: Exec) -> Result<Vec<Arc<AudioClip>>> {
    let mut unique: Vec<PathBuf> = entries.iter().map(|e| e.path.clone()).collect();
    unique.sort();
    unique.dedup();
    let decoded = exec.map(&unique, |p| load_and_normalize(p));
    let mut by_path = HashMap::with_capacity(unique.len());
    for (path, clip) in unique.into_iter().zip(decoded) {
        by_path.insert(path, Arc::new(clip?));
    }
    Ok(entries.iter().map(|e| by_path[&e.path].clone()).collect())
}

impl Dataset {
    /// Loads the train and validation splits, oversampling real training clips.
    pub fn load(splits: &SplitSet, seed: u64, exec: Exec) -> Result<Self> {
        let train = oversample_real(&splits.train, seed)?;
        let train_clips = load_clips(&train, exec)?;
        let val_clips = load_clips(&splits.validation, exec)?;
        Self::from_clips(splits, &train, train_clips, &splits.validation, val_clips)
    }

    /// Builds a dataset from clips already in memory, paired with `train` and `validation` entries.
    pub fn from_clips(
        splits: &SplitSet,
        train: &[ManifestEntry],
        train_clips: Vec<Arc<AudioClip>>,
        validation: &[ManifestEntry],
        val_clips: Vec<Arc<AudioClip>>,
    ) -> Result<Self> {
        let vocab = &splits.synthesizer_vocab;
        let make = |entries: &[ManifestEntry], clips: Vec<Arc<AudioClip>>, strict: bool| -> Result<Vec<Sample>> {
            entries
                .iter()
                .zip(clips)
                .map(|(e, clip)| {
                    let synth = match splits.synth_index(&e.synthesizer_id) {
                        Some(i) => i,
                        None if !strict => 0,
                        None => {
                            return Err(Error::InvalidInput(format!(
                                "synthesizer {:?} is not in the training vocabulary {vocab:?}",
                                e.synthesizer_id
                            )))
                        }
                    };
                    Ok(Sample {
                        file_id: e.file_id.clone(),
                        clip,
                        label: e.label,
                        synth,
                    })
                })
                .collect()
        };
        Ok(Dataset {
            train: make(train, train_clips, true)?,
            validation: make(validation, val_clips, false)?,
            synthesizer_vocab: vocab.clone(),
        })
    }
}

/// Order of the training set in `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DATA, epoch as u64, 0)));
    order
}

/// Batches of `epoch`; a trailing batch with fewer than two samples is dropped.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    epoch_order(n, seed, epoch)
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Turns samples into spectrogram batches with pseudo-label transforms.
pub struct BatchBuilder {
    stft: Stft,
    labeler: PseudoLabeler,
}

impl BatchBuilder {
    pub fn new(backend: Arc<dyn CodecBackend>) -> Self {
        BatchBuilder {
            stft: Stft::new(Default::default()),
            labeler: PseudoLabeler::new(backend),
        }
    }

    pub fn labeler(&self) -> &PseudoLabeler {
        &self.labeler
    }

    /// Batch `k` of `epoch`. Each sample draws its transforms and crop from an
    /// rng seeded by `(seed, epoch, position in epoch)`.
    pub fn train_batch(
        &self,
        samples: &[Sample],
        indices: &[usize],
        seed: u64,
        epoch: usize,
        first_position: usize,
        exec: Exec,
    ) -> Result<Batch> {
        let results = exec.map_range(indices.len(), |p| -> Result<(Vec<f32>, LabelBundle)> {
            let sample = &samples[indices[p]];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                STREAM_SAMPLE,
                epoch as u64,
                (first_position + p) as u64,
            ));
            let pl = self.labeler.sample(&sample.clip, CropMode::TrainRandom, &mut rng)?;
            let spec = self.stft.log_magnitude(&pl.clip.samples)?.to_f32();
            let labels = LabelBundle {
                label: sample.label,
                synth: sample.synth,
                compression: pl.compression,
                speed: pl.speed,
            };
            Ok((spec, labels))
        });
        let (f, t) = (self.stft.config().freq_bins(), self.stft.config().frames(CLIP_SAMPLES));
        let mut data = Vec::with_capacity(indices.len() * f * t);
        let mut labels = Vec::with_capacity(indices.len());
        for r in results {
            let (spec, l) = r?;
            data.extend(spec);
            labels.push(l);
        }
        Ok(Batch {
            x: FeatureMap::from_vec(indices.len(), 1, f, t, data),
            labels,
        })
    }
}
