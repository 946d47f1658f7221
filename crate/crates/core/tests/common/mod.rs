#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use dualstream::audio::AudioClip;
use dualstream::manifest::{oversample_real, split_inner, ManifestEntry, SplitSet};
use dualstream::synthetic::{generate_corpus, SyntheticConfig};
use dualstream::train::{oversample_seed, Dataset};

pub struct Corpus {
    pub entries: Vec<ManifestEntry>,
    pub clips: HashMap<PathBuf, Arc<AudioClip>>,
}

impl Corpus {
    pub fn generate(n_real: usize, seed: u64) -> Self {
        let cfg = SyntheticConfig {
            n_real,
            seed,
            ..Default::default()
        };
        let mut entries = Vec::new();
        let mut clips = HashMap::new();
        for (e, clip) in generate_corpus(&cfg).unwrap() {
            clips.insert(e.path.clone(), Arc::new(clip));
            entries.push(e);
        }
        Corpus { entries, clips }
    }

    pub fn clips_for(&self, entries: &[ManifestEntry]) -> Vec<Arc<AudioClip>> {
        entries.iter().map(|e| self.clips[&e.path].clone()).collect()
    }

    pub fn inner_splits(&self, seed: u64) -> SplitSet {
        split_inner(&self.entries, [0.6, 0.2, 0.2], seed).unwrap()
    }

    /// Training data with real oversampling, as the CLI builds it.
    pub fn dataset(&self, splits: &SplitSet, seed: u64) -> Dataset {
        let train = oversample_real(&splits.train, oversample_seed(seed)).unwrap();
        Dataset::from_clips(
            splits,
            &train,
            self.clips_for(&train),
            &splits.validation,
            self.clips_for(&splits.validation),
        )
        .unwrap()
    }
}
