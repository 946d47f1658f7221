use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualstream::audio::{AudioClip, Stft, StftConfig, CLIP_SAMPLES};
use dualstream::audio::stft::log_spectrogram_batch;
use dualstream::nn::{Conv2d, FeatureMap, Mode};
use dualstream::synthetic::{generate_clip, SourceKind};
use dualstream::train::{BatchBuilder, Sample};
use dualstream::manifest::Label;
use dualstream::transforms::NoCodecs;
use dualstream::{DualStreamModel, Exec, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn clips(n: usize) -> Vec<AudioClip> {
    (0..n)
        .map(|i| {
            let kind = if i % 2 == 0 { SourceKind::Real } else { SourceKind::Synthesizer(i % 3) };
            generate_clip(kind, CLIP_SAMPLES, i as u64)
        })
        .collect()
}

fn random_map(n: usize, c: usize, h: usize, w: usize) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    FeatureMap::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn spectrograms(c: &mut Criterion) {
    let stft = Stft::new(StftConfig::default());
    let audio = clips(8);
    let refs: Vec<&[f32]> = audio.iter().map(|a| a.samples.as_slice()).collect();
    let mut group = c.benchmark_group("spectrogram_batch_8");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| log_spectrogram_batch(&stft, &refs, exec).unwrap()));
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = Conv2d::new("bench", 16, 16, 3, 1, 1, &mut rng);
    let x = random_map(8, 16, 65, 65);
    let mut group = c.benchmark_group("conv3x3_16ch_65px_batch_8");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("forward", name), |b| b.iter(|| layer.forward(&x, exec)));
        let dy = layer.forward(&x, exec);
        let mut layer = layer.clone();
        group.bench_function(BenchmarkId::new("backward", name), |b| {
            b.iter(|| layer.backward(&x, &dy, true, exec))
        });
    }
    group.finish();
}

fn batches(c: &mut Criterion) {
    let builder = BatchBuilder::new(Arc::new(NoCodecs));
    let samples: Vec<Sample> = clips(8)
        .into_iter()
        .enumerate()
        .map(|(i, clip)| Sample {
            file_id: format!("utt{i}"),
            clip: Arc::new(clip),
            label: if i % 2 == 0 { Label::Real } else { Label::Fake },
            synth: i % 3,
        })
        .collect();
    let indices: Vec<usize> = (0..8).collect();
    let mut group = c.benchmark_group("train_batch_8");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| builder.train_batch(&samples, &indices, 0, 0, 0, exec).unwrap())
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let model = DualStreamModel::new(ModelConfig::compact(3), 0).unwrap();
    let x = random_map(4, 1, 257, 257);
    let mut group = c.benchmark_group("compact_forward_batch_4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| model.forward_full(&x, Mode::Eval, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, spectrograms, conv, batches, forward);
criterion_main!(benches);
