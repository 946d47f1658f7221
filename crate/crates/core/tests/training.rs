mod common;

use std::sync::Arc;

use dualstream::losses::LabelBundle;
use dualstream::manifest::Label;
use dualstream::nn::{Adam, AdamConfig, FeatureMap, ParamGroup};
use dualstream::train::checkpoint::{decode, encode};
use dualstream::train::data::epoch_batches;
use dualstream::train::{fit, train_step, Batch, BatchBuilder, Objective, TrainConfig, Trainer};
use dualstream::transforms::NoCodecs;
use dualstream::{DualStreamModel, Exec, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Corpus;

fn toy_batch(b: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(b * 33 * 33);
    let mut labels = Vec::with_capacity(b);
    for i in 0..b {
        let real = i % 2 == 0;
        for k in 0..33 * 33 {
            let base = if real { (k % 7) as f32 * 0.3 } else { (k % 5) as f32 * -0.2 };
            data.push(base + rng.gen_range(-0.5..0.5));
        }
        labels.push(LabelBundle {
            label: if real { Label::Real } else { Label::Fake },
            synth: if real { 0 } else { 1 + i % 4 / 2 },
            compression: i % 10,
            speed: i % 16,
        });
    }
    Batch {
        x: FeatureMap::from_vec(b, 1, 33, 33, data),
        labels,
    }
}

fn tiny_model() -> DualStreamModel {
    DualStreamModel::new(ModelConfig::with_channels([8, 8, 16, 16], 3), 5).unwrap()
}

#[test]
fn repeated_steps_reduce_the_loss() {
    let mut model = tiny_model();
    let mut optimizer = Adam::new(AdamConfig {
        learning_rate: 1e-3,
        ..Default::default()
    });
    let batch = toy_batch(8, 1);
    let objective = Objective::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let totals: Vec<f64> = (0..50)
        .map(|_| train_step(&mut model, &mut optimizer, &batch, &objective, &mut rng, Exec::default()).unwrap().total)
        .collect();
    let head: f64 = totals[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = totals[40..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss went from {head} to {tail}");
}

#[test]
fn every_parameter_group_learns() {
    let mut model = tiny_model();
    let mut optimizer = Adam::new(AdamConfig::default());
    let before = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    train_step(&mut model, &mut optimizer, &toy_batch(6, 4), &Objective::default(), &mut rng, Exec::default()).unwrap();
    let norms = model.group_grad_norms();
    for group in ParamGroup::ALL {
        assert!(norms[&group] > 0.0, "{group:?} received no gradient");
    }
    let moved = |g: ParamGroup| {
        let a = before.params_grouped();
        let b = model.params_grouped();
        a.iter().zip(&b).filter(|((ga, _), _)| *ga == g).any(|((_, pa), (_, pb))| pa.value != pb.value)
    };
    for group in ParamGroup::ALL {
        assert!(moved(group), "{group:?} was not updated");
    }
}

#[test]
fn sequential_and_parallel_steps_agree() {
    let batch = toy_batch(4, 7);
    let run = |exec| {
        let mut model = tiny_model();
        let mut optimizer = Adam::new(AdamConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let losses = train_step(&mut model, &mut optimizer, &batch, &Objective::default(), &mut rng, exec).unwrap();
        (losses, model)
    };
    let (la, ma) = run(Exec::Sequential);
    let (lb, mb) = run(Exec::Parallel);
    assert_eq!(la, lb);
    assert_eq!(ma, mb);
}

#[test]
fn resuming_mid_epoch_matches_an_uninterrupted_run() {
    let corpus = Corpus::generate(8, 11);
    let splits = corpus.inner_splits(11);
    let data = corpus.dataset(&splits, 11);
    let builder = BatchBuilder::new(Arc::new(NoCodecs));
    let config = TrainConfig {
        batch_size: 4,
        max_epochs: 2,
        seed: 11,
        ..Default::default()
    };
    let fresh = || {
        Trainer::new(
            ModelConfig::compact(splits.synthesizer_vocab.len()),
            config.clone(),
            Objective::default(),
            splits.synthesizer_vocab.clone(),
            Exec::default(),
        )
        .unwrap()
    };

    let mut full = fresh();
    let mut full_log = Vec::new();
    fit(&mut full, &data, &builder, &mut full_log, None).unwrap();

    let mut partial = fresh();
    let batches = epoch_batches(data.train.len(), 4, 11, 0);
    assert!(batches.len() >= 2);
    let batch = builder.train_batch(&data.train, &batches[0], 11, 0, 0, Exec::default()).unwrap();
    partial.step(&batch).unwrap();
    let restored = decode(&encode(&partial.checkpoint()).unwrap()).unwrap();
    let mut resumed = Trainer::from_checkpoint(restored, Exec::default()).unwrap();
    assert_eq!(resumed.state.step_in_epoch, 1);
    let mut tail_log = Vec::new();
    fit(&mut resumed, &data, &builder, &mut tail_log, None).unwrap();

    let full_lines: Vec<&str> = std::str::from_utf8(&full_log).unwrap().lines().collect();
    let tail_lines: Vec<&str> = std::str::from_utf8(&tail_log).unwrap().lines().collect();
    assert_eq!(full_lines[1..], tail_lines[..]);
    assert_eq!(encode(&full.checkpoint()).unwrap(), encode(&resumed.checkpoint()).unwrap());
}
