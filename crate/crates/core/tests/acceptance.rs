//! Acceptance suite. Criteria run one after another so the wall-clock budgets
//! are measured without competing tests; each prints a PASS or FAIL line.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dualstream::audio::stft::LOG_FLOOR;
use dualstream::audio::{log_spectrogram, AudioClip, SAMPLE_RATE};
use dualstream::augment::{blend_features, blend_pair, mean_std, shuffle_combine, shuffle_labels, BlendConfig};
use dualstream::eval::{compute_auc, compute_eer, ScoreSet};
use dualstream::losses::{
    adversarial_uniform_loss, binary_focal_loss, contrastive_loss, gradient_scope_adversarial, total_loss,
    LossConfig, LossTerms,
};
use dualstream::manifest::Label;
use dualstream::nn::{FeatureMap, ParamGroup};
use dualstream::train::{fit, train_step, Ablation, BatchBuilder, Objective, TrainConfig, Trainer, LAST_CHECKPOINT};
use dualstream::transforms::NoCodecs;
use dualstream::{DualStreamModel, Exec, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::Corpus;

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal)).collect()
}

fn within(elapsed: Duration, limit_s: u64, what: &str) {
    assert!(
        elapsed < Duration::from_secs(limit_s),
        "{what} took {elapsed:?}, budget {limit_s} s"
    );
}

fn oracle_contrastive(z: &[f32], dim: usize, labels: &[usize], margin: f64) -> f64 {
    let b = labels.len();
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            let (a, c) = (&z[i * dim..(i + 1) * dim], &z[j * dim..(j + 1) * dim]);
            let dot: f64 = a.iter().zip(c).map(|(x, y)| *x as f64 * *y as f64).sum();
            let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nc: f64 = c.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let s = dot / (na * nc);
            total += if labels[i] == labels[j] { 1.0 - s } else { (s - margin).max(0.0) };
        }
    }
    total / (b * b) as f64
}

fn criterion_1() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let b = rng.gen_range(1..=8);
        let dim = rng.gen_range(2..=16);
        let z = normal_vec(&mut rng, b * dim);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..3)).collect();
        let margin = rng.gen_range(0.0..0.9);
        let got = contrastive_loss(&z, dim, &labels, margin).unwrap();
        let want = oracle_contrastive(&z, dim, &labels, margin);
        assert!((got - want).abs() <= 1e-6, "contrastive {got} vs oracle {want}");
    }
    for n_s in 1..=6 {
        let k = n_s + 1;
        for _ in 0..50 {
            let logits: Vec<f32> = normal_vec(&mut rng, 4 * k).iter().map(|v| 3.0 * v).collect();
            assert!(adversarial_uniform_loss(&logits, k).unwrap() >= (k as f64).ln() - 1e-12);
        }
        let uniform = vec![rng.gen_range(-5.0f32..5.0); 4 * k];
        let at_uniform = adversarial_uniform_loss(&uniform, k).unwrap();
        assert!((at_uniform - (k as f64).ln()).abs() <= 1e-9, "uniform logits give {at_uniform}");
    }
    let real = binary_focal_loss(&[0.5], &[Label::Real], 0.25, 2.0);
    let fake = binary_focal_loss(&[0.5], &[Label::Fake], 0.25, 2.0);
    assert!((real - 0.043322).abs() <= 1e-6, "focal real {real}");
    assert!((fake - 0.129966).abs() <= 1e-6, "focal fake {fake}");
    let ones = LossTerms {
        cls: 1.0,
        cls_aug: 1.0,
        cls_s: 1.0,
        con_s: 1.0,
        cls_c: 1.0,
        adv: 1.0,
        con_cls: 1.0,
    };
    let total = total_loss(&ones, &LossConfig::default()).total;
    assert!((total - 4.25).abs() <= 1e-9, "total {total}");
    within(start.elapsed(), 10, "loss oracle suite");
}

fn criterion_2() {
    let start = Instant::now();
    let mut model = DualStreamModel::new(ModelConfig::compact(3), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for round in 0..20 {
        let b = rng.gen_range(2..=4);
        let x = FeatureMap::from_vec(b, 1, 257, 257, normal_vec(&mut rng, b * 257 * 257));
        let report = gradient_scope_adversarial(&mut model, &x, Exec::default()).unwrap();
        for group in ParamGroup::ALL {
            let norm = report.norms[&group];
            if group == ParamGroup::ContentStream {
                assert!(norm > 1e-8, "batch {round}: content stream gradient norm {norm}");
            } else {
                assert_eq!(norm, 0.0, "batch {round}: {group:?} received adversarial gradient");
            }
        }
    }
    within(start.elapsed(), 30, "gradient isolation suite");
}

fn criterion_3() {
    let start = Instant::now();
    let n = 48_000;
    let silent = log_spectrogram(&AudioClip::mono(vec![0.0; n])).unwrap();
    assert_eq!(silent.shape(), (257, 257));
    let floor = LOG_FLOOR.ln();
    assert!(silent.values.iter().all(|v| (v - floor).abs() <= 1e-9));
    let sine: Vec<f32> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / SAMPLE_RATE as f64).sin() as f32)
        .collect();
    let spec = log_spectrogram(&AudioClip::mono(sine)).unwrap();
    assert_eq!(spec.shape(), (257, 257));
    // Interior frames: the window lies entirely inside the signal, away from the reflected padding.
    let interior = (0..spec.time_frames).filter(|t| t * 187 >= 256 && t * 187 + 256 <= n);
    for t in interior {
        let peak = (0..spec.freq_bins)
            .max_by(|&a, &b| spec.at(a, t).total_cmp(&spec.at(b, t)))
            .unwrap();
        assert_eq!(peak, 32, "frame {t} peaks at bin {peak}");
    }
    assert!(spec.values.iter().all(|v| *v >= floor - 1e-9));
    within(start.elapsed(), 5, "spectrogram contract");
}

fn criterion_4() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let dim = rng.gen_range(8..=64);
        let zi = normal_vec(&mut rng, dim);
        let zj: Vec<f32> = normal_vec(&mut rng, dim).iter().map(|v| 2.0 * v + 0.5).collect();
        let r = rng.gen_range(0.5..=1.0);
        let out = blend_pair(&zi, &zj, r).unwrap();
        let ((mi, si), (mj, sj), (mo, so)) = (mean_std(&zi), mean_std(&zj), mean_std(&out));
        assert!((mo - (r * mi + (1.0 - r) * mj)).abs() <= 1e-6, "blended mean {mo}");
        assert!((so - (r * si + (1.0 - r) * sj)).abs() <= 1e-6, "blended std {so}");
    }

    let quiet = BlendConfig {
        noise_level: 0.0,
        ..Default::default()
    };
    let z = normal_vec(&mut rng, 32);
    assert_eq!(blend_pair(&z, &normal_vec(&mut rng, 32), 1.0).unwrap(), z);
    assert_eq!(blend_pair(&z, &z, 0.7).unwrap(), z);
    let twins: Vec<f32> = z.iter().chain(&z).copied().collect();
    let same = blend_features(&twins, 32, &[Label::Real, Label::Real], &quiet, &mut rng).unwrap();
    assert_eq!(same.values, twins);
    let keep = BlendConfig {
        ratio_range: [1.0, 1.0],
        ..quiet.clone()
    };
    let batch = normal_vec(&mut rng, 6 * 16);
    assert_eq!(blend_features(&batch, 16, &[Label::Fake; 6], &keep, &mut rng).unwrap().values, batch);
    let off = BlendConfig {
        enabled: false,
        ..Default::default()
    };
    assert_eq!(blend_features(&batch, 16, &[Label::Fake; 6], &off, &mut rng).unwrap().values, batch);

    for _ in 0..100 {
        let b = rng.gen_range(2..=16);
        let labels: Vec<Label> = (0..b).map(|_| if rng.gen() { Label::Real } else { Label::Fake }).collect();
        let z = normal_vec(&mut rng, b * 12);
        let out = blend_features(&z, 12, &labels, &BlendConfig::default(), &mut rng).unwrap();
        for (i, rec) in out.records.iter().enumerate() {
            assert_eq!(labels[i], labels[rec.partner], "partner of row {i} crosses classes");
        }
    }
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(k);
        for mut tail in permutations(rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn criterion_5() {
    let perms = permutations((0..4).collect());
    assert_eq!(perms.len(), 24);
    for mask in 0..16u32 {
        let labels: Vec<Label> = (0..4).map(|i| if mask >> i & 1 == 1 { Label::Real } else { Label::Fake }).collect();
        for perm in &perms {
            let got = shuffle_labels(&labels, perm);
            for i in 0..4 {
                let want = labels[i].is_real() && labels[perm[i]].is_real();
                assert_eq!(got[i].is_real(), want, "labels {labels:?} perm {perm:?} row {i}");
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<Label> = (0..8).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
    let f: Vec<f32> = (0..8).map(|v| v as f32).collect();
    let (mut real, mut total) = (0usize, 0usize);
    for _ in 0..10_000 {
        let out = shuffle_combine(&f, &f, 1, &labels, &mut rng).unwrap();
        let mut content: Vec<usize> = out.pairs.iter().map(|&(j, _)| j).collect();
        content.sort_unstable();
        assert_eq!(content, (0..8).collect::<Vec<_>>());
        real += out.labels.iter().filter(|l| l.is_real()).count();
        total += out.labels.len();
    }
    let fraction = real as f64 / total as f64;
    assert!((fraction - 0.25).abs() <= 0.05, "real fraction {fraction}");
}

fn criterion_6() {
    use Label::{Fake, Real};
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..300 {
        let n = rng.gen_range(2..=200);
        let mut labels: Vec<Label> = (0..n).map(|_| if rng.gen() { Real } else { Fake }).collect();
        labels[0] = Real;
        labels[1] = Fake;
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..40) as f64) / 40.0).collect();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in (0..n).filter(|&i| labels[i].is_real()) {
            for j in (0..n).filter(|&j| !labels[j].is_real()) {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let auc = compute_auc(&ScoreSet::new(scores, labels).unwrap()).unwrap();
        assert!((auc - wins / pairs).abs() <= 1e-9, "auc {auc} vs oracle {}", wins / pairs);
    }
    let hand = ScoreSet::new(vec![0.9, 0.8, 0.4, 0.6, 0.2, 0.1], vec![Real, Real, Real, Fake, Fake, Fake]).unwrap();
    assert_eq!(compute_auc(&hand).unwrap(), 8.0 / 9.0);
    assert_eq!(compute_eer(&hand).unwrap(), 1.0 / 3.0);
    let perfect = ScoreSet::new(vec![0.9, 0.8, 0.1, 0.2], vec![Real, Real, Fake, Fake]).unwrap();
    assert_eq!((compute_auc(&perfect).unwrap(), compute_eer(&perfect).unwrap()), (1.0, 0.0));
    let constant = ScoreSet::new(vec![0.5; 4], vec![Real, Fake, Real, Fake]).unwrap();
    assert_eq!((compute_auc(&constant).unwrap(), compute_eer(&constant).unwrap()), (0.5, 0.5));
    let inverted = ScoreSet::new(vec![0.1, 0.2, 0.9, 0.8], vec![Real, Real, Fake, Fake]).unwrap();
    assert_eq!((compute_auc(&inverted).unwrap(), compute_eer(&inverted).unwrap()), (0.0, 1.0));
}

fn desk_trainer(corpus: &Corpus, seed: u64, batch_size: usize, max_epochs: usize, objective: Objective) -> (Trainer, dualstream::train::Dataset) {
    let splits = corpus.inner_splits(seed);
    let data = corpus.dataset(&splits, seed);
    let config = TrainConfig {
        batch_size,
        max_epochs,
        seed,
        ..Default::default()
    };
    let model = ModelConfig::compact(splits.synthesizer_vocab.len());
    let trainer = Trainer::new(model, config, objective, splits.synthesizer_vocab.clone(), Exec::default()).unwrap();
    (trainer, data)
}

fn criterion_7() {
    let start = Instant::now();
    let corpus = Corpus::generate(200, 7);
    assert_eq!(corpus.entries.len(), 400);
    let (mut trainer, data) = desk_trainer(&corpus, 7, 32, 15, Objective::default());
    let builder = BatchBuilder::new(Arc::new(NoCodecs));
    let mut log = Vec::new();
    let outcome = fit(&mut trainer, &data, &builder, &mut log, None).unwrap();
    for r in &outcome.history {
        println!(
            "    epoch {:>2}: loss {:.4}  val AUC {:.4}  EER {:.4}{}",
            r.epoch,
            r.mean_total,
            r.val_auc,
            r.val_eer,
            if r.improved { "  (best)" } else { "" }
        );
    }
    let best = &outcome.history[outcome.best_epoch];
    assert!(best.val_auc >= 0.99, "best validation AUC {}", best.val_auc);
    assert!(best.val_eer <= 0.05, "validation EER at the best epoch {}", best.val_eer);

    let mut best_so_far = f64::NEG_INFINITY;
    let mut since = 0;
    for (k, r) in outcome.history.iter().enumerate() {
        let improved = r.val_auc > best_so_far;
        if improved {
            best_so_far = r.val_auc;
            since = 0;
        } else {
            since += 1;
        }
        assert_eq!(r.improved, improved, "epoch {k}");
        assert_eq!(r.stop, since >= 3, "epoch {k}");
        assert_eq!(r.best_auc, best_so_far);
    }
    assert!(outcome.stopped_early, "early stopping did not fire within 15 epochs");
    assert!(outcome.history.last().unwrap().stop);
    within(start.elapsed(), 600, "end-to-end run");
}

fn step_log(objective: Objective, corpus: &Corpus) -> Vec<Value> {
    let (mut trainer, data) = desk_trainer(corpus, 8, 8, 1, objective);
    let builder = BatchBuilder::new(Arc::new(NoCodecs));
    let mut log = Vec::new();
    fit(&mut trainer, &data, &builder, &mut log, None).unwrap();
    String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["kind"] == "step")
        .collect()
}

fn criterion_8() {
    let corpus = Corpus::generate(12, 8);
    let mut combined = Objective::default();
    combined.loss.betas[2] = 0.0;
    combined.blend.enabled = false;
    combined.ablation.shuffle = false;
    let steps = step_log(combined, &corpus);
    assert!(!steps.is_empty());
    for s in &steps {
        for term in ["cls_aug", "cls_c", "adv"] {
            assert_eq!(s[term].as_f64(), Some(0.0), "{term} in {s}");
        }
        for term in ["cls", "cls_s", "con_s", "con_cls", "total"] {
            assert!(s[term].as_f64().unwrap().is_finite(), "{term} in {s}");
        }
    }

    let splits = corpus.inner_splits(8);
    let data = corpus.dataset(&splits, 8);
    let builder = BatchBuilder::new(Arc::new(NoCodecs));
    let batch = builder.train_batch(&data.train, &(0..8).collect::<Vec<_>>(), 8, 0, 0, Exec::default()).unwrap();
    let switches: [(&str, fn(&mut Objective), &[&str]); 9] = [
        ("shuffle", |o| o.ablation.shuffle = false, &["cls_aug"]),
        ("cls_s", |o| o.ablation.cls_s = false, &["cls_s"]),
        ("con_s", |o| o.ablation.con_s = false, &["con_s"]),
        ("cls_c", |o| o.ablation.cls_c = false, &["cls_c"]),
        ("adversarial", |o| o.ablation.adversarial = false, &["adv"]),
        ("con_cls", |o| o.ablation.con_cls = false, &["con_cls"]),
        ("beta2", |o| o.loss.betas[2] = 0.0, &["cls_c", "adv"]),
        ("blend", |o| o.blend.enabled = false, &[]),
        (
            "main only",
            |o| o.ablation = Ablation::main_only(),
            &["cls_aug", "cls_s", "con_s", "cls_c", "adv", "con_cls"],
        ),
    ];
    for (name, apply, zeroed) in switches {
        let mut objective = Objective::default();
        apply(&mut objective);
        let mut model = DualStreamModel::new(ModelConfig::compact(splits.synthesizer_vocab.len()), 8).unwrap();
        let mut optimizer = dualstream::nn::Adam::new(Default::default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let losses = train_step(&mut model, &mut optimizer, &batch, &objective, &mut rng, Exec::default()).unwrap();
        let row = serde_json::to_value(losses).unwrap();
        for term in ["cls", "cls_aug", "cls_s", "con_s", "cls_c", "adv", "con_cls"] {
            let v = row[term].as_f64().unwrap();
            if zeroed.contains(&term) {
                assert_eq!(v, 0.0, "{name}: {term}");
            } else {
                assert!(v.is_finite() && v > 0.0, "{name}: {term} = {v}");
            }
        }
    }
}

fn criterion_9() {
    let corpus = Corpus::generate(12, 9);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let (mut trainer, data) = desk_trainer(&corpus, 9, 8, 2, Objective::default());
        let builder = BatchBuilder::new(Arc::new(NoCodecs));
        let mut log = Vec::new();
        fit(&mut trainer, &data, &builder, &mut log, Some(dir.path())).unwrap();
        (log, std::fs::read(dir.path().join(LAST_CHECKPOINT)).unwrap())
    };
    let (log_a, ckpt_a) = run();
    let (log_b, ckpt_b) = run();
    assert!(!log_a.is_empty());
    assert!(log_a == log_b, "training logs differ");
    assert!(ckpt_a == ckpt_b, "checkpoints differ");
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("loss oracles", criterion_1),
        ("adversarial gradient isolation", criterion_2),
        ("spectrogram contract", criterion_3),
        ("feature blending", criterion_4),
        ("feature shuffle", criterion_5),
        ("metrics", criterion_6),
        ("end-to-end desk-scale run", criterion_7),
        ("ablation switches", criterion_8),
        ("determinism", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} in {:.1} s", start.elapsed().as_secs_f64());
        if !ok {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
