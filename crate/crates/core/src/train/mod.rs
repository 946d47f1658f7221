//! Optimization: one training step over all loss terms, the epoch loop with
//! early stopping on validation AUC, and resumable checkpoints.
//!
//! A step runs a single forward pass. Its gradients flow as follows:
//!
//! * synthesizer cross-entropy and contrastive terms into `f_s`;
//! * compression and speed cross-entropies into `f_c`;
//! * the fused contrastive term into both through `f_c ‖ f_s`;
//! * the main and shuffled binary terms through the final head, the feature
//!   shuffle and the blending back into `f_c` and `f_s`;
//! * the adversarial term into the content stage only.
//!
//! Training log lines are JSON objects tagged by `"kind"`. Step lines carry
//! `epoch, step, global_step, cls, cls_aug, cls_s, con_s, cls_c, adv, con_cls,
//! total`; epoch lines carry the fields of [`EpochRecord`].

pub mod checkpoint;
pub mod data;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::augment::{blend_backward, blend_features, shuffle_backward, shuffle_combine, BlendConfig};
use crate::error::{Error, Result};
use crate::eval::{compute_auc, compute_eer, score_clips, ScoreSet};
use crate::exec::Exec;
use crate::losses::{
    adversarial_backward, bce_logits, contrastive_loss_grad, cross_entropy, focal_loss_logits, total_loss, LabelBundle,
    LossBreakdown, LossConfig, LossTerms,
};
use crate::manifest::Label;
use crate::model::{concat_rows, split_rows, DualStreamModel, ModelConfig};
use crate::nn::{Adam, AdamConfig, FeatureMap, Mode, ParamGroup};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingSnapshot};
pub use data::{BatchBuilder, Dataset, Sample};

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_DATA: u64 = 2;
pub(crate) const STREAM_AUG: u64 = 3;
pub(crate) const STREAM_SAMPLE: u64 = 4;
pub(crate) const STREAM_OVERSAMPLE: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent rng stream keyed by the master seed and two counters.
pub fn derive_seed(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    [stream, a, b].iter().fold(splitmix(seed), |h, &v| splitmix(h ^ splitmix(v)))
}

/// Per-term switches; a disabled term is neither computed nor back-propagated and logs as zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub shuffle: bool,
    pub cls_s: bool,
    pub con_s: bool,
    pub cls_c: bool,
    pub adversarial: bool,
    pub con_cls: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            shuffle: true,
            cls_s: true,
            con_s: true,
            cls_c: true,
            adversarial: true,
            con_cls: true,
        }
    }
}

impl Ablation {
    /// Only the main binary classification term.
    pub fn main_only() -> Self {
        Ablation {
            shuffle: false,
            cls_s: false,
            con_s: false,
            cls_c: false,
            adversarial: false,
            con_cls: false,
        }
    }
}

/// Loss weights, augmentation settings and switches of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Objective {
    pub loss: LossConfig,
    pub blend: BlendConfig,
    pub ablation: Ablation,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.blend.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            optimizer: AdamConfig::default(),
            patience: 3,
            max_epochs: 100,
            seed: 0,
            eval_batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidInput("batch_size must be at least 2".into()));
        }
        if self.patience < 1 || self.max_epochs < 1 || self.eval_batch_size < 1 {
            return Err(Error::InvalidInput("patience, max_epochs and eval_batch_size must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.weight_decay >= 0.0 && o.eps > 0.0) {
            return Err(Error::InvalidInput("optimizer settings out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub x: FeatureMap,
    pub labels: Vec<LabelBundle>,
}

fn axpy(acc: &mut [f32], scale: f32, g: &[f32]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += scale * b;
    }
}

fn scaled(g: &[f32], s: f64) -> Vec<f32> {
    g.iter().map(|v| v * s as f32).collect()
}

/// One optimization step: forward once, accumulate every enabled term's
/// gradient, then apply a single Adam update.
pub fn train_step<R: Rng + ?Sized>(
    model: &mut DualStreamModel,
    optimizer: &mut Adam,
    batch: &Batch,
    objective: &Objective,
    rng: &mut R,
    exec: Exec,
) -> Result<LossBreakdown> {
    let b = batch.x.n;
    if batch.labels.len() != b {
        return Err(Error::Shape(format!("{} label bundles for batch {b}", batch.labels.len())));
    }
    let cfg = &objective.loss;
    let ab = &objective.ablation;
    let [b0, b1, b2, b3] = cfg.betas;
    let n = model.config.feature_dim;
    let y: Vec<Label> = batch.labels.iter().map(|l| l.label).collect();

    model.zero_grad();
    let (out, trace) = model.forward_full(&batch.x, Mode::Train, exec)?;
    let trace = trace.expect("training forward keeps a trace");
    let mut terms = LossTerms::default();
    let mut d_fs = vec![0.0f32; b * n];
    let mut d_fc = vec![0.0f32; b * n];

    if ab.cls_s && b1 > 0.0 {
        let targets: Vec<usize> = batch.labels.iter().map(|l| l.synth).collect();
        let (l, g) = cross_entropy(&out.logits_synth, model.config.n_synth_classes, &targets)?;
        terms.cls_s = l;
        axpy(&mut d_fs, 1.0, &model.synth_head.backward(&out.f_s, &scaled(&g, b1), b));
    }
    if ab.con_s && b1 > 0.0 {
        let targets: Vec<usize> = batch.labels.iter().map(|l| l.synth).collect();
        let (l, g) = contrastive_loss_grad(&out.f_s, n, &targets, cfg.margin)?;
        terms.con_s = l;
        axpy(&mut d_fs, (b1 * cfg.synth_contrastive_weight) as f32, &g);
    }
    if ab.cls_c && b2 > 0.0 {
        let comp: Vec<usize> = batch.labels.iter().map(|l| l.compression).collect();
        let speed: Vec<usize> = batch.labels.iter().map(|l| l.speed).collect();
        let (lc, gc) = cross_entropy(&out.logits_comp, model.config.n_compression, &comp)?;
        let (ls, gs) = cross_entropy(&out.logits_speed, model.config.n_speed, &speed)?;
        terms.cls_c = lc + ls;
        axpy(&mut d_fc, 1.0, &model.comp_head.backward(&out.f_c, &scaled(&gc, b2), b));
        axpy(&mut d_fc, 1.0, &model.speed_head.backward(&out.f_c, &scaled(&gs, b2), b));
    }
    if ab.con_cls && b3 > 0.0 {
        let targets: Vec<usize> = y.iter().map(|&l| l as usize).collect();
        let (l, g) = contrastive_loss_grad(&out.f_cls, 2 * n, &targets, cfg.margin)?;
        terms.con_cls = l;
        let (gc, gs) = split_rows(&g, b, n);
        axpy(&mut d_fc, b3 as f32, &gc);
        axpy(&mut d_fs, b3 as f32, &gs);
    }

    let blend_c = blend_features(&out.f_c, n, &y, &objective.blend, rng)?;
    let blend_s = blend_features(&out.f_s, n, &y, &objective.blend, rng)?;
    let mut d_bc = vec![0.0f32; b * n];
    let mut d_bs = vec![0.0f32; b * n];
    let fused = concat_rows(&blend_c.values, &blend_s.values, b);
    let (l, g) = bce_logits(&model.final_head.forward(&fused, b), &y)?;
    terms.cls = l;
    let (gc, gs) = split_rows(&model.final_head.backward(&fused, &g, b), b, n);
    axpy(&mut d_bc, 1.0, &gc);
    axpy(&mut d_bs, 1.0, &gs);
    if ab.shuffle && b0 > 0.0 {
        let sh = shuffle_combine(&blend_s.values, &blend_c.values, n, &y, rng)?;
        let logits = model.final_head.forward(&sh.fused, b);
        let (l, g) = focal_loss_logits(&logits, &sh.labels, cfg.focal_alpha, cfg.focal_gamma)?;
        terms.cls_aug = l;
        let d = model.final_head.backward(&sh.fused, &scaled(&g, b0), b);
        let (gs, gc) = shuffle_backward(&d, &sh.pairs, n);
        axpy(&mut d_bc, 1.0, &gc);
        axpy(&mut d_bs, 1.0, &gs);
    }
    axpy(&mut d_fc, 1.0, &blend_backward(&out.f_c, n, &blend_c.records, &d_bc));
    axpy(&mut d_fs, 1.0, &blend_backward(&out.f_s, n, &blend_s.records, &d_bs));

    let mut d_hidden = model.backward_synth_stream(&trace, &d_fs, exec);
    let d_content = model
        .backward_content_stream(&trace, &d_fc, true, exec)
        .expect("input gradient requested");
    d_hidden.add_assign(&d_content);

    if ab.adversarial && b2 > 0.0 {
        let before = cfg!(debug_assertions).then(|| outside_content_grads(model));
        terms.adv = adversarial_backward(model, &trace, &out.f_c, b, b2 as f32, exec)?;
        if let Some(before) = before {
            debug_assert!(
                before == outside_content_grads(model),
                "adversarial gradient leaked outside the content stage"
            );
        }
    }
    model.backward_backbone(&trace, &d_hidden, exec);

    let breakdown = total_loss(&terms, cfg);
    if !breakdown.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            step: 0,
            detail: format!("{breakdown:?}"),
        });
    }
    model.update_running(&trace);
    optimizer.step(&mut model.params_mut());
    Ok(breakdown)
}

fn outside_content_grads(model: &DualStreamModel) -> Vec<f32> {
    model
        .params_grouped()
        .into_iter()
        .filter(|(g, _)| *g != ParamGroup::ContentStream)
        .flat_map(|(_, p)| p.grad.iter().copied())
        .collect()
}

/// Outcome of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub mean_total: f64,
    pub val_auc: f64,
    pub val_eer: f64,
    pub best_auc: f64,
    pub improved: bool,
    pub stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub seed: u64,
    /// Epoch in progress (or next to start), counted from zero.
    pub epoch: usize,
    /// Batches of the current epoch already applied.
    pub step_in_epoch: usize,
    pub global_step: u64,
    pub best_auc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    pub stopped: bool,
    /// Running sum of step totals in the current epoch.
    pub epoch_loss_sum: f64,
    pub aug_rng: ChaCha8Rng,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        TrainState {
            seed,
            epoch: 0,
            step_in_epoch: 0,
            global_step: 0,
            best_auc: None,
            best_epoch: None,
            epochs_since_improvement: 0,
            stopped: false,
            epoch_loss_sum: 0.0,
            aug_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_AUG, 0, 0)),
            history: Vec::new(),
        }
    }

    /// Records a validation AUC; only a strict improvement resets the patience counter.
    pub fn observe(&mut self, epoch: usize, auc: f64, patience: usize) -> bool {
        let improved = self.best_auc.map_or(true, |best| auc > best);
        if improved {
            self.best_auc = Some(auc);
            self.best_epoch = Some(epoch);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        self.stopped = self.epochs_since_improvement >= patience;
        improved
    }
}

/// Model, optimizer and run state, advanced one batch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: DualStreamModel,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub objective: Objective,
    pub state: TrainState,
    pub synthesizer_vocab: Vec<String>,
    pub exec: Exec,
}

impl Trainer {
    pub fn new(
        model_config: ModelConfig,
        config: TrainConfig,
        objective: Objective,
        synthesizer_vocab: Vec<String>,
        exec: Exec,
    ) -> Result<Self> {
        config.validate()?;
        objective.validate()?;
        if model_config.n_synth_classes != synthesizer_vocab.len() {
            return Err(Error::InvalidInput(format!(
                "model has {} synthesizer classes but the vocabulary has {}",
                model_config.n_synth_classes,
                synthesizer_vocab.len()
            )));
        }
        let model = DualStreamModel::new(model_config, derive_seed(config.seed, STREAM_INIT, 0, 0))?;
        Ok(Trainer {
            model,
            optimizer: Adam::new(config.optimizer),
            state: TrainState::new(config.seed),
            config,
            objective,
            synthesizer_vocab,
            exec,
        })
    }

    pub fn step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let result = train_step(
            &mut self.model,
            &mut self.optimizer,
            batch,
            &self.objective,
            &mut self.state.aug_rng,
            self.exec,
        );
        let breakdown = result.map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite {
                epoch: self.state.epoch,
                step: self.state.step_in_epoch,
                detail,
            },
            other => other,
        })?;
        self.state.global_step += 1;
        self.state.step_in_epoch += 1;
        self.state.epoch_loss_sum += breakdown.total;
        Ok(breakdown)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            synthesizer_vocab: self.synthesizer_vocab.clone(),
            training: Some(TrainingSnapshot {
                config: self.config.clone(),
                objective: self.objective.clone(),
                optimizer: self.optimizer.clone(),
                state: self.state.clone(),
            }),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, exec: Exec) -> Result<Self> {
        let t = ckpt
            .training
            .ok_or_else(|| Error::Checkpoint("checkpoint holds no training state".into()))?;
        Ok(Trainer {
            model: ckpt.model,
            optimizer: t.optimizer,
            config: t.config,
            objective: t.objective,
            state: t.state,
            synthesizer_vocab: ckpt.synthesizer_vocab,
            exec,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        global_step: u64,
        #[serde(flatten)]
        losses: LossBreakdown,
    },
    Epoch(EpochRecord),
}

fn write_log(log: &mut dyn Write, record: &LogRecord) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    log.write_all(&line)
        .map_err(|e| Error::io("<training log>", e))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Snapshot taken right after the epoch with the best validation AUC.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_auc: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Validation AUC and EER of the current model.
pub fn validate(model: &DualStreamModel, samples: &[Sample], batch_size: usize, exec: Exec) -> Result<(f64, f64)> {
    let clips: Vec<&AudioClip> = samples.iter().map(|s| s.clip.as_ref()).collect();
    let scores = score_clips(model, &clips, batch_size, exec)?;
    let set = ScoreSet::new(scores, samples.iter().map(|s| s.label).collect())?;
    Ok((compute_auc(&set)?, compute_eer(&set)?))
}

/// Trains until validation AUC stops improving for `patience` epochs or
/// `max_epochs` is reached. Resumes from wherever `trainer.state` stands.
pub fn fit(
    trainer: &mut Trainer,
    data: &Dataset,
    builder: &BatchBuilder,
    log: &mut dyn Write,
    checkpoint_dir: Option<&Path>,
) -> Result<FitOutcome> {
    if data.train.len() < 2 || data.validation.is_empty() {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 training and 1 validation clips, got {} and {}",
            data.train.len(),
            data.validation.len()
        )));
    }
    let labels = |s: &[Sample]| (s.iter().any(|x| x.label.is_real()), s.iter().any(|x| !x.label.is_real()));
    if labels(&data.validation) != (true, true) {
        return Err(Error::InvalidInput("validation split must contain real and fake clips".into()));
    }
    let seed = trainer.config.seed;
    let bs = trainer.config.batch_size;
    let mut best: Option<Checkpoint> = None;
    while !trainer.state.stopped && trainer.state.epoch < trainer.config.max_epochs {
        let epoch = trainer.state.epoch;
        let batches = data::epoch_batches(data.train.len(), bs, seed, epoch);
        for k in trainer.state.step_in_epoch..batches.len() {
            let batch = builder.train_batch(&data.train, &batches[k], seed, epoch, k * bs, trainer.exec)?;
            let losses = trainer.step(&batch)?;
            write_log(
                log,
                &LogRecord::Step {
                    epoch,
                    step: k,
                    global_step: trainer.state.global_step,
                    losses,
                },
            )?;
        }
        let (auc, eer) = validate(&trainer.model, &data.validation, trainer.config.eval_batch_size, trainer.exec)?;
        let improved = trainer.state.observe(epoch, auc, trainer.config.patience);
        let record = EpochRecord {
            epoch,
            steps: batches.len(),
            mean_total: trainer.state.epoch_loss_sum / batches.len().max(1) as f64,
            val_auc: auc,
            val_eer: eer,
            best_auc: trainer.state.best_auc.unwrap_or(auc),
            improved,
            stop: trainer.state.stopped,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, val AUC {auc:.4}, EER {eer:.4}{}",
            record.mean_total,
            if improved { " (best)" } else { "" }
        );
        write_log(log, &LogRecord::Epoch(record.clone()))?;
        trainer.state.history.push(record);
        trainer.state.epoch += 1;
        trainer.state.step_in_epoch = 0;
        trainer.state.epoch_loss_sum = 0.0;
        let ckpt = trainer.checkpoint();
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(dir.join(LAST_CHECKPOINT), &ckpt)?;
            if improved {
                save_checkpoint(dir.join(BEST_CHECKPOINT), &ckpt)?;
            }
        }
        if improved {
            best = Some(ckpt);
        }
    }
    let best = match best {
        Some(b) => b,
        None => match checkpoint_dir.map(|d| d.join(BEST_CHECKPOINT)).filter(|p| p.exists()) {
            Some(path) => load_checkpoint(path)?,
            None => trainer.checkpoint(),
        },
    };
    Ok(FitOutcome {
        best,
        best_epoch: trainer.state.best_epoch.unwrap_or(0),
        best_auc: trainer.state.best_auc.unwrap_or(f64::NAN),
        history: trainer.state.history.clone(),
        stopped_early: trainer.state.stopped,
    })
}

/// Seed for real-class oversampling of a run.
pub fn oversample_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_OVERSAMPLE, 0, 0)
}
