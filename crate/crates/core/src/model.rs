//! The dual-stream detector.
//!
//! ```text
//!                         ┌─ synthesizer stage ─ avg pool ─ f_s ─ synth head ──────── synthesizer logits
//! spectrogram ─ backbone ─┤
//!  (1×257×257)   (F_H)    └─ content stage ───── avg pool ─ f_c ─ compression head ─── compression logits
//!                                                               └ speed head ───────── speed logits
//!                    f_cls = f_c ‖ f_s ─ final head ─ real/fake logit
//! ```
//!
//! The backbone is the stem and first three stages of an 18-layer residual
//! network (7×7 stride-2 convolution, batch norm, ReLU, 3×3 stride-2 max
//! pool, then three stages of two basic blocks). Each stream owns an
//! independent copy of the fourth stage.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu_backward_inplace, relu_inplace, BatchNorm2d, BnTrace, Buffer,
    Conv2d, FeatureMap, Linear, MaxPool, MaxPoolTrace, Mode, Param, ParamGroup, Stage, StageTrace,
};
use crate::transforms::{N_COMPRESSION, N_SPEED};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// He-normal convolutions, uniform linear layers.
    Random,
    /// Random init, then every `backbone.*` tensor is copied from a checkpoint.
    PretrainedBackbone { checkpoint: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub stage_channels: [usize; 4],
    pub blocks_per_stage: usize,
    /// Width of f_s and f_c; always the last stage width.
    pub feature_dim: usize,
    /// Synthesizers in training plus one for real speech.
    pub n_synth_classes: usize,
    pub n_compression: usize,
    pub n_speed: usize,
    pub init: Init,
}

impl ModelConfig {
    /// Full-width network: stages (64, 128, 256, 512).
    pub fn standard(n_synth_classes: usize) -> Self {
        Self::with_channels([64, 128, 256, 512], n_synth_classes)
    }

    /// Narrow network for fast tests: stages (16, 32, 64, 128).
    pub fn compact(n_synth_classes: usize) -> Self {
        Self::with_channels([16, 32, 64, 128], n_synth_classes)
    }

    pub fn with_channels(stage_channels: [usize; 4], n_synth_classes: usize) -> Self {
        ModelConfig {
            stage_channels,
            blocks_per_stage: 2,
            feature_dim: stage_channels[3],
            n_synth_classes,
            n_compression: N_COMPRESSION,
            n_speed: N_SPEED,
            init: Init::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim != self.stage_channels[3] {
            return Err(Error::InvalidInput(format!(
                "feature_dim {} must equal the last stage width {}",
                self.feature_dim, self.stage_channels[3]
            )));
        }
        if self.n_synth_classes < 2 {
            return Err(Error::InvalidInput("n_synth_classes must be at least 2".into()));
        }
        if self.stage_channels.contains(&0) || self.blocks_per_stage == 0 || self.n_compression == 0 || self.n_speed == 0 {
            return Err(Error::InvalidInput("model widths and block counts must be positive".into()));
        }
        Ok(())
    }
}

/// Spatial size after the stem, pool and three stride-2 stages.
pub fn downsampled(size: usize, times: usize) -> usize {
    (0..times).fold(size, |s, _| s.div_ceil(2))
}

/// Everything one forward pass produces. Vectors are row-major over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    pub batch: usize,
    pub f_s: Vec<f32>,
    pub f_c: Vec<f32>,
    pub logits_synth: Vec<f32>,
    pub logits_comp: Vec<f32>,
    pub logits_speed: Vec<f32>,
    pub logit_final: Vec<f32>,
    /// `f_c ‖ f_s` per row.
    pub f_cls: Vec<f32>,
}

impl ModelOutputs {
    pub fn scores(&self) -> Vec<f64> {
        self.logit_final.iter().map(|&z| sigmoid(z as f64)).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise concatenation `a[i] ‖ b[i]`.
pub fn concat_rows(a: &[f32], b: &[f32], batch: usize) -> Vec<f32> {
    let (da, db) = (a.len() / batch.max(1), b.len() / batch.max(1));
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..batch {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

/// Inverse of [`concat_rows`]: splits each row after `left` values.
pub fn split_rows(x: &[f32], batch: usize, left: usize) -> (Vec<f32>, Vec<f32>) {
    let d = x.len() / batch.max(1);
    let mut a = Vec::with_capacity(batch * left);
    let mut b = Vec::with_capacity(batch * (d - left));
    for row in x.chunks_exact(d) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    (a, b)
}

#[derive(Debug, Clone)]
pub struct BackboneTrace {
    input: FeatureMap,
    stem_bn: BnTrace,
    stem_act: FeatureMap,
    pool: MaxPoolTrace,
    layers: [StageTrace; 3],
}

#[derive(Debug, Clone)]
pub struct StreamTrace {
    stage: StageTrace,
    out_dims: [usize; 4],
}

/// Activations kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub backbone: BackboneTrace,
    pub synth: StreamTrace,
    pub content: StreamTrace,
    pub hidden_dims: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualStreamModel {
    pub config: ModelConfig,
    pub stem: Conv2d,
    pub stem_bn: BatchNorm2d,
    pub pool: MaxPool,
    pub layers: [Stage; 3],
    pub synth_stage: Stage,
    pub content_stage: Stage,
    pub synth_head: Linear,
    pub comp_head: Linear,
    pub speed_head: Linear,
    pub final_head: Linear,
}

impl DualStreamModel {
    /// Builds a randomly initialized network; `Init::PretrainedBackbone` then
    /// overwrites the backbone from the referenced checkpoint.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut model = Self::random(config.clone(), seed);
        if let Init::PretrainedBackbone { checkpoint } = &config.init {
            let donor = crate::train::checkpoint::load_model(checkpoint)?;
            model.copy_backbone_from(&donor)?;
        }
        Ok(model)
    }

    fn random(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c0, c1, c2, c3] = config.stage_channels;
        let nb = config.blocks_per_stage;
        let n = config.feature_dim;
        DualStreamModel {
            stem: Conv2d::new("backbone.conv1", 1, c0, 7, 2, 3, &mut rng),
            stem_bn: BatchNorm2d::new("backbone.bn1", c0),
            pool: MaxPool {
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            layers: [
                Stage::new("backbone.layer1", c0, c0, 1, nb, &mut rng),
                Stage::new("backbone.layer2", c0, c1, 2, nb, &mut rng),
                Stage::new("backbone.layer3", c1, c2, 2, nb, &mut rng),
            ],
            synth_stage: Stage::new("synth_stream.layer4", c2, c3, 2, nb, &mut rng),
            content_stage: Stage::new("content_stream.layer4", c2, c3, 2, nb, &mut rng),
            synth_head: Linear::new("synth_head", n, config.n_synth_classes, &mut rng),
            comp_head: Linear::new("content_heads.compression", n, config.n_compression, &mut rng),
            speed_head: Linear::new("content_heads.speed", n, config.n_speed, &mut rng),
            final_head: Linear::new("final_head", 2 * n, 1, &mut rng),
            config,
        }
    }

    fn copy_backbone_from(&mut self, donor: &DualStreamModel) -> Result<()> {
        let source: BTreeMap<&str, &Param> = donor
            .params_grouped()
            .into_iter()
            .filter(|(g, _)| *g == ParamGroup::Backbone)
            .map(|(_, p)| (p.name.as_str(), p))
            .collect();
        for (group, p) in self.params_grouped_mut() {
            if group != ParamGroup::Backbone {
                continue;
            }
            let src = source
                .get(p.name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("pretrained backbone lacks {}", p.name)))?;
            if src.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "pretrained {} has shape {:?}, expected {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.value.clone_from(&src.value);
        }
        let buffers: BTreeMap<String, Vec<f32>> = donor
            .buffers()
            .into_iter()
            .filter(|b| b.name.starts_with("backbone."))
            .map(|b| (b.name.clone(), b.value.clone()))
            .collect();
        for b in self.buffers_mut() {
            if let Some(v) = buffers.get(&b.name) {
                b.value.clone_from(v);
            }
        }
        Ok(())
    }

    /// Packs `batch` spectrograms of `freq × time` values into an NCHW map.
    pub fn input_map(values: Vec<f32>, batch: usize, freq: usize, time: usize) -> FeatureMap {
        FeatureMap::from_vec(batch, 1, freq, time, values)
    }

    pub fn backbone_forward(&self, x: &FeatureMap, mode: Mode, exec: Exec) -> Result<(FeatureMap, Option<BackboneTrace>)> {
        if x.c != 1 || x.n == 0 || x.h < 2 || x.w < 2 {
            return Err(Error::Shape(format!(
                "backbone expects a non-empty batch of 1-channel spectrograms, got {:?}",
                x.dims()
            )));
        }
        let h = self.stem.forward(x, exec);
        let (mut h, stem_bn) = match mode {
            Mode::Train => {
                let (y, t) = self.stem_bn.forward_train(&h);
                (y, Some(t))
            }
            Mode::Eval => (self.stem_bn.forward_eval(&h), None),
        };
        relu_inplace(&mut h.data);
        let (pooled, pool_trace) = self.pool.forward(&h);
        let (h1, t1) = self.layers[0].forward(&pooled, mode, exec);
        let (h2, t2) = self.layers[1].forward(&h1, mode, exec);
        let (h3, t3) = self.layers[2].forward(&h2, mode, exec);
        let trace = match mode {
            Mode::Train => Some(BackboneTrace {
                input: x.clone(),
                stem_bn: stem_bn.unwrap(),
                stem_act: h,
                pool: pool_trace,
                layers: [t1.unwrap(), t2.unwrap(), t3.unwrap()],
            }),
            Mode::Eval => None,
        };
        Ok((h3, trace))
    }

    fn check_hidden(&self, fh: &FeatureMap) -> Result<()> {
        if fh.c != self.config.stage_channels[2] {
            return Err(Error::Shape(format!(
                "stream input has {} channels, expected {}",
                fh.c, self.config.stage_channels[2]
            )));
        }
        Ok(())
    }

    /// Fourth stage + average pool, then the synthesizer head.
    pub fn synthesizer_stream(
        &self,
        fh: &FeatureMap,
        mode: Mode,
        exec: Exec,
    ) -> Result<(Vec<f32>, Vec<f32>, Option<StreamTrace>)> {
        self.check_hidden(fh)?;
        let (y, t) = self.synth_stage.forward(fh, mode, exec);
        let f_s = global_avg_pool(&y);
        let logits = self.synth_head.forward(&f_s, fh.n);
        let trace = t.map(|stage| StreamTrace {
            stage,
            out_dims: y.dims(),
        });
        Ok((f_s, logits, trace))
    }

    /// Fourth stage + average pool, then the compression and speed heads.
    #[allow(clippy::type_complexity)]
    pub fn content_stream(
        &self,
        fh: &FeatureMap,
        mode: Mode,
        exec: Exec,
    ) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>, Option<StreamTrace>)> {
        self.check_hidden(fh)?;
        let (y, t) = self.content_stage.forward(fh, mode, exec);
        let f_c = global_avg_pool(&y);
        let comp = self.comp_head.forward(&f_c, fh.n);
        let speed = self.speed_head.forward(&f_c, fh.n);
        let trace = t.map(|stage| StreamTrace {
            stage,
            out_dims: y.dims(),
        });
        Ok((f_c, comp, speed, trace))
    }

    /// Synthesizer head applied to arbitrary features (used on f_c by the adversarial term).
    pub fn synth_head_on(&self, features: &[f32], batch: usize) -> Vec<f32> {
        self.synth_head.forward(features, batch)
    }

    pub fn forward_full(&self, x: &FeatureMap, mode: Mode, exec: Exec) -> Result<(ModelOutputs, Option<ForwardTrace>)> {
        let (fh, bt) = self.backbone_forward(x, mode, exec)?;
        let (f_s, logits_synth, st) = self.synthesizer_stream(&fh, mode, exec)?;
        let (f_c, logits_comp, logits_speed, ct) = self.content_stream(&fh, mode, exec)?;
        let batch = x.n;
        let f_cls = concat_rows(&f_c, &f_s, batch);
        let logit_final = self.final_head.forward(&f_cls, batch);
        let outputs = ModelOutputs {
            batch,
            f_s,
            f_c,
            logits_synth,
            logits_comp,
            logits_speed,
            logit_final,
            f_cls,
        };
        if outputs.f_cls.iter().chain(&outputs.logit_final).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("forward pass produced non-finite values".into()));
        }
        let trace = match (bt, st, ct) {
            (Some(backbone), Some(synth), Some(content)) => Some(ForwardTrace {
                backbone,
                synth,
                content,
                hidden_dims: fh.dims(),
            }),
            _ => None,
        };
        Ok((outputs, trace))
    }

    /// Inference-mode real-speech probabilities.
    pub fn score(&self, x: &FeatureMap, exec: Exec) -> Result<Vec<f64>> {
        Ok(self.forward_full(x, Mode::Eval, exec)?.0.scores())
    }

    /// Backward through the synthesizer stage from a gradient on f_s; returns dF_H.
    pub fn backward_synth_stream(&mut self, trace: &ForwardTrace, d_f_s: &[f32], exec: Exec) -> FeatureMap {
        let d = global_avg_pool_backward(d_f_s, trace.synth.out_dims);
        self.synth_stage
            .backward(&trace.synth.stage, &d, true, exec)
            .expect("input gradient requested")
    }

    /// Backward through the content stage from a gradient on f_c; dF_H only when `need_dx`.
    pub fn backward_content_stream(
        &mut self,
        trace: &ForwardTrace,
        d_f_c: &[f32],
        need_dx: bool,
        exec: Exec,
    ) -> Option<FeatureMap> {
        let d = global_avg_pool_backward(d_f_c, trace.content.out_dims);
        self.content_stage.backward(&trace.content.stage, &d, need_dx, exec)
    }

    pub fn backward_backbone(&mut self, trace: &ForwardTrace, d_hidden: &FeatureMap, exec: Exec) {
        let t = &trace.backbone;
        let mut d = d_hidden.clone();
        for i in (0..3).rev() {
            d = self.layers[i]
                .backward(&t.layers[i], &d, true, exec)
                .expect("input gradient requested");
        }
        let mut d = self.pool.backward(&t.pool, &d);
        relu_backward_inplace(&mut d.data, &t.stem_act.data);
        let d = self.stem_bn.backward(&t.stem_bn, &d);
        self.stem.backward(&t.input, &d, false, exec);
    }

    /// Folds the batch statistics of a training forward into the running estimates.
    pub fn update_running(&mut self, trace: &ForwardTrace) {
        self.stem_bn.update_running(&trace.backbone.stem_bn);
        for (layer, t) in self.layers.iter_mut().zip(&trace.backbone.layers) {
            layer.update_running(t);
        }
        self.synth_stage.update_running(&trace.synth.stage);
        self.content_stage.update_running(&trace.content.stage);
    }

    pub fn params_grouped(&self) -> Vec<(ParamGroup, &Param)> {
        use ParamGroup::*;
        let mut v: Vec<(ParamGroup, &Param)> = vec![
            (Backbone, &self.stem.weight),
            (Backbone, &self.stem_bn.gamma),
            (Backbone, &self.stem_bn.beta),
        ];
        for layer in &self.layers {
            v.extend(layer.params().into_iter().map(|p| (Backbone, p)));
        }
        v.extend(self.synth_stage.params().into_iter().map(|p| (SynthStream, p)));
        v.extend([(SynthHead, &self.synth_head.weight), (SynthHead, &self.synth_head.bias)]);
        v.extend(self.content_stage.params().into_iter().map(|p| (ContentStream, p)));
        v.extend([
            (ContentHeads, &self.comp_head.weight),
            (ContentHeads, &self.comp_head.bias),
            (ContentHeads, &self.speed_head.weight),
            (ContentHeads, &self.speed_head.bias),
            (FinalHead, &self.final_head.weight),
            (FinalHead, &self.final_head.bias),
        ]);
        v
    }

    /// Same order as [`DualStreamModel::params_grouped`].
    pub fn params_grouped_mut(&mut self) -> Vec<(ParamGroup, &mut Param)> {
        use ParamGroup::*;
        let mut v: Vec<(ParamGroup, &mut Param)> = vec![
            (Backbone, &mut self.stem.weight),
            (Backbone, &mut self.stem_bn.gamma),
            (Backbone, &mut self.stem_bn.beta),
        ];
        for layer in &mut self.layers {
            v.extend(layer.params_mut().into_iter().map(|p| (Backbone, p)));
        }
        v.extend(self.synth_stage.params_mut().into_iter().map(|p| (SynthStream, p)));
        v.extend([(SynthHead, &mut self.synth_head.weight), (SynthHead, &mut self.synth_head.bias)]);
        v.extend(self.content_stage.params_mut().into_iter().map(|p| (ContentStream, p)));
        v.extend([
            (ContentHeads, &mut self.comp_head.weight),
            (ContentHeads, &mut self.comp_head.bias),
            (ContentHeads, &mut self.speed_head.weight),
            (ContentHeads, &mut self.speed_head.bias),
            (FinalHead, &mut self.final_head.weight),
            (FinalHead, &mut self.final_head.bias),
        ]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.params_grouped_mut().into_iter().map(|(_, p)| p).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        let mut v = vec![&self.stem_bn.running_mean, &self.stem_bn.running_var];
        for layer in &self.layers {
            v.extend(layer.buffers());
        }
        v.extend(self.synth_stage.buffers());
        v.extend(self.content_stage.buffers());
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        let mut v = vec![&mut self.stem_bn.running_mean, &mut self.stem_bn.running_var];
        for layer in &mut self.layers {
            v.extend(layer.buffers_mut());
        }
        v.extend(self.synth_stage.buffers_mut());
        v.extend(self.content_stage.buffers_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// L2 norm of the accumulated gradient per parameter group.
    pub fn group_grad_norms(&self) -> BTreeMap<ParamGroup, f64> {
        let mut sq: BTreeMap<ParamGroup, f64> = ParamGroup::ALL.iter().map(|g| (*g, 0.0)).collect();
        for (g, p) in self.params_grouped() {
            *sq.get_mut(&g).unwrap() += p.grad_sq_norm();
        }
        sq.into_iter().map(|(g, s)| (g, s.sqrt())).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params_grouped().iter().map(|(_, p)| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::random_map;

    fn tiny() -> DualStreamModel {
        DualStreamModel::new(ModelConfig::with_channels([4, 4, 8, 8], 3), 1).unwrap()
    }

    #[test]
    fn hidden_extent_halves_with_rounding_up() {
        assert_eq!(downsampled(257, 4), 17);
        assert_eq!(downsampled(257, 5), 9);
        let model = tiny();
        let x = random_map(2, 1, 257, 257, 3);
        let (fh, _) = model.backbone_forward(&x, Mode::Eval, Exec::Parallel).unwrap();
        assert_eq!(fh.dims(), [2, 8, 17, 17]);
    }

    #[test]
    fn output_shapes() {
        let model = tiny();
        let x = random_map(3, 1, 33, 33, 4);
        let (out, trace) = model.forward_full(&x, Mode::Train, Exec::Parallel).unwrap();
        assert!(trace.is_some());
        assert_eq!(out.f_s.len(), 3 * 8);
        assert_eq!(out.f_c.len(), 3 * 8);
        assert_eq!(out.logits_synth.len(), 3 * 3);
        assert_eq!(out.logits_comp.len(), 3 * 10);
        assert_eq!(out.logits_speed.len(), 3 * 16);
        assert_eq!(out.logit_final.len(), 3);
        assert_eq!(out.f_cls.len(), 3 * 16);
        assert_eq!(&out.f_cls[..8], &out.f_c[..8]);
        assert_eq!(&out.f_cls[8..16], &out.f_s[..8]);
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let model = tiny();
        let one = random_map(1, 1, 33, 33, 5);
        let mut data = one.data.clone();
        data.extend_from_slice(&one.data);
        let x = FeatureMap::from_vec(2, 1, 33, 33, data);
        let (out, _) = model.forward_full(&x, Mode::Eval, Exec::Parallel).unwrap();
        assert_eq!(out.logit_final[0], out.logit_final[1]);
        assert_eq!(out.f_cls[..16], out.f_cls[16..]);
    }

    #[test]
    fn zero_hidden_state_gives_constant_rows() {
        let model = tiny();
        let fh = FeatureMap::zeros(3, 8, 5, 5);
        let (f_s, logits, _) = model.synthesizer_stream(&fh, Mode::Eval, Exec::Sequential).unwrap();
        assert_eq!(f_s[..8], f_s[8..16]);
        assert_eq!(f_s[..8], f_s[16..]);
        assert_eq!(logits[..3], logits[3..6]);
    }

    #[test]
    fn streams_share_no_parameters() {
        let model = tiny();
        let names: Vec<_> = model.params_grouped().iter().map(|(_, p)| p.name.clone()).collect();
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        for (g, p) in model.params_grouped() {
            match g {
                ParamGroup::SynthStream => assert!(p.name.starts_with("synth_stream.")),
                ParamGroup::ContentStream => assert!(p.name.starts_with("content_stream.")),
                ParamGroup::Backbone => assert!(p.name.starts_with("backbone.")),
                _ => {}
            }
        }
    }

    #[test]
    fn rejects_bad_shapes_and_configs() {
        let model = tiny();
        assert!(model.backbone_forward(&FeatureMap::zeros(1, 2, 33, 33), Mode::Eval, Exec::Sequential).is_err());
        assert!(model.synthesizer_stream(&FeatureMap::zeros(1, 3, 5, 5), Mode::Eval, Exec::Sequential).is_err());
        let mut cfg = ModelConfig::compact(3);
        cfg.feature_dim = 64;
        assert!(DualStreamModel::new(cfg, 0).is_err());
        assert!(DualStreamModel::new(ModelConfig::compact(1), 0).is_err());
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let b: Vec<f32> = (10..14).map(|v| v as f32).collect();
        let c = concat_rows(&a, &b, 2);
        assert_eq!(c, vec![0., 1., 2., 10., 11., 3., 4., 5., 12., 13.]);
        assert_eq!(split_rows(&c, 2, 3), (a, b));
    }
}
