//! Loss terms and their analytic gradients.
//!
//! Every function here takes raw network outputs (`f32`, row-major over the
//! batch), evaluates in `f64`, and returns the batch-mean loss together with
//! the gradient of that mean with respect to its input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifest::Label;
use crate::model::{sigmoid, DualStreamModel, ForwardTrace, ModelOutputs};
use crate::nn::{FeatureMap, Mode, ParamGroup};

/// Lower clamp for every probability passed to a logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Margin α of the contrastive loss.
    pub margin: f64,
    /// (β0, β1, β2, β3) weighting the augmented, synthesizer, content and fused-contrastive terms.
    pub betas: [f64; 4],
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    /// Weight of the synthesizer contrastive term inside the β1 group.
    pub synth_contrastive_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: 0.4,
            betas: [1.0, 0.5, 0.5, 0.5],
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            synth_contrastive_weight: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidInput(format!("margin {} outside [0, 1)", self.margin)));
        }
        let weights = self.betas.iter().chain([&self.synth_contrastive_weight, &self.focal_gamma]);
        if weights.into_iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("loss weights must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) {
            return Err(Error::InvalidInput(format!("focal alpha {} outside [0, 1]", self.focal_alpha)));
        }
        Ok(())
    }
}

/// The seven unweighted loss terms of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cls: f64,
    pub cls_aug: f64,
    pub cls_s: f64,
    pub con_s: f64,
    pub cls_c: f64,
    pub adv: f64,
    pub con_cls: f64,
}

/// Loss terms plus their weighted total, in training-log field order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub cls_aug: f64,
    pub cls_s: f64,
    pub con_s: f64,
    pub cls_c: f64,
    pub adv: f64,
    pub con_cls: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn terms(&self) -> LossTerms {
        LossTerms {
            cls: self.cls,
            cls_aug: self.cls_aug,
            cls_s: self.cls_s,
            con_s: self.con_s,
            cls_c: self.cls_c,
            adv: self.adv,
            con_cls: self.con_cls,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.cls, self.cls_aug, self.cls_s, self.con_s, self.cls_c, self.adv, self.con_cls, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `cls + β0·cls_aug + β1·(cls_s + w·con_s) + β2·(cls_c + adv) + β3·con_cls`.
pub fn total_loss(terms: &LossTerms, config: &LossConfig) -> LossBreakdown {
    let [b0, b1, b2, b3] = config.betas;
    let total = terms.cls
        + b0 * terms.cls_aug
        + b1 * (terms.cls_s + config.synth_contrastive_weight * terms.con_s)
        + b2 * (terms.cls_c + terms.adv)
        + b3 * terms.con_cls;
    LossBreakdown {
        cls: terms.cls,
        cls_aug: terms.cls_aug,
        cls_s: terms.cls_s,
        con_s: terms.con_s,
        cls_c: terms.cls_c,
        adv: terms.adv,
        con_cls: terms.con_cls,
        total,
    }
}

fn check_rows(values: &[f32], width: usize, what: &str) -> Result<usize> {
    if width == 0 || values.is_empty() || values.len() % width != 0 {
        return Err(Error::Shape(format!(
            "{what}: {} values do not form rows of width {width}",
            values.len()
        )));
    }
    Ok(values.len() / width)
}

/// Margin contrastive loss over cosine similarities, self-pairs included.
pub fn contrastive_loss(z: &[f32], dim: usize, labels: &[usize], margin: f64) -> Result<f64> {
    contrastive_loss_grad(z, dim, labels, margin).map(|(l, _)| l)
}

pub fn contrastive_loss_grad(z: &[f32], dim: usize, labels: &[usize], margin: f64) -> Result<(f64, Vec<f32>)> {
    let b = check_rows(z, dim, "contrastive loss")?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} feature vectors", labels.len())));
    }
    let mut norms = Vec::with_capacity(b);
    let mut unit = vec![0.0f64; b * dim];
    for (i, row) in z.chunks_exact(dim).enumerate() {
        let n = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput(format!("feature vector {i} has norm {n}")));
        }
        norms.push(n);
        for (u, &v) in unit[i * dim..(i + 1) * dim].iter_mut().zip(row) {
            *u = v as f64 / n;
        }
    }
    let scale = 1.0 / (b * b) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0f64; b * dim];
    for i in 0..b {
        let ui = &unit[i * dim..(i + 1) * dim];
        for j in 0..b {
            let uj = &unit[j * dim..(j + 1) * dim];
            let s: f64 = ui.iter().zip(uj).map(|(a, c)| a * c).sum();
            let coef = if labels[i] == labels[j] {
                loss += 1.0 - s;
                -1.0
            } else if s > margin {
                loss += s - margin;
                1.0
            } else {
                0.0
            };
            // The self-similarity is identically one, so it carries no gradient.
            if i == j || coef == 0.0 {
                continue;
            }
            // Each unordered pair appears twice with the same coefficient.
            let c = 2.0 * coef * scale / norms[i];
            for ((g, &a), &bj) in grad[i * dim..(i + 1) * dim].iter_mut().zip(ui).zip(uj) {
                *g += c * (bj - s * a);
            }
        }
    }
    Ok((loss * scale, grad.into_iter().map(|g| g as f32).collect()))
}

fn log_softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v as f64 - lse).collect()
}

fn check_finite(values: &[f32], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite logits")));
    }
    Ok(())
}

/// Mean softmax cross-entropy against integer targets.
pub fn cross_entropy(logits: &[f32], classes: usize, targets: &[usize]) -> Result<(f64, Vec<f32>)> {
    let b = check_rows(logits, classes, "cross-entropy")?;
    check_finite(logits, "cross-entropy")?;
    if targets.len() != b {
        return Err(Error::Shape(format!("{} targets for {b} rows", targets.len())));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &t) in logits.chunks_exact(classes).zip(targets) {
        if t >= classes {
            return Err(Error::InvalidInput(format!("label {t} outside 0..{classes}")));
        }
        let lp = log_softmax(row);
        loss -= lp[t].max(PROB_CLAMP.ln());
        for (k, l) in lp.iter().enumerate() {
            let onehot = if k == t { 1.0 } else { 0.0 };
            grad.push(((l.exp() - onehot) / b as f64) as f32);
        }
    }
    Ok((loss / b as f64, grad))
}

/// Cross-entropy between softmax(logits) and the uniform distribution.
pub fn adversarial_uniform_loss(logits: &[f32], classes: usize) -> Result<f64> {
    adversarial_uniform_grad(logits, classes).map(|(l, _)| l)
}

pub fn adversarial_uniform_grad(logits: &[f32], classes: usize) -> Result<(f64, Vec<f32>)> {
    if classes < 2 {
        return Err(Error::InvalidInput("adversarial loss needs at least two classes".into()));
    }
    let b = check_rows(logits, classes, "adversarial loss")?;
    check_finite(logits, "adversarial loss")?;
    let k = classes as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let lp = log_softmax(row);
        loss -= lp.iter().sum::<f64>() / k;
        grad.extend(lp.iter().map(|l| ((l.exp() - 1.0 / k) / b as f64) as f32));
    }
    Ok((loss / b as f64, grad))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn focal_term(p: f64, y: Label, alpha: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    if y.is_real() {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Mean focal loss on probabilities of the real class, weighted for both classes.
pub fn binary_focal_loss(p: &[f64], y: &[Label], alpha: f64, gamma: f64) -> f64 {
    assert_eq!(p.len(), y.len());
    p.iter().zip(y).map(|(&p, &y)| focal_term(p, y, alpha, gamma)).sum::<f64>() / p.len().max(1) as f64
}

/// [`binary_focal_loss`] on logits, with the gradient per logit.
pub fn focal_loss_logits(logits: &[f32], y: &[Label], alpha: f64, gamma: f64) -> Result<(f64, Vec<f32>)> {
    check_lengths(logits, y)?;
    let b = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &label) in logits.iter().zip(y) {
        let raw = sigmoid(z as f64);
        let p = clamp_prob(raw);
        loss += focal_term(p, label, alpha, gamma);
        let g = if p != raw {
            0.0
        } else if label.is_real() {
            alpha * (gamma * p * (1.0 - p).powf(gamma) * p.ln() - (1.0 - p).powf(gamma + 1.0))
        } else {
            -(1.0 - alpha) * (gamma * p.powf(gamma) * (1.0 - p) * (1.0 - p).ln() - p.powf(gamma + 1.0))
        };
        grad.push((g / b) as f32);
    }
    Ok((loss / b, grad))
}

/// Mean binary cross-entropy on probabilities of the real class.
pub fn binary_cross_entropy(p: &[f64], y: &[Label]) -> f64 {
    assert_eq!(p.len(), y.len());
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y.is_real() {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len().max(1) as f64
}

/// [`binary_cross_entropy`] on logits, with the gradient per logit.
pub fn bce_logits(logits: &[f32], y: &[Label]) -> Result<(f64, Vec<f32>)> {
    check_lengths(logits, y)?;
    let b = logits.len() as f64;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z as f64)).collect();
    let loss = binary_cross_entropy(&probs, y);
    let grad = probs
        .iter()
        .zip(y)
        .map(|(&p, &label)| {
            if clamp_prob(p) != p {
                0.0
            } else {
                ((p - label.target() as f64) / b) as f32
            }
        })
        .collect();
    Ok((loss, grad))
}

fn check_lengths(logits: &[f32], y: &[Label]) -> Result<()> {
    if logits.is_empty() || logits.len() != y.len() {
        return Err(Error::Shape(format!("{} logits for {} labels", logits.len(), y.len())));
    }
    check_finite(logits, "binary loss")
}

/// Every label a training sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBundle {
    pub label: Label,
    /// Index into the synthesizer vocabulary; 0 is real speech.
    pub synth: usize,
    pub compression: usize,
    pub speed: usize,
}

/// Synthesizer cross-entropy and the summed compression + speed cross-entropies.
pub fn stream_classification_losses(outputs: &ModelOutputs, labels: &[LabelBundle]) -> Result<(f64, f64)> {
    let b = outputs.batch;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} label bundles for batch {b}", labels.len())));
    }
    let col = |f: fn(&LabelBundle) -> usize| labels.iter().map(f).collect::<Vec<_>>();
    let (cls_s, _) = cross_entropy(&outputs.logits_synth, outputs.logits_synth.len() / b, &col(|l| l.synth))?;
    let (comp, _) = cross_entropy(&outputs.logits_comp, outputs.logits_comp.len() / b, &col(|l| l.compression))?;
    let (speed, _) = cross_entropy(&outputs.logits_speed, outputs.logits_speed.len() / b, &col(|l| l.speed))?;
    Ok((cls_s, comp + speed))
}

/// Adds `scale ×` the adversarial gradient to the content stage only.
///
/// The synthesizer head is applied to `f_c` but only its input gradient is
/// used, and the content stage is differentiated without propagating to its
/// input, so no other parameter group sees this term.
pub fn adversarial_backward(
    model: &mut DualStreamModel,
    trace: &ForwardTrace,
    f_c: &[f32],
    batch: usize,
    scale: f32,
    exec: Exec,
) -> Result<f64> {
    let classes = model.config.n_synth_classes;
    let logits = model.synth_head_on(f_c, batch);
    let (loss, mut d_logits) = adversarial_uniform_grad(&logits, classes)?;
    d_logits.iter_mut().for_each(|g| *g *= scale);
    let d_fc = model.synth_head.input_grad(&d_logits, batch);
    model.backward_content_stream(trace, &d_fc, false, exec);
    Ok(loss)
}

/// Gradient norms per parameter group produced by the adversarial term alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub loss: f64,
    pub norms: BTreeMap<ParamGroup, f64>,
}

/// Clears all gradients, then back-propagates only the adversarial term of `x`.
pub fn gradient_scope_adversarial(model: &mut DualStreamModel, x: &FeatureMap, exec: Exec) -> Result<GradientReport> {
    model.zero_grad();
    let (outputs, trace) = model.forward_full(x, Mode::Train, exec)?;
    let trace = trace.expect("training forward keeps a trace");
    let loss = adversarial_backward(model, &trace, &outputs.f_c, outputs.batch, 1.0, exec)?;
    Ok(GradientReport {
        loss,
        norms: model.group_grad_norms(),
    })
}
