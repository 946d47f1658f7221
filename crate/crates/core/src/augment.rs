//! Feature-space augmentation: statistic blending within a class and
//! cross-sample recombination of content and synthesizer features.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendConfig {
    /// Upper bound η of the noise magnitudes r1, r2 ~ U(0, η).
    pub noise_level: f64,
    /// Range of the blend ratio r.
    pub ratio_range: [f64; 2],
    pub enabled: bool,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            noise_level: 10.0,
            ratio_range: [0.5, 1.0],
            enabled: true,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.ratio_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidInput(format!("blend ratio range [{lo}, {hi}] not inside [0, 1]")));
        }
        if !(self.noise_level.is_finite() && self.noise_level >= 0.0) {
            return Err(Error::InvalidInput(format!("noise level {} must be nonnegative", self.noise_level)));
        }
        Ok(())
    }
}

/// Population mean and standard deviation of one vector.
pub fn mean_std(v: &[f32]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Re-standardizes `z_i` to the statistics `r·(μ_i, σ_i) + (1 − r)·(μ_j, σ_j)`.
pub fn blend_pair(z_i: &[f32], z_j: &[f32], r: f64) -> Result<Vec<f32>> {
    let (mi, si) = mean_std(z_i);
    let (mj, sj) = mean_std(z_j);
    if si == 0.0 {
        return Err(Error::InvalidInput("cannot blend a zero-variance feature vector".into()));
    }
    let (m, s) = (r * mi + (1.0 - r) * mj, r * si + (1.0 - r) * sj);
    Ok(z_i.iter().map(|&x| (s * (x as f64 - mi) / si + m) as f32).collect())
}

/// Random quantities drawn for one blended vector, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendRecord {
    pub partner: usize,
    pub ratio: f64,
    pub gain: f64,
    pub noise: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blended {
    pub values: Vec<f32>,
    /// Empty when blending is disabled.
    pub records: Vec<BlendRecord>,
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Blends every row of `z` with a partner drawn from its own class, then
/// applies a random gain and additive noise.
pub fn blend_features<R: Rng + ?Sized>(
    z: &[f32],
    dim: usize,
    labels: &[Label],
    config: &BlendConfig,
    rng: &mut R,
) -> Result<Blended> {
    config.validate()?;
    if dim == 0 || z.len() != labels.len() * dim {
        return Err(Error::Shape(format!("{} values for {} rows of width {dim}", z.len(), labels.len())));
    }
    if !config.enabled {
        return Ok(Blended {
            values: z.to_vec(),
            records: Vec::new(),
        });
    }
    let stats: Vec<(f64, f64)> = z.chunks_exact(dim).map(mean_std).collect();
    if let Some(i) = stats.iter().position(|&(_, s)| s == 0.0) {
        return Err(Error::InvalidInput(format!("feature vector {i} has zero standard deviation")));
    }
    let groups: [Vec<usize>; 2] = [Label::Fake, Label::Real].map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect());
    let beta = Beta::new(2.0, 5.0).expect("valid beta parameters");
    let eta = config.noise_level;
    let [lo, hi] = config.ratio_range;
    let mut values = Vec::with_capacity(z.len());
    let mut records = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let group = &groups[label.is_real() as usize];
        let partner = group[rng.gen_range(0..group.len())];
        let ratio = uniform_in(rng, lo, hi);
        let r1 = uniform_in(rng, 0.0, eta);
        let gain = r1 * beta.sample(rng) * uniform_in(rng, -1.0, 1.0) + 1.0;
        let r2 = uniform_in(rng, 0.0, eta);
        let scale = r2 * beta.sample(rng);
        let noise: Vec<f32> = (0..dim)
            .map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect();
        let (mi, si) = stats[i];
        let (mj, sj) = stats[partner];
        let (m, s) = (ratio * mi + (1.0 - ratio) * mj, ratio * si + (1.0 - ratio) * sj);
        for (&x, &e) in z[i * dim..(i + 1) * dim].iter().zip(&noise) {
            let a = s * (x as f64 - mi) / si + m;
            values.push((a * gain + e as f64) as f32);
        }
        records.push(BlendRecord {
            partner,
            ratio,
            gain,
            noise,
        });
    }
    Ok(Blended { values, records })
}

/// Gradient of a blended batch with respect to the original features.
pub fn blend_backward(z: &[f32], dim: usize, records: &[BlendRecord], d_out: &[f32]) -> Vec<f32> {
    if records.is_empty() {
        return d_out.to_vec();
    }
    let d = dim as f64;
    let stats: Vec<(f64, f64)> = z.chunks_exact(dim).map(mean_std).collect();
    let norm = |row: usize| -> Vec<f64> {
        let (m, s) = stats[row];
        z[row * dim..(row + 1) * dim].iter().map(|&x| (x as f64 - m) / s).collect()
    };
    let mut dz = vec![0.0f64; z.len()];
    for (i, rec) in records.iter().enumerate() {
        let j = rec.partner;
        let (_, si) = stats[i];
        let (_, sj) = stats[j];
        let s = rec.ratio * si + (1.0 - rec.ratio) * sj;
        let zi = norm(i);
        let g: Vec<f64> = d_out[i * dim..(i + 1) * dim].iter().map(|&v| v as f64 * rec.gain).collect();
        let sum_g: f64 = g.iter().sum();
        let sum_gz: f64 = g.iter().zip(&zi).map(|(a, b)| a * b).sum();
        for k in 0..dim {
            dz[i * dim + k] += (s / si) * (g[k] - sum_g / d - zi[k] * sum_gz / d)
                + rec.ratio * (sum_g + sum_gz * zi[k]) / d;
        }
        let zj = norm(j);
        for k in 0..dim {
            dz[j * dim + k] += (1.0 - rec.ratio) * (sum_g + sum_gz * zj[k]) / d;
        }
    }
    dz.into_iter().map(|v| v as f32).collect()
}

/// Label of a recombined sample: real only when both sources are real.
pub fn combined_label(synth_source: Label, content_source: Label) -> Label {
    if synth_source.is_real() && content_source.is_real() {
        Label::Real
    } else {
        Label::Fake
    }
}

/// Content features taken from a permutation of the batch, synthesizer features in place.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffledBatch {
    /// `(content index j, synthesizer index i)` per output row.
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<Label>,
    /// Row k is `f_c[j] ‖ f_s[i]`.
    pub fused: Vec<f32>,
}

/// Relabels a batch whose content rows come from `perm`.
pub fn shuffle_labels(labels: &[Label], perm: &[usize]) -> Vec<Label> {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| combined_label(labels[i], labels[j]))
        .collect()
}

pub fn shuffle_combine<R: Rng + ?Sized>(
    f_s: &[f32],
    f_c: &[f32],
    dim: usize,
    labels: &[Label],
    rng: &mut R,
) -> Result<ShuffledBatch> {
    let b = labels.len();
    if b < 2 {
        return Err(Error::InvalidInput(format!("feature shuffle needs a batch of at least 2, got {b}")));
    }
    if f_s.len() != b * dim || f_c.len() != b * dim {
        return Err(Error::Shape("feature batches do not match the label count".into()));
    }
    let mut perm: Vec<usize> = (0..b).collect();
    perm.shuffle(rng);
    let mut fused = Vec::with_capacity(2 * b * dim);
    for (i, &j) in perm.iter().enumerate() {
        fused.extend_from_slice(&f_c[j * dim..(j + 1) * dim]);
        fused.extend_from_slice(&f_s[i * dim..(i + 1) * dim]);
    }
    Ok(ShuffledBatch {
        pairs: perm.iter().enumerate().map(|(i, &j)| (j, i)).collect(),
        labels: shuffle_labels(labels, &perm),
        fused,
    })
}

/// Routes a gradient on the fused rows back to `(d f_s, d f_c)`.
pub fn shuffle_backward(d_fused: &[f32], pairs: &[(usize, usize)], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let b = pairs.len();
    let mut d_s = vec![0.0f32; b * dim];
    let mut d_c = vec![0.0f32; b * dim];
    for (k, &(j, i)) in pairs.iter().enumerate() {
        let row = &d_fused[k * 2 * dim..(k + 1) * 2 * dim];
        for (a, g) in d_c[j * dim..(j + 1) * dim].iter_mut().zip(&row[..dim]) {
            *a += g;
        }
        for (a, g) in d_s[i * dim..(i + 1) * dim].iter_mut().zip(&row[dim..]) {
            *a += g;
        }
    }
    (d_s, d_c)
}
