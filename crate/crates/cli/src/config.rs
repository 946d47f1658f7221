//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! Every section is optional; missing keys take their defaults and unknown
//! keys are rejected. Flags win over the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dualstream::augment::BlendConfig;
use dualstream::eval::Protocol;
use dualstream::losses::LossConfig;
use dualstream::manifest::{
    load_manifest, split_cross_dataset, split_cross_language, split_cross_method, split_inner, SplitSet,
};
use dualstream::model::{Init, ModelConfig};
use dualstream::train::{Ablation, Objective, TrainConfig};
use dualstream::transforms::{CodecBackend, Ffmpeg, NoCodecs, FFMPEG_ENV};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub protocol: Protocol,
    pub inner_ratios: [f64; 3],
    /// Synthesizer ids trained on under the cross-method protocol.
    pub train_synthesizers: Vec<String>,
    pub real_ratios: [f64; 3],
    pub fake_ratios: [f64; 2],
    /// Test manifest of the cross-dataset protocol.
    pub target_manifest: Option<PathBuf>,
    /// Train/validation ratios of the cross-dataset and cross-language protocols.
    pub source_ratios: [f64; 2],
    pub train_language: String,
    pub test_language: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            protocol: Protocol::Inner,
            inner_ratios: [0.6, 0.2, 0.2],
            train_synthesizers: vec!["MelGAN".into(), "PWG".into()],
            real_ratios: [0.6, 0.2, 0.2],
            fake_ratios: [0.8, 0.2],
            target_manifest: None,
            source_ratios: [0.8, 0.2],
            train_language: "en".into(),
            test_language: "zh".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub stage_channels: [usize; 4],
    pub init: Init,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            stage_channels: [64, 128, 256, 512],
            init: Init::Random,
        }
    }
}

impl ModelSection {
    pub fn build(&self, n_synth_classes: usize) -> ModelConfig {
        ModelConfig {
            init: self.init.clone(),
            ..ModelConfig::with_channels(self.stage_channels, n_synth_classes)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CodecChoice {
    /// ffmpeg when it can be found, otherwise identity only.
    Auto,
    Ffmpeg,
    None,
}

impl CodecChoice {
    pub fn backend(self) -> Result<Arc<dyn CodecBackend>> {
        Ok(match self {
            CodecChoice::None => Arc::new(NoCodecs),
            CodecChoice::Auto => match Ffmpeg::detect() {
                Some(f) => Arc::new(f),
                None => {
                    log::warn!("ffmpeg not found (set {FFMPEG_ENV}); compression labels limited to identity");
                    Arc::new(NoCodecs)
                }
            },
            CodecChoice::Ffmpeg => match Ffmpeg::detect() {
                Some(f) => Arc::new(f),
                None => bail!("codec backend ffmpeg requested but no usable binary was found (set {FFMPEG_ENV})"),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub codec: CodecChoice,
    pub data: DataConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub blend: BlendConfig,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("runs/default"),
            codec: CodecChoice::Auto,
            data: DataConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            blend: BlendConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

/// Names accepted by `--ablate`.
pub const ABLATIONS: [&str; 8] = [
    "no-blend",
    "no-shuffle",
    "no-cls-s",
    "no-con-s",
    "no-cls-c",
    "no-adversarial",
    "no-con-cls",
    "no-content",
];

impl RunConfig {
    /// Parses a config file; relative paths inside it, `out_dir` included, resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out_dir);
        if let Some(m) = cfg.data.manifest.as_mut() {
            fix(m);
        }
        if let Some(m) = cfg.data.target_manifest.as_mut() {
            fix(m);
        }
        if let Init::PretrainedBackbone { checkpoint } = &mut cfg.model.init {
            fix(checkpoint);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn objective(&self) -> Objective {
        Objective {
            loss: self.loss.clone(),
            blend: self.blend.clone(),
            ablation: self.ablation.clone(),
        }
    }

    pub fn apply_ablation(&mut self, name: &str) -> Result<()> {
        let a = &mut self.ablation;
        match name {
            "no-blend" => self.blend.enabled = false,
            "no-shuffle" => a.shuffle = false,
            "no-cls-s" => a.cls_s = false,
            "no-con-s" => a.con_s = false,
            "no-cls-c" => a.cls_c = false,
            "no-adversarial" => a.adversarial = false,
            "no-con-cls" => a.con_cls = false,
            "no-content" => self.loss.betas[2] = 0.0,
            other => bail!("unknown ablation {other:?}; expected one of {}", ABLATIONS.join(", ")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.objective().validate()?;
        self.model.build(2).validate()?;
        Ok(())
    }

    /// Loads the manifests and splits them per the configured protocol.
    pub fn splits(&self) -> Result<SplitSet> {
        let d = &self.data;
        let path = d.manifest.as_ref().context("no manifest configured (data.manifest)")?;
        let entries = load_manifest(path)?;
        let seed = self.train.seed;
        Ok(match d.protocol {
            Protocol::Inner => split_inner(&entries, d.inner_ratios, seed)?,
            Protocol::CrossMethod => {
                let synths: BTreeSet<String> = d.train_synthesizers.iter().cloned().collect();
                split_cross_method(&entries, &synths, d.real_ratios, d.fake_ratios, seed)?
            }
            Protocol::CrossDataset => {
                let target = d
                    .target_manifest
                    .as_ref()
                    .context("cross_dataset needs data.target_manifest")?;
                split_cross_dataset(&entries, &load_manifest(target)?, d.source_ratios, seed)?
            }
            Protocol::CrossLanguage => {
                split_cross_language(&entries, &d.train_language, &d.test_language, d.source_ratios, seed)?
            }
        })
    }
}
