use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dualstream::audio::{cache, fix_length, load_and_normalize, CropMode, Stft, StftConfig, CLIP_SAMPLES};
use dualstream::eval::plot::{Chart, Series};
use dualstream::eval::{
    read_score_dump, render_table, report_from_records, roc_curve, run_protocol, score_records, write_report_json,
    write_score_dump, Protocol, ProtocolReport, ScoreSet,
};
use dualstream::manifest::{load_manifest, ManifestEntry};
use dualstream::nn::FeatureMap;
use dualstream::synthetic::{write_corpus, SyntheticConfig};
use dualstream::train::data::load_clips;
use dualstream::train::{
    fit, load_checkpoint, oversample_seed, BatchBuilder, Dataset, Trainer, LAST_CHECKPOINT,
};
use dualstream::{DualStreamModel, Exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const SNAPSHOT: &str = "config.snapshot.toml";
pub const SPLITS: &str = "splits.jsonl";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(config: &SyntheticConfig, out_dir: &Path) -> Result<PathBuf> {
    create_dir(out_dir)?;
    let manifest = write_corpus(config, out_dir)?;
    log::info!("wrote synthetic corpus to {}", manifest.display());
    Ok(manifest)
}

fn cache_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(&entry.synthesizer_id).join(format!("{}.spec", entry.file_id))
}

/// Writes the split dump and middle-cropped spectrograms of the validation and test clips.
pub fn preprocess(cfg: &RunConfig, exec: Exec) -> Result<usize> {
    let splits = cfg.splits()?;
    create_dir(&cfg.out_dir)?;
    splits.write_dump(cfg.out_dir.join(SPLITS))?;
    let cache_dir = cfg.out_dir.join("cache");
    let entries: Vec<&ManifestEntry> = splits.validation.iter().chain(&splits.test).collect();
    let stft = Stft::new(Default::default());
    let written = exec.map(&entries, |e| -> Result<()> {
        let clip = load_and_normalize(&e.path)?;
        let fixed = fix_length(&clip, CropMode::EvalMiddle, &mut ChaCha8Rng::seed_from_u64(0))?;
        let path = cache_path(&cache_dir, e);
        fs::create_dir_all(path.parent().unwrap())?;
        cache::write(&path, &stft.log_magnitude(&fixed.samples)?)?;
        Ok(())
    });
    for r in written {
        r?;
    }
    log::info!("cached {} spectrograms under {}", entries.len(), cache_dir.display());
    Ok(entries.len())
}

/// Trains per `cfg`, resuming from `last.ckpt` in the output directory when asked.
pub fn train(cfg: &RunConfig, resume: bool, exec: Exec) -> Result<()> {
    let out = &cfg.out_dir;
    create_dir(out)?;
    fs::write(out.join(SNAPSHOT), cfg.to_toml()?).context("writing config snapshot")?;
    let splits = cfg.splits()?;
    splits.write_dump(out.join(SPLITS))?;
    let data = Dataset::load(&splits, oversample_seed(cfg.train.seed), exec)?;
    log::info!(
        "{} training clips (after oversampling), {} validation clips, vocabulary {:?}",
        data.train.len(),
        data.validation.len(),
        data.synthesizer_vocab
    );
    let last = out.join(LAST_CHECKPOINT);
    let mut trainer = if resume && last.exists() {
        log::info!("resuming from {}", last.display());
        let t = Trainer::from_checkpoint(load_checkpoint(&last)?, exec)?;
        if t.config != cfg.train || t.objective != cfg.objective() {
            bail!("checkpoint {} was written with a different configuration", last.display());
        }
        t
    } else {
        let model = cfg.model.build(splits.synthesizer_vocab.len());
        Trainer::new(model, cfg.train.clone(), cfg.objective(), splits.synthesizer_vocab.clone(), exec)?
    };
    let log_path = out.join(TRAIN_LOG);
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume)
        .truncate(!resume)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut log = BufWriter::new(file);
    let builder = BatchBuilder::new(cfg.codec.backend()?);
    let outcome = fit(&mut trainer, &data, &builder, &mut log, Some(out))?;
    log.flush()?;
    log::info!(
        "best validation AUC {:.4} at epoch {}{}",
        outcome.best_auc,
        outcome.best_epoch,
        if outcome.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

pub struct EvalRequest<'a> {
    pub checkpoint: &'a Path,
    /// Scores every clip of this manifest; otherwise the configured test split.
    pub manifest: Option<&'a Path>,
    pub config: &'a RunConfig,
    pub protocol: Protocol,
    pub name: String,
    pub cache_dir: Option<&'a Path>,
}

fn score_cached(model: &DualStreamModel, entries: &[ManifestEntry], dir: &Path, batch: usize, exec: Exec) -> Result<Vec<f64>> {
    let stft = StftConfig::default();
    let (f, t) = (stft.freq_bins(), stft.frames(CLIP_SAMPLES));
    let mut scores = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(batch.max(1)) {
        let mut data = Vec::new();
        for e in chunk {
            let path = cache_path(dir, e);
            let spec = cache::read(&path).with_context(|| format!("reading cached {}", path.display()))?;
            if spec.shape() != (f, t) {
                bail!("{} holds a {:?} spectrogram, expected {:?}", path.display(), spec.shape(), (f, t));
            }
            data.extend(spec.to_f32());
        }
        let x = FeatureMap::from_vec(chunk.len(), 1, f, t, data);
        scores.extend(model.score(&x, exec)?);
    }
    Ok(scores)
}

pub fn eval(req: &EvalRequest, exec: Exec) -> Result<ProtocolReport> {
    let ckpt = load_checkpoint(req.checkpoint)?;
    let model = ckpt.model;
    let expected = &req.config.model.stage_channels;
    if &model.config.stage_channels != expected {
        bail!(
            "checkpoint has stage widths {:?} but the config asks for {:?}",
            model.config.stage_channels,
            expected
        );
    }
    let entries = match req.manifest {
        Some(m) => load_manifest(m)?,
        None => req.config.splits()?.test,
    };
    if entries.is_empty() {
        bail!("nothing to evaluate");
    }
    let batch = req.config.train.eval_batch_size;
    let (report, records) = match req.cache_dir {
        Some(dir) => {
            let scores = score_cached(&model, &entries, dir, batch, exec)?;
            let records = score_records(&entries, &scores, req.protocol)?;
            (report_from_records(&req.name, req.protocol.name(), &records)?, records)
        }
        None => {
            let clips = load_clips(&entries, exec)?;
            let refs: Vec<_> = clips.iter().map(|c| c.as_ref()).collect();
            run_protocol(&model, &entries, &refs, req.protocol, &req.name, batch, exec)?
        }
    };
    let out = &req.config.out_dir;
    create_dir(out)?;
    write_score_dump(out.join(SCORES), &records)?;
    write_report_json(out.join(REPORT_JSON), &report)?;
    let table = render_table(std::slice::from_ref(&report))?;
    fs::write(out.join(REPORT_TABLE), &table)?;
    print!("{table}");
    Ok(report)
}

fn loss_chart(log: &Path) -> Result<Chart> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let mut series: Vec<Series> = ["total", "cls", "cls_aug", "cls_s", "con_s", "cls_c", "adv", "con_cls"]
        .iter()
        .map(|n| Series {
            name: n.to_string(),
            points: Vec::new(),
        })
        .collect();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("bad log line {line:?}"))?;
        if v["kind"] != "step" {
            continue;
        }
        let x = v["global_step"].as_f64().unwrap_or(0.0);
        for s in &mut series {
            if let Some(y) = v[s.name.as_str()].as_f64() {
                s.points.push((x, y));
            }
        }
    }
    series.retain(|s| s.points.iter().any(|p| p.1 != 0.0));
    Ok(Chart {
        title: "training losses".into(),
        x_label: "step".into(),
        y_label: "loss".into(),
        x_range: None,
        y_range: None,
        series,
        diagonal: false,
    })
}

pub struct ReportRequest<'a> {
    pub dumps: &'a [PathBuf],
    pub names: &'a [String],
    pub protocol: Protocol,
    pub out_dir: &'a Path,
    pub plots: bool,
    pub loss_log: Option<&'a Path>,
}

/// Merges score dumps into one comparison table, with optional SVG plots.
pub fn report(req: &ReportRequest) -> Result<String> {
    if req.dumps.is_empty() {
        bail!("report needs at least one score dump");
    }
    if !req.names.is_empty() && req.names.len() != req.dumps.len() {
        bail!("{} names given for {} dumps", req.names.len(), req.dumps.len());
    }
    create_dir(req.out_dir)?;
    let mut reports = Vec::new();
    let mut roc = Vec::new();
    for (k, dump) in req.dumps.iter().enumerate() {
        let name = match req.names.get(k) {
            Some(n) => n.clone(),
            None => dump.file_stem().map_or(format!("run{k}"), |s| s.to_string_lossy().into_owned()),
        };
        let records = read_score_dump(dump)?;
        let report = report_from_records(&name, req.protocol.name(), &records)?;
        for g in &report.groups {
            let members: Vec<_> = records.iter().filter(|r| r.group == g.name).collect();
            let set = ScoreSet::new(members.iter().map(|r| r.score).collect(), members.iter().map(|r| r.label).collect())?;
            roc.push(Series {
                name: format!("{name}/{}", g.name),
                points: roc_curve(&set)?,
            });
        }
        reports.push(report);
    }
    let table = render_table(&reports)?;
    fs::write(req.out_dir.join("comparison.txt"), &table)?;
    let mut f = File::create(req.out_dir.join("comparison.json"))?;
    serde_json::to_writer_pretty(&mut f, &reports)?;
    writeln!(f)?;
    if req.plots {
        fs::write(req.out_dir.join("roc.svg"), Chart::roc("ROC", roc).to_svg())?;
    }
    if let Some(log) = req.loss_log {
        fs::write(req.out_dir.join("loss.svg"), loss_chart(log)?.to_svg())?;
    }
    Ok(table)
}
