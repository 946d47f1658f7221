//! Metrics, evaluation protocols, score dumps and report rendering.

pub mod metrics;
pub mod plot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{fix_length, AudioClip, CropMode, Stft};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifest::{Label, ManifestEntry};
use crate::model::DualStreamModel;
use crate::nn::FeatureMap;

pub use metrics::{compute_auc, compute_eer, roc_curve, ScoreSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Inner,
    CrossMethod,
    CrossDataset,
    CrossLanguage,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Inner,
        Protocol::CrossMethod,
        Protocol::CrossDataset,
        Protocol::CrossLanguage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Inner => "inner",
            Protocol::CrossMethod => "cross_method",
            Protocol::CrossDataset => "cross_dataset",
            Protocol::CrossLanguage => "cross_language",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown protocol {s:?}; expected one of inner, cross_method, cross_dataset, cross_language")))
    }
}

/// Group used by the inner protocol.
pub const ALL_GROUP: &str = "all";

/// Test-set groups for a protocol, each a list of entry indices, sorted by name.
///
/// Per-synthesizer protocols pair each synthesizer's fakes with every real
/// clip; the language protocol groups clips by their language tag.
pub fn group_entries(entries: &[ManifestEntry], protocol: Protocol) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    match protocol {
        Protocol::Inner => {
            groups.insert(ALL_GROUP.to_string(), (0..entries.len()).collect());
        }
        Protocol::CrossMethod | Protocol::CrossDataset => {
            let reals: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].label.is_real()).collect();
            let synths: BTreeSet<&str> = entries
                .iter()
                .filter(|e| !e.label.is_real())
                .map(|e| e.synthesizer_id.as_str())
                .collect();
            for synth in synths {
                let mut idx = reals.clone();
                idx.extend((0..entries.len()).filter(|&i| entries[i].synthesizer_id == synth));
                idx.sort_unstable();
                groups.insert(synth.to_string(), idx);
            }
        }
        Protocol::CrossLanguage => {
            for (i, e) in entries.iter().enumerate() {
                groups.entry(e.language.clone()).or_default().push(i);
            }
        }
    }
    groups
}

/// One line of a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub file_id: String,
    pub group: String,
    pub score: f64,
    pub label: Label,
}

/// Expands per-clip scores into per-group dump records.
pub fn score_records(entries: &[ManifestEntry], scores: &[f64], protocol: Protocol) -> Result<Vec<ScoreRecord>> {
    if entries.len() != scores.len() {
        return Err(Error::Shape(format!("{} scores for {} clips", scores.len(), entries.len())));
    }
    let mut out = Vec::new();
    for (group, idx) in group_entries(entries, protocol) {
        for i in idx {
            out.push(ScoreRecord {
                file_id: entries[i].file_id.clone(),
                group: group.clone(),
                score: scores[i],
                label: entries[i].label,
            });
        }
    }
    Ok(out)
}

pub fn write_score_dump(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_score_dump(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub name: String,
    pub auc: f64,
    pub eer: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Row label in rendered tables.
    pub name: String,
    pub protocol: String,
    pub groups: Vec<GroupMetrics>,
    pub average_auc: f64,
    pub average_eer: f64,
}

/// Metrics per group (in name order) and their arithmetic means.
pub fn report_from_records(name: &str, protocol: &str, records: &[ScoreRecord]) -> Result<ProtocolReport> {
    let mut by_group: BTreeMap<&str, (Vec<f64>, Vec<Label>)> = BTreeMap::new();
    for r in records {
        let g = by_group.entry(r.group.as_str()).or_default();
        g.0.push(r.score);
        g.1.push(r.label);
    }
    if by_group.is_empty() {
        return Err(Error::InvalidInput("no scores to report".into()));
    }
    let mut groups = Vec::with_capacity(by_group.len());
    for (group, (scores, labels)) in by_group {
        let set = ScoreSet::new(scores, labels)?;
        let (n_real, n_fake) = set.counts();
        let auc = compute_auc(&set).map_err(|e| Error::InvalidInput(format!("group {group}: {e}")))?;
        let eer = compute_eer(&set)?;
        groups.push(GroupMetrics {
            name: group.to_string(),
            auc,
            eer,
            n_real,
            n_fake,
        });
    }
    let k = groups.len() as f64;
    let average_auc = groups.iter().map(|g| g.auc).sum::<f64>() / k;
    let average_eer = groups.iter().map(|g| g.eer).sum::<f64>() / k;
    Ok(ProtocolReport {
        name: name.to_string(),
        protocol: protocol.to_string(),
        groups,
        average_auc,
        average_eer,
    })
}

/// Renders reports as one aligned table, a row per report and a column per
/// group plus the average, each cell `AUC/EER` in percent.
pub fn render_table(reports: &[ProtocolReport]) -> Result<String> {
    let first = reports.first().ok_or_else(|| Error::InvalidInput("no reports to render".into()))?;
    let columns: Vec<&str> = first.groups.iter().map(|g| g.name.as_str()).collect();
    for r in reports {
        let names: Vec<&str> = r.groups.iter().map(|g| g.name.as_str()).collect();
        if names != columns {
            return Err(Error::InvalidInput(format!(
                "report {:?} has groups {names:?}, expected {columns:?}",
                r.name
            )));
        }
    }
    let cell = |auc: f64, eer: f64| format!("{:.2}/{:.2}", 100.0 * auc, 100.0 * eer);
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Method".to_string()];
    header.extend(columns.iter().map(|c| c.to_string()));
    header.push("Average".into());
    rows.push(header);
    for r in reports {
        let mut row = vec![r.name.clone()];
        row.extend(r.groups.iter().map(|g| cell(g.auc, g.eer)));
        row.push(cell(r.average_auc, r.average_eer));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (k, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if k == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out.push_str("cells: AUC/EER (%)\n");
    Ok(out)
}

/// Middle-cropped spectrograms of `clips`, packed as one batch.
pub fn eval_batch(stft: &Stft, clips: &[&AudioClip], exec: Exec) -> Result<FeatureMap> {
    let specs = exec.map(clips, |clip| -> Result<Vec<f32>> {
        let fixed = fix_length(clip, CropMode::EvalMiddle, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(stft.log_magnitude(&fixed.samples)?.to_f32())
    });
    let (f, t) = (stft.config().freq_bins(), stft.config().frames(crate::audio::CLIP_SAMPLES));
    let mut data = Vec::with_capacity(clips.len() * f * t);
    for s in specs {
        data.extend(s?);
    }
    Ok(FeatureMap::from_vec(clips.len(), 1, f, t, data))
}

/// Real-speech probabilities for each clip with inference-mode normalization.
pub fn score_clips(model: &DualStreamModel, clips: &[&AudioClip], batch_size: usize, exec: Exec) -> Result<Vec<f64>> {
    let stft = Stft::new(Default::default());
    let mut scores = Vec::with_capacity(clips.len());
    for chunk in clips.chunks(batch_size.max(1)) {
        let x = eval_batch(&stft, chunk, exec)?;
        scores.extend(model.score(&x, exec)?);
    }
    Ok(scores)
}

/// Scores a test split, groups it per protocol, and returns the report with its dump.
pub fn run_protocol(
    model: &DualStreamModel,
    entries: &[ManifestEntry],
    clips: &[&AudioClip],
    protocol: Protocol,
    name: &str,
    batch_size: usize,
    exec: Exec,
) -> Result<(ProtocolReport, Vec<ScoreRecord>)> {
    let scores = score_clips(model, clips, batch_size, exec)?;
    let records = score_records(entries, &scores, protocol)?;
    Ok((report_from_records(name, protocol.name(), &records)?, records))
}

pub fn write_report_json(path: impl AsRef<Path>, report: &ProtocolReport) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f).map_err(|e| Error::io(path, e))
}
