//! Dataset manifests, split protocols and real-class oversampling.
//!
//! A manifest is UTF-8 JSON Lines, one record per clip:
//!
//! ```text
//! {"file_id":"a01","path":"real/a01.wav","label":1,"synthesizer_id":"real","language":"en"}
//! {"file_id":"a01","path":"melgan/a01.wav","label":0,"synthesizer_id":"MelGAN","language":"en","duration_s":3.2}
//! ```
//!
//! `label` is 1 for genuine speech and 0 for synthetic speech. Genuine clips
//! must use the synthesizer id `"real"`. Fake clips produced from a genuine
//! recording share its `file_id`. Relative paths are resolved against the
//! directory holding the manifest. Blank lines are ignored.
//!
//! Split dumps use the same record with an extra `"split"` field
//! (`"train"`, `"validation"` or `"test"`).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Synthesizer id reserved for genuine speech.
pub const REAL_SYNTH: &str = "real";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Fake = 0,
    Real = 1,
}

impl Label {
    pub fn is_real(self) -> bool {
        self == Label::Real
    }

    /// 1.0 for real, 0.0 for fake; the target of the binary head.
    pub fn target(self) -> f32 {
        match self {
            Label::Real => 1.0,
            Label::Fake => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Label::Fake),
            1 => Ok(Label::Real),
            other => Err(serde::de::Error::custom(format!(
                "label must be 0 (fake) or 1 (real), got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub synthesizer_id: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl ManifestEntry {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.file_id.is_empty() {
            return Err("file_id must be non-empty".into());
        }
        if self.path.as_os_str().is_empty() {
            return Err("path must be non-empty".into());
        }
        match (self.label, self.synthesizer_id == REAL_SYNTH) {
            (Label::Real, false) => Err(format!(
                "label is real but synthesizer_id is {:?}",
                self.synthesizer_id
            )),
            (Label::Fake, true) => Err("label is fake but synthesizer_id is \"real\"".into()),
            _ => Ok(()),
        }
    }

    /// Key identifying a clip: the source recording plus the generator.
    pub fn key(&self) -> (&str, &str) {
        (&self.file_id, &self.synthesizer_id)
    }
}

/// Reads a manifest, rejecting the whole file on the first invalid record.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, path, base)
}

pub(crate) fn parse_manifest(text: &str, origin: &Path, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Manifest {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| err(format!("malformed record: {e}")))?;
        entry.validate().map_err(err)?;
        if !seen.insert((entry.file_id.clone(), entry.synthesizer_id.clone())) {
            return Err(err(format!(
                "duplicate (file_id, synthesizer_id) pair ({:?}, {:?})",
                entry.file_id, entry.synthesizer_id
            )));
        }
        if entry.path.is_relative() && !base.as_os_str().is_empty() {
            entry.path = base.join(&entry.path);
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Writes entries as a manifest (paths are written as stored).
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    /// Index 0 is always `"real"`; the rest are the training synthesizers in lexicographic order.
    pub synthesizer_vocab: Vec<String>,
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    #[serde(flatten)]
    entry: &'a ManifestEntry,
    split: SplitName,
}

impl SplitSet {
    fn assemble(
        train: Vec<ManifestEntry>,
        validation: Vec<ManifestEntry>,
        test: Vec<ManifestEntry>,
    ) -> Self {
        let synths: BTreeSet<&str> = train
            .iter()
            .filter(|e| !e.label.is_real())
            .map(|e| e.synthesizer_id.as_str())
            .collect();
        let mut synthesizer_vocab = vec![REAL_SYNTH.to_string()];
        synthesizer_vocab.extend(synths.into_iter().map(String::from));
        SplitSet {
            train,
            validation,
            test,
            synthesizer_vocab,
        }
    }

    /// Number of fake synthesizers seen in training (N_s).
    pub fn n_synthesizers(&self) -> usize {
        self.synthesizer_vocab.len() - 1
    }

    pub fn synth_index(&self, synthesizer_id: &str) -> Option<usize> {
        self.synthesizer_vocab.iter().position(|s| s == synthesizer_id)
    }

    pub fn split(&self, name: SplitName) -> &[ManifestEntry] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Serializes every entry with its split tag, train first.
    pub fn to_dump(&self) -> Result<String> {
        let mut out = String::new();
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for entry in self.split(name) {
                out.push_str(&serde_json::to_string(&DumpRecord { entry, split: name })?);
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_dump()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Clip keys (file_id, synthesizer_id) are never shared between splits.
    pub fn keys_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .all(|e| seen.insert(e.key()))
    }

    /// Every file_id belongs to at most one split.
    pub fn file_ids_disjoint(&self) -> bool {
        let ids = |v: &[ManifestEntry]| -> BTreeSet<String> {
            v.iter().map(|e| e.file_id.clone()).collect()
        };
        let (a, b, c) = (ids(&self.train), ids(&self.validation), ids(&self.test));
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Split(format!(
            "ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items over `ratios`.
/// Ties in the fractional part go to the earlier split.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn shuffled<T: Ord + Clone>(items: BTreeSet<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v: Vec<T> = items.into_iter().collect();
    v.shuffle(rng);
    v
}

/// Partitions shuffled ids into consecutive groups sized by `ratios`.
fn partition_ids(
    ids: BTreeSet<String>,
    ratios: &[f64],
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<Vec<BTreeSet<String>>> {
    if ids.len() < ratios.len() {
        return Err(Error::Split(format!(
            "{} unique {what} file_ids cannot fill {} splits",
            ids.len(),
            ratios.len()
        )));
    }
    let order = shuffled(ids, rng);
    let counts = apportion(order.len(), ratios);
    let mut groups = Vec::with_capacity(counts.len());
    let mut start = 0;
    for c in counts {
        groups.push(order[start..start + c].iter().cloned().collect());
        start += c;
    }
    Ok(groups)
}

fn route_by_id(
    entries: impl IntoIterator<Item = ManifestEntry>,
    groups: &[BTreeSet<String>],
    out: &mut [Vec<ManifestEntry>],
) {
    for e in entries {
        if let Some(g) = groups.iter().position(|g| g.contains(&e.file_id)) {
            out[g].push(e);
        }
    }
}

/// Inner-dataset protocol: file ids are shuffled and split by `ratios`
/// (train/validation/test); every clip follows its file id.
pub fn split_inner(entries: &[ManifestEntry], ratios: [f64; 3], seed: u64) -> Result<SplitSet> {
    check_ratios(&ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: BTreeSet<String> = entries.iter().map(|e| e.file_id.clone()).collect();
    let groups = partition_ids(ids, &ratios, &mut rng, "")?;
    let mut out = vec![Vec::new(), Vec::new(), Vec::new()];
    route_by_id(entries.iter().cloned(), &groups, &mut out);
    let test = out.pop().unwrap();
    let validation = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok(SplitSet::assemble(train, validation, test))
}

/// Cross-method protocol: real clips are split by file id with `real_ratios`;
/// fakes from `train_synths` are split by file id into train/validation with
/// `fake_ratios`; fakes from every other synthesizer go to test.
pub fn split_cross_method(
    entries: &[ManifestEntry],
    train_synths: &BTreeSet<String>,
    real_ratios: [f64; 3],
    fake_ratios: [f64; 2],
    seed: u64,
) -> Result<SplitSet> {
    check_ratios(&real_ratios)?;
    check_ratios(&fake_ratios)?;
    let all_synths: BTreeSet<String> = entries
        .iter()
        .filter(|e| !e.label.is_real())
        .map(|e| e.synthesizer_id.clone())
        .collect();
    if train_synths.is_empty() {
        return Err(Error::Split("train synthesizer set is empty".into()));
    }
    if let Some(missing) = train_synths.iter().find(|s| !all_synths.contains(*s)) {
        return Err(Error::Split(format!(
            "train synthesizer {missing:?} does not occur in the manifest"
        )));
    }
    if train_synths == &all_synths {
        return Err(Error::Split(
            "train synthesizers cover every synthesizer; the test split would hold no fakes".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (reals, fakes): (Vec<_>, Vec<_>) = entries.iter().cloned().partition(|e| e.label.is_real());
    let real_ids = reals.iter().map(|e| e.file_id.clone()).collect();
    let real_groups = partition_ids(real_ids, &real_ratios, &mut rng, "real")?;
    let mut out = vec![Vec::new(), Vec::new(), Vec::new()];
    route_by_id(reals, &real_groups, &mut out);

    let (seen, unseen): (Vec<_>, Vec<_>) = fakes
        .into_iter()
        .partition(|e| train_synths.contains(&e.synthesizer_id));
    let fake_ids = seen.iter().map(|e| e.file_id.clone()).collect();
    let fake_groups = partition_ids(fake_ids, &fake_ratios, &mut rng, "fake")?;
    route_by_id(seen, &fake_groups, &mut out[..2]);
    out[2].extend(unseen);

    let test = out.pop().unwrap();
    let validation = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok(SplitSet::assemble(train, validation, test))
}

/// Cross-dataset protocol: `source` is split by file id into train/validation,
/// every clip of `target` is used for testing.
pub fn split_cross_dataset(
    source: &[ManifestEntry],
    target: &[ManifestEntry],
    ratios: [f64; 2],
    seed: u64,
) -> Result<SplitSet> {
    check_ratios(&ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = source.iter().map(|e| e.file_id.clone()).collect();
    let groups = partition_ids(ids, &ratios, &mut rng, "source")?;
    let mut out = vec![Vec::new(), Vec::new()];
    route_by_id(source.iter().cloned(), &groups, &mut out);
    let validation = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok(SplitSet::assemble(train, validation, target.to_vec()))
}

/// Cross-language protocol: clips tagged `train_language` are split by file id
/// into train/validation, clips tagged `test_language` form the test split.
pub fn split_cross_language(
    entries: &[ManifestEntry],
    train_language: &str,
    test_language: &str,
    ratios: [f64; 2],
    seed: u64,
) -> Result<SplitSet> {
    if train_language == test_language {
        return Err(Error::Split(format!(
            "train and test language are both {train_language:?}"
        )));
    }
    let source: Vec<_> = entries
        .iter()
        .filter(|e| e.language == train_language)
        .cloned()
        .collect();
    let target: Vec<_> = entries
        .iter()
        .filter(|e| e.language == test_language)
        .cloned()
        .collect();
    if target.is_empty() {
        return Err(Error::Split(format!("no clips tagged {test_language:?}")));
    }
    split_cross_dataset(&source, &target, ratios, seed)
}

/// Repeats real entries until the real count matches the fake count.
///
/// Every real entry is repeated `fake / real` times; the remaining
/// `fake % real` slots are filled by sampling reals without replacement.
/// Fakes pass through unchanged. The result is shuffled. When reals already
/// match or outnumber fakes nothing is duplicated.
pub fn oversample_real(entries: &[ManifestEntry], seed: u64) -> Result<Vec<ManifestEntry>> {
    let (reals, fakes): (Vec<_>, Vec<_>) = entries.iter().cloned().partition(|e| e.label.is_real());
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::Split(format!(
            "oversampling needs both classes (real: {}, fake: {})",
            reals.len(),
            fakes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * fakes.len().max(reals.len()));
    if reals.len() >= fakes.len() {
        out.extend(reals);
    } else {
        let whole = fakes.len() / reals.len();
        let rest = fakes.len() % reals.len();
        for _ in 0..whole {
            out.extend(reals.iter().cloned());
        }
        out.extend(reals.choose_multiple(&mut rng, rest).cloned());
    }
    out.extend(fakes);
    out.shuffle(&mut rng);
    Ok(out)
}

/// Per-synthesizer clip counts, handy for logs and audits.
pub fn synth_counts(entries: &[ManifestEntry]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in entries {
        *counts.entry(e.synthesizer_id.clone()).or_insert(0) += 1;
    }
    counts
}
