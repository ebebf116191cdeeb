//! NewsCLIPpings-style manifests and deterministic subsetting.
//!
//! A manifest is JSON lines. An optional first line carries the header:
//!
//! ```text
//! {"schema_version": 1, "split_sizes": {"train": 71072, "val": 7024, "test": 7264}}
//! {"id": "t-1", "image_path": "images/1.jpg", "caption": "...", "label": "falsified", "split": "test"}
//! ```
//!
//! Relative image paths resolve against an image root (`DATA_ROOT`, or the
//! manifest's directory). Images are hashed lazily, when a sample is run.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::image::{ImageError, ImageRef};
use crate::prompt::Verdict;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const ENV_DATA_ROOT: &str = "DATA_ROOT";

/// Split sizes of the Merged-Balanced NewsCLIPpings release.
pub const NEWSCLIPPINGS_SPLIT_SIZES: [(Split, usize); 3] =
    [(Split::Train, 71_072), (Split::Val, 7_024), (Split::Test, 7_264)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pristine,
    /// Out-of-context pairing: the positive class.
    Falsified,
}

impl Label {
    pub fn is_misinformation(self) -> bool {
        self == Label::Falsified
    }

    /// The verdict a perfect detector returns for this label.
    pub fn expected_verdict(self) -> Verdict {
        match self {
            Label::Pristine => Verdict::NotMisinformation,
            Label::Falsified => Verdict::Misinformation,
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pristine" => Ok(Label::Pristine),
            "falsified" => Ok(Label::Falsified),
            other => Err(format!("label must be `pristine` or `falsified`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("split must be train, val or test, got `{other}`")),
        }
    }
}

/// Input to a detection session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageTextPair {
    pub image: ImageRef,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl ImageTextPair {
    pub fn new(image: ImageRef, caption: impl Into<String>) -> Self {
        Self {
            image,
            caption: caption.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    /// Resolved image location.
    pub image_path: PathBuf,
    pub caption: String,
    pub label: Label,
    pub split: Split,
    /// The image file did not exist at load time.
    #[serde(default)]
    pub image_missing: bool,
}

impl Sample {
    /// Reads and hashes the image.
    pub fn image(&self) -> Result<ImageRef, ImageError> {
        ImageRef::from_path(&self.image_path)
    }

    pub fn pair(&self) -> Result<ImageTextPair, ImageError> {
        Ok(ImageTextPair::new(self.image()?, self.caption.clone()).with_label(self.label))
    }
}

/// One manifest line as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub caption: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    #[serde(default)]
    pub split_sizes: BTreeMap<Split, usize>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported manifest schema version {0} (expected {MANIFEST_SCHEMA_VERSION})")]
    UnknownSchemaVersion(u32),
    #[error("split {split}: header declares {declared} samples but the manifest has {found}")]
    SizeMismatch {
        split: Split,
        declared: usize,
        found: usize,
    },
    #[error("requested {requested} samples but only {available} are available")]
    SubsetTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub header: Option<ManifestHeader>,
    pub samples: Vec<Sample>,
}

impl DatasetManifest {
    pub fn declared_size(&self, split: Split) -> Option<usize> {
        self.header.as_ref()?.split_sizes.get(&split).copied()
    }

    pub fn split(&self, split: Split) -> Vec<Sample> {
        self.samples.iter().filter(|s| s.split == split).cloned().collect()
    }

    pub fn missing_images(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.image_missing)
    }
}

/// Image root from `DATA_ROOT`, falling back to the manifest's directory.
pub fn default_image_root(manifest: &Path) -> PathBuf {
    match std::env::var_os(ENV_DATA_ROOT) {
        Some(root) => PathBuf::from(root),
        None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn malformed(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_record(line_no: usize, value: Value, image_root: &Path) -> Result<Sample, DatasetError> {
    let field = |name: &str| -> Result<String, DatasetError> {
        match value.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(line_no, format!("field `{name}` must be a string"))),
            None => Err(malformed(line_no, format!("missing field `{name}`"))),
        }
    };
    let id = field("id")?;
    if id.trim().is_empty() {
        return Err(malformed(line_no, "field `id` must not be empty"));
    }
    let caption = field("caption")?;
    if caption.trim().is_empty() {
        return Err(malformed(line_no, "field `caption` must not be empty"));
    }
    let label: Label = field("label")?.parse().map_err(|e: String| malformed(line_no, e))?;
    let split: Split = field("split")?.parse().map_err(|e: String| malformed(line_no, e))?;
    let raw_path = field("image_path")?;
    let path = Path::new(&raw_path);
    let image_path = if path.is_absolute() {
        path.to_path_buf()
    } else {
        image_root.join(path)
    };
    let image_missing = !image_path.is_file();
    Ok(Sample {
        sample_id: id,
        image_path,
        caption,
        label,
        split,
        image_missing,
    })
}

/// Parses a whole manifest.
pub fn read_manifest(path: &Path, image_root: &Path) -> Result<DatasetManifest, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut header = None;
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        if value.get("schema_version").is_some() {
            if header.is_some() || !samples.is_empty() {
                return Err(malformed(line_no, "header must be the first line"));
            }
            let parsed: ManifestHeader =
                serde_json::from_value(value).map_err(|e| malformed(line_no, e.to_string()))?;
            if parsed.schema_version != MANIFEST_SCHEMA_VERSION {
                return Err(DatasetError::UnknownSchemaVersion(parsed.schema_version));
            }
            header = Some(parsed);
            continue;
        }
        let sample = parse_record(line_no, value, image_root)?;
        if !ids.insert(sample.sample_id.clone()) {
            return Err(malformed(line_no, format!("duplicate id `{}`", sample.sample_id)));
        }
        samples.push(sample);
    }
    Ok(DatasetManifest { header, samples })
}

/// Samples of one split, checked against the header's declared size.
pub fn load_manifest(path: &Path, split: Split, image_root: &Path) -> Result<Vec<Sample>, DatasetError> {
    let manifest = read_manifest(path, image_root)?;
    let samples = manifest.split(split);
    if let Some(declared) = manifest.declared_size(split)
        && declared != samples.len()
    {
        return Err(DatasetError::SizeMismatch {
            split,
            declared,
            found: samples.len(),
        });
    }
    let missing = samples.iter().filter(|s| s.image_missing).count();
    if missing > 0 {
        tracing::warn!(missing, split = %split, "manifest references missing images");
    }
    Ok(samples)
}

/// Writes a manifest, with an optional header line.
pub fn write_manifest<'a>(
    path: &Path,
    header: Option<&ManifestHeader>,
    records: impl IntoIterator<Item = &'a ManifestRecord>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        serde_json::to_writer(&mut out, h)?;
        out.write_all(b"\n")?;
    }
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Stratified, seeded draw of `n` samples.
///
/// Each label contributes in proportion to its share of `samples`
/// (largest-remainder rounding), drawn by a seeded shuffle; the result is
/// shuffled once more so labels interleave.
pub fn subset(samples: &[Sample], n: usize, seed: u64) -> Result<Vec<Sample>, DatasetError> {
    if n > samples.len() {
        return Err(DatasetError::SubsetTooLarge {
            requested: n,
            available: samples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<Label, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.label).or_default().push(s);
    }

    let total = samples.len();
    let mut quotas: Vec<(Label, usize, usize)> = groups
        .iter()
        .map(|(label, g)| (*label, g.len() * n / total.max(1), g.len() * n % total.max(1)))
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n - assigned) {
        quotas[i].1 += 1;
    }

    let mut picked = Vec::with_capacity(n);
    for (label, quota, _) in quotas {
        let group = groups.get_mut(&label).expect("label present");
        group.shuffle(&mut rng);
        picked.extend(group.iter().take(quota).map(|s| (*s).clone()));
    }
    picked.shuffle(&mut rng);
    Ok(picked)
}
