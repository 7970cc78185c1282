//! Slice manifests and patient-disjoint partitioning.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_HEADER: &str = "patient_id,slice_path,label";
pub const MANIFEST_HEADER_WITH_SOURCE: &str = "patient_id,slice_path,label,source";

/// Class label. Class indices: `Normal = 0`, `Covid = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Covid,
    Normal,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Covid];

    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Covid => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Covid),
            _ => None,
        }
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Covid => Label::Normal,
            Label::Normal => Label::Covid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Covid => "covid",
            Label::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "covid" => Some(Label::Covid),
            "normal" => Some(Label::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Original,
    Generated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::Generated => "generated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceRecord {
    pub patient_id: String,
    pub slice_path: PathBuf,
    pub label: Label,
    pub source: Source,
}

impl SliceRecord {
    pub fn new(patient_id: impl Into<String>, slice_path: impl Into<PathBuf>, label: Label) -> Self {
        Self {
            patient_id: patient_id.into(),
            slice_path: slice_path.into(),
            label,
            source: Source::Original,
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest header must be `{MANIFEST_HEADER}` (optionally followed by `,source`), found `{0}`")]
    Header(String),
    #[error("row {row}: {detail}")]
    Malformed { row: usize, detail: String },
    #[error("row {row}: unknown label `{label}` (expected `covid` or `normal`)")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: unknown source `{source_tag}` (expected `original` or `generated`)")]
    UnknownSource { row: usize, source_tag: String },
    #[error("row {row}: duplicate slice_path {path} (first seen at row {first_row})")]
    DuplicateSlice {
        row: usize,
        path: PathBuf,
        first_row: usize,
    },
    #[error("row {row}: slice image {path} is not readable: {detail}")]
    UnreadableImage {
        row: usize,
        path: PathBuf,
        detail: String,
    },
    #[error("split ratios {0:?} must be non-negative, sum to 1 within 1e-9 and give train a positive share")]
    InvalidRatios([f64; 3]),
    #[error("cannot split an empty manifest")]
    EmptyManifest,
    #[error("split assignment references patient `{0}` absent from the manifest")]
    UnknownPatient(String),
    #[error("patient `{0}` in the manifest has no partition in the split assignment")]
    UnassignedPatient(String),
    #[error("generated record {path} belongs to patient `{patient}` outside the train partition")]
    GeneratedOutsideTrain { patient: String, path: PathBuf },
    #[error("invalid split assignment: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Validated, immutable list of slice records.
///
/// Invariant: `patients` maps every patient id to the indices of its records
/// in ascending order, and those index lists partition `0..records.len()`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    records: Vec<SliceRecord>,
    patients: BTreeMap<String, Vec<usize>>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate slice paths. Row numbers in
    /// errors are 1-based positions in `records` plus one for the header.
    pub fn from_records(records: Vec<SliceRecord>) -> Result<Self, CatalogError> {
        let mut seen: HashMap<&Path, usize> = HashMap::with_capacity(records.len());
        let mut patients: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(&first) = seen.get(r.slice_path.as_path()) {
                return Err(CatalogError::DuplicateSlice {
                    row: i + 2,
                    path: r.slice_path.clone(),
                    first_row: first + 2,
                });
            }
            seen.insert(&r.slice_path, i);
            patients.entry(r.patient_id.clone()).or_default().push(i);
        }
        Ok(Self { records, patients })
    }

    pub fn records(&self) -> &[SliceRecord] {
        &self.records
    }

    pub fn patients(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every slice decodes as an image.
    pub fn check_images(&self) -> Result<(), CatalogError> {
        for (i, r) in self.records.iter().enumerate() {
            image::ImageReader::open(&r.slice_path)
                .and_then(|rd| rd.with_guessed_format())
                .map_err(|e| e.to_string())
                .and_then(|rd| rd.into_dimensions().map_err(|e| e.to_string()))
                .map_err(|detail| CatalogError::UnreadableImage {
                    row: i + 2,
                    path: r.slice_path.clone(),
                    detail,
                })?;
        }
        Ok(())
    }
}

/// Parses a manifest CSV. Relative slice paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest, CatalogError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim_start_matches('\u{feff}').trim_end_matches('\r'))
        .unwrap_or("");
    let with_source = match header {
        MANIFEST_HEADER => false,
        MANIFEST_HEADER_WITH_SOURCE => true,
        other => return Err(CatalogError::Header(other.to_string())),
    };
    let expected = if with_source { 4 } else { 3 };
    let mut records = Vec::new();
    let mut rows_by_path: HashMap<PathBuf, usize> = HashMap::new();
    for (i, line) in lines {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(CatalogError::Malformed {
                row,
                detail: format!(
                    "expected {expected} columns, found {} (paths containing commas are not supported)",
                    fields.len()
                ),
            });
        }
        if fields[..2].iter().any(|f| f.trim().is_empty()) {
            return Err(CatalogError::Malformed {
                row,
                detail: "empty patient_id or slice_path".into(),
            });
        }
        if fields.iter().any(|f| f.contains('"')) {
            return Err(CatalogError::Malformed {
                row,
                detail: "quoted fields are not supported".into(),
            });
        }
        let label = Label::parse(fields[2]).ok_or_else(|| CatalogError::UnknownLabel {
            row,
            label: fields[2].to_string(),
        })?;
        let source = if with_source {
            match fields[3] {
                "original" => Source::Original,
                "generated" => Source::Generated,
                other => {
                    return Err(CatalogError::UnknownSource {
                        row,
                        source_tag: other.to_string(),
                    })
                }
            }
        } else {
            Source::Original
        };
        let slice_path = base.join(fields[1]);
        if let Some(&first_row) = rows_by_path.get(&slice_path) {
            return Err(CatalogError::DuplicateSlice {
                row,
                path: slice_path,
                first_row,
            });
        }
        rows_by_path.insert(slice_path.clone(), row);
        records.push(SliceRecord {
            patient_id: fields[0].to_string(),
            slice_path,
            label,
            source,
        });
    }
    DatasetManifest::from_records(records)
}

/// Serializes records in the manifest CSV format, with the `source` column
/// when `with_source` is set. Paths are written as stored.
pub fn write_manifest(records: &[SliceRecord], with_source: bool) -> String {
    let mut out = String::new();
    out.push_str(if with_source { MANIFEST_HEADER_WITH_SOURCE } else { MANIFEST_HEADER });
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.patient_id, r.slice_path.display(), r.label));
        if with_source {
            out.push(',');
            out.push_str(r.source.as_str());
        }
        out.push('\n');
    }
    out
}

/// Patient to partition mapping. Field order fixes the JSON layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub partition_of: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split assignment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn patients_in(&self, part: Partition) -> usize {
        self.partition_of.values().filter(|&&p| p == part).count()
    }
}

fn validate_ratios(ratios: [f64; 3]) -> Result<(), CatalogError> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        && ratios[0] > 0.0;
    if ok {
        Ok(())
    } else {
        Err(CatalogError::InvalidRatios(ratios))
    }
}

/// `floor(ratio * n)` with a guard against products like `0.29 * 100`
/// landing just below an integer.
pub(crate) fn floor_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Shuffles the sorted patient ids with a seeded ChaCha8 stream; val and test
/// take `floor(ratio * P)` patients each and train takes the remainder.
pub fn split_by_patient(
    manifest: &DatasetManifest,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, CatalogError> {
    validate_ratios(ratios)?;
    if manifest.is_empty() {
        return Err(CatalogError::EmptyManifest);
    }
    let mut ids: Vec<&String> = manifest.patients.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let p = ids.len();
    let n_val = floor_count(ratios[1], p);
    let n_test = floor_count(ratios[2], p);
    let mut partition_of = BTreeMap::new();
    for (i, id) in ids.into_iter().enumerate() {
        let part = if i < n_val {
            Partition::Val
        } else if i < n_val + n_test {
            Partition::Test
        } else {
            Partition::Train
        };
        partition_of.insert(id.clone(), part);
    }
    Ok(SplitAssignment {
        seed,
        ratios,
        partition_of,
    })
}

/// Records of `part` in manifest order. Generated records only ever belong
/// to train.
pub fn slices_for(
    assignment: &SplitAssignment,
    manifest: &DatasetManifest,
    part: Partition,
) -> Result<Vec<SliceRecord>, CatalogError> {
    if let Some(id) = assignment
        .partition_of
        .keys()
        .find(|id| !manifest.patients.contains_key(*id))
    {
        return Err(CatalogError::UnknownPatient(id.clone()));
    }
    let mut out = Vec::new();
    for r in &manifest.records {
        let assigned = *assignment
            .partition_of
            .get(&r.patient_id)
            .ok_or_else(|| CatalogError::UnassignedPatient(r.patient_id.clone()))?;
        if r.source == Source::Generated && assigned != Partition::Train {
            return Err(CatalogError::GeneratedOutsideTrain {
                patient: r.patient_id.clone(),
                path: r.slice_path.clone(),
            });
        }
        if assigned == part {
            out.push(r.clone());
        }
    }
    Ok(out)
}

/// `(covid, normal)` counts.
pub fn class_counts(records: &[SliceRecord]) -> (usize, usize) {
    let covid = records.iter().filter(|r| r.label == Label::Covid).count();
    (covid, records.len() - covid)
}
