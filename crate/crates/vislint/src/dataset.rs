//! Ground-truth manifests, stratified sampling, and per-question
//! applicability subsets.
//!
//! A manifest is a JSON array of annotation records:
//!
//! ```json
//! [{"image_id": "img_0001", "path": "images/img_0001.jpg",
//!   "raw_type": "vertical bar", "labels": {"1": "bar", "2": false, "9": 3},
//!   "flags": {"has_gradient": false, "multiple_legends": false}}]
//! ```
//!
//! Label values must match each question's answer kind: a type name for
//! question 1, booleans for the yes/no questions, non-negative integers for
//! the count questions. Records are immutable once loaded; everything after
//! I/O is pure and safe for concurrent reads.

pub mod fixture;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{
    self, canonical_raw_label, consolidate_type, AnswerKind, ApplicabilityFlags, DiagramType,
    QuestionId,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest is not a JSON array of records: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {index} field {field}: {message}")]
    Schema {
        index: usize,
        field: String,
        message: String,
    },
    #[error("duplicate image_id {0:?}")]
    DuplicateId(String),
    #[error("pool has only {available} {raw_type:?} records, plan wants {requested}")]
    InsufficientPool {
        raw_type: String,
        available: usize,
        requested: usize,
    },
}

/// Manual annotation flags that gate question applicability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default)]
    pub has_gradient: bool,
    #[serde(default)]
    pub multiple_legends: bool,
}

/// A ground-truth label for one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelValue {
    Type(DiagramType),
    Bool(bool),
    Count(u32),
}

impl LabelValue {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            LabelValue::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_count(self) -> Option<u32> {
        match self {
            LabelValue::Count(c) => Some(c),
            _ => None,
        }
    }
}

/// Per-image ground truth.
///
/// `diagram_type` is the consolidated form of `raw_type`; it is `None` only
/// for pool-only labels ("map"), which may appear in sampling pools but never
/// in evaluation manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub raw_type: String,
    pub diagram_type: Option<DiagramType>,
    pub labels: BTreeMap<QuestionId, LabelValue>,
    pub flags: Flags,
}

impl AnnotationRecord {
    /// Label lookup by question number.
    pub fn label(&self, id: QuestionId) -> Option<LabelValue> {
        self.labels.get(&id).copied()
    }

    /// Applicability flags for this record; legend presence comes from the
    /// question-11 ground truth when present.
    pub fn applicability_flags(&self) -> ApplicabilityFlags {
        let legend_present = QuestionId::new(11)
            .ok()
            .and_then(|q| self.label(q))
            .and_then(LabelValue::as_bool);
        ApplicabilityFlags {
            has_gradient: self.flags.has_gradient,
            multiple_legends: self.flags.multiple_legends,
            legend_present,
        }
    }

    /// Whether a question is meaningful for this record.
    pub fn is_applicable(&self, id: QuestionId) -> bool {
        match self.diagram_type {
            Some(ty) => catalog::is_applicable(id, ty, &self.applicability_flags()),
            None => false,
        }
    }
}

/// Whether "map" records (no consolidated variant) are acceptable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestMode {
    /// Evaluation manifests: every record must consolidate.
    Strict,
    /// Ingestion pools feeding the sampler: pool-only labels allowed.
    Pool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    image_id: String,
    path: String,
    raw_type: String,
    #[serde(default)]
    labels: BTreeMap<String, Value>,
    #[serde(default)]
    flags: Flags,
}

fn schema_err(index: usize, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        index,
        field: field.to_string(),
        message: message.into(),
    }
}

fn validate_label(
    index: usize,
    key: &str,
    value: &Value,
) -> Result<(QuestionId, LabelValue), DatasetError> {
    let field = format!("labels.{key}");
    let id: u8 = key
        .parse()
        .map_err(|_| schema_err(index, &field, "key is not a question id"))?;
    let id = QuestionId::new(id).map_err(|e| schema_err(index, &field, e.to_string()))?;
    let kind = catalog::question(id).kind;
    let label = match kind {
        AnswerKind::TypeChoice => {
            let name = value
                .as_str()
                .ok_or_else(|| schema_err(index, &field, "expected a diagram type string"))?;
            let ty =
                consolidate_type(name).map_err(|e| schema_err(index, &field, e.to_string()))?;
            LabelValue::Type(ty)
        }
        AnswerKind::YesNo => LabelValue::Bool(
            value
                .as_bool()
                .ok_or_else(|| schema_err(index, &field, "expected a boolean"))?,
        ),
        AnswerKind::Count => {
            let n = value
                .as_u64()
                .ok_or_else(|| schema_err(index, &field, "expected a non-negative integer"))?;
            let n = u32::try_from(n)
                .map_err(|_| schema_err(index, &field, "count does not fit in 32 bits"))?;
            LabelValue::Count(n)
        }
    };
    Ok((id, label))
}

fn validate_record(
    index: usize,
    raw: RawRecord,
    mode: ManifestMode,
) -> Result<AnnotationRecord, DatasetError> {
    if raw.image_id.is_empty() {
        return Err(schema_err(index, "image_id", "must be non-empty"));
    }
    let raw_type = canonical_raw_label(&raw.raw_type)
        .map_err(|e| schema_err(index, "raw_type", e.to_string()))?;
    let diagram_type = match consolidate_type(&raw_type) {
        Ok(ty) => Some(ty),
        Err(_) if mode == ManifestMode::Pool => None,
        Err(e) => return Err(schema_err(index, "raw_type", e.to_string())),
    };
    let mut labels = BTreeMap::new();
    for (key, value) in &raw.labels {
        let (id, label) = validate_label(index, key, value)?;
        labels.insert(id, label);
    }
    Ok(AnnotationRecord {
        image_id: raw.image_id,
        path: PathBuf::from(raw.path),
        raw_type,
        diagram_type,
        labels,
        flags: raw.flags,
    })
}

/// Parse manifest JSON text.
pub fn parse_manifest(
    json: &str,
    mode: ManifestMode,
) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let raw: Vec<RawRecord> = serde_json::from_str(json)?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(raw.len());
    for (index, r) in raw.into_iter().enumerate() {
        let record = validate_record(index, r, mode)?;
        if !seen.insert(record.image_id.clone()) {
            return Err(DatasetError::DuplicateId(record.image_id));
        }
        records.push(record);
    }
    Ok(records)
}

fn read_manifest(path: &Path, mode: ManifestMode) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, mode)
}

/// Load an evaluation manifest. Every record must consolidate to one of the
/// twelve diagram types; duplicate image ids are rejected.
pub fn load_manifest(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    read_manifest(path, ManifestMode::Strict)
}

/// Load an ingestion pool for sampling. Pool-only labels ("map") are
/// accepted here and can only be removed again by sampling them zero times.
pub fn load_pool(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    read_manifest(path, ManifestMode::Pool)
}

fn record_to_raw(r: &AnnotationRecord) -> RawRecord {
    let labels = r
        .labels
        .iter()
        .map(|(id, label)| {
            let value = match label {
                LabelValue::Type(t) => Value::String(t.name().to_string()),
                LabelValue::Bool(b) => Value::Bool(*b),
                LabelValue::Count(c) => Value::from(*c),
            };
            (id.get().to_string(), value)
        })
        .collect();
    RawRecord {
        image_id: r.image_id.clone(),
        path: r.path.display().to_string(),
        raw_type: r.raw_type.clone(),
        labels,
        flags: r.flags,
    }
}

/// Serialize records back to manifest JSON (compact, one array).
pub fn manifest_to_json(records: &[AnnotationRecord]) -> String {
    let raw: Vec<RawRecord> = records.iter().map(record_to_raw).collect();
    serde_json::to_string(&raw).expect("manifest records always serialize")
}

/// Write records to a manifest file.
pub fn write_manifest(path: &Path, records: &[AnnotationRecord]) -> Result<(), DatasetError> {
    std::fs::write(path, manifest_to_json(records)).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-raw-type sampling targets plus the RNG seed. Targets are keyed by
/// canonical raw labels ("vertical bar", not "bar"), so orientation variants
/// sample independently before consolidation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    pub targets: BTreeMap<String, usize>,
}

impl SamplePlan {
    /// The default plan: 1,010 images across thirteen raw types, with a
    /// minimum of 30 per type; horizontal interval and map are sampled zero
    /// times.
    pub fn default_plan(seed: u64) -> SamplePlan {
        let targets = [
            ("area", 30),
            ("line", 200),
            ("manhattan", 30),
            ("scatter", 100),
            ("scatter-line", 100),
            ("pie", 30),
            ("vertical box", 100),
            ("horizontal bar", 100),
            ("vertical bar", 200),
            ("horizontal interval", 0),
            ("vertical interval", 30),
            ("map", 0),
            ("heatmap", 30),
            ("surface", 30),
            ("venn", 30),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        SamplePlan { seed, targets }
    }

    pub fn load(path: &Path) -> Result<SamplePlan, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut plan: SamplePlan = serde_json::from_str(&text)?;
        // normalize keys so "Vertical Bar Chart" and "vertical bar" agree
        plan.targets = plan
            .targets
            .into_iter()
            .map(|(k, v)| (canonical_raw_label(&k).unwrap_or(k), v))
            .collect();
        Ok(plan)
    }

    pub fn total(&self) -> usize {
        self.targets.values().sum()
    }
}

/// Draw the planned number of records per raw type, without replacement,
/// using a seeded generator. Deterministic for a fixed (pool, plan) pair
/// regardless of pool ordering; output is sorted by image id.
pub fn stratified_sample(
    pool: &[AnnotationRecord],
    plan: &SamplePlan,
) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let mut by_type: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for record in pool {
        by_type
            .entry(record.raw_type.as_str())
            .or_default()
            .push(record);
    }
    for group in by_type.values_mut() {
        group.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut picked: Vec<AnnotationRecord> = Vec::with_capacity(plan.total());
    for (raw_type, &want) in &plan.targets {
        if want == 0 {
            continue;
        }
        let group = by_type
            .get(raw_type.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        if group.len() < want {
            return Err(DatasetError::InsufficientPool {
                raw_type: raw_type.clone(),
                available: group.len(),
                requested: want,
            });
        }
        let chosen = rand::seq::index::sample(&mut rng, group.len(), want);
        picked.extend(chosen.iter().map(|i| group[i].clone()));
    }
    picked.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(picked)
}

/// The records for which one question is meaningful.
#[derive(Debug, Clone)]
pub struct FilteredSubset<'a> {
    pub question_id: QuestionId,
    pub records: Vec<&'a AnnotationRecord>,
    pub n: usize,
}

/// Apply the catalog's applicability rules for one question across a
/// manifest.
pub fn filter_applicable(
    records: &[AnnotationRecord],
    question_id: QuestionId,
) -> FilteredSubset<'_> {
    let subset: Vec<&AnnotationRecord> = records
        .iter()
        .filter(|r| r.is_applicable(question_id))
        .collect();
    let n = subset.len();
    FilteredSubset {
        question_id,
        records: subset,
        n,
    }
}
