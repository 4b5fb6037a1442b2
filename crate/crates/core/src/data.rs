//! Multi-annotator NLI datasets in the normalized JSONL schema.
//!
//! One record per line:
//!
//! ```text
//! {"uid": "...", "task": "alpha"|"snli"|"mnli"|"pk2019",
//!  "texts": {...}, "label_counts": {"<class>": int, ...},
//!  "majority_label": "...", "old_label": "..."|null, "source": "..."?}
//! ```
//!
//! Class keys are the label-space codes (`1`/`2`, `e`/`c`/`n`); display names
//! such as `"entailment"` are accepted too.

use crate::labels::{
    argmax_index, make_distribution, CategoricalDistribution, ClassId, DistributionError,
    LabelSpace, TaskKind,
};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "chaos_alpha")]
    ChaosAlpha,
    #[serde(rename = "chaos_snli")]
    ChaosS,
    #[serde(rename = "chaos_mnli")]
    ChaosM,
    #[serde(rename = "pk2019")]
    PK2019,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [Self::ChaosAlpha, Self::ChaosS, Self::ChaosM, Self::PK2019];

    pub fn task_kind(self) -> TaskKind {
        match self {
            Self::ChaosAlpha => TaskKind::TwoChoice,
            _ => TaskKind::ThreeWay,
        }
    }

    pub fn label_space(self) -> LabelSpace {
        LabelSpace::new(self.task_kind())
    }

    /// Value of the `task` field in normalized records.
    pub fn task_tag(self) -> &'static str {
        match self {
            Self::ChaosAlpha => "alpha",
            Self::ChaosS => "snli",
            Self::ChaosM => "mnli",
            Self::PK2019 => "pk2019",
        }
    }

    pub fn from_task_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.task_tag() == tag)
    }

    /// Annotations collected per instance by the re-annotation effort.
    pub fn expected_annotations(self) -> u64 {
        match self {
            Self::PK2019 => 50,
            _ => 100,
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Self::ChaosAlpha => "ChaosNLI-α",
            Self::ChaosS => "ChaosNLI-S",
            Self::ChaosM => "ChaosNLI-M",
            Self::PK2019 => "PK2019",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

impl FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "alpha" | "chaos_alpha" | "chaosnli-alpha" | "alphanli" => Ok(Self::ChaosAlpha),
            "snli" | "chaos_snli" | "chaosnli-s" => Ok(Self::ChaosS),
            "mnli" | "chaos_mnli" | "chaosnli-m" => Ok(Self::ChaosM),
            "pk2019" | "pk" => Ok(Self::PK2019),
            _ => Err(format!("unknown dataset `{s}`")),
        }
    }
}

/// Text fields each task kind requires, in prompt order.
pub fn required_fields(kind: TaskKind) -> &'static [&'static str] {
    match kind {
        TaskKind::TwoChoice => &["obs_start", "obs_end", "hyp1", "hyp2"],
        TaskKind::ThreeWay => &["premise", "hypothesis"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub uid: String,
    pub task_kind: TaskKind,
    pub texts: BTreeMap<String, String>,
    /// Per-class counts in canonical class order.
    pub label_counts: Vec<u64>,
    pub majority_label: ClassId,
    pub old_label: Option<ClassId>,
}

impl Instance {
    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::new(self.task_kind)
    }

    pub fn total_annotations(&self) -> u64 {
        self.label_counts.iter().sum()
    }

    pub fn text(&self, field: &str) -> Option<&str> {
        self.texts.get(field).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: DatasetName,
    pub instances: Vec<Instance>,
}

impl DatasetManifest {
    pub fn label_space(&self) -> LabelSpace {
        self.name.label_space()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn uids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.uid.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("dataset contains no instances")]
    EmptyDataset,
    #[error("requested {requested} instances from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

/// Non-fatal findings raised while loading.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadWarning {
    /// The annotation total differs from the dataset's nominal count.
    AnnotationCount {
        uid: String,
        expected: u64,
        found: u64,
    },
    /// The file's majority label was not a maximal class and was replaced.
    MajorityMismatch {
        uid: String,
        stated: ClassId,
        recomputed: ClassId,
    },
    /// Several classes share the maximal count.
    MajorityTie { uid: String, chosen: ClassId },
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AnnotationCount {
                uid,
                expected,
                found,
            } => write!(f, "{uid}: {found} annotations, expected {expected}"),
            Self::MajorityMismatch {
                uid,
                stated,
                recomputed,
            } => write!(
                f,
                "{uid}: majority label {} is not maximal, using {}",
                stated.0, recomputed.0
            ),
            Self::MajorityTie { uid, chosen } => {
                write!(f, "{uid}: majority tie, chose class {}", chosen.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub manifest: DatasetManifest,
    pub warnings: Vec<LoadWarning>,
    /// Records dropped by dataset-specific filters (JOCI/DNC for PK2019).
    pub excluded: usize,
}

/// Majority vote with its tie flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Majority {
    pub class: ClassId,
    pub tied: bool,
}

pub fn majority_from_counts(label_counts: &[u64]) -> Majority {
    let class = argmax_index(label_counts);
    let max = label_counts[class.0];
    let tied = label_counts.iter().filter(|&&c| c == max).count() > 1;
    Majority { class, tied }
}

pub fn human_distribution(
    instance: &Instance,
) -> Result<CategoricalDistribution, DistributionError> {
    let weights: Vec<f64> = instance.label_counts.iter().map(|&c| c as f64).collect();
    make_distribution(&weights, instance.label_space())
}

#[derive(Debug, Deserialize, Serialize)]
pub(crate) struct RawRecord {
    pub uid: String,
    pub task: String,
    pub texts: BTreeMap<String, String>,
    pub label_counts: BTreeMap<String, i64>,
    #[serde(default)]
    pub majority_label: Option<String>,
    #[serde(default)]
    pub old_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

const EXCLUDED_PK_SOURCES: [&str; 2] = ["joci", "dnc"];

fn pk_excluded(record: &RawRecord) -> bool {
    let prefix = record
        .uid
        .split([':', '_', '-'])
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase();
    let source = record
        .source
        .as_deref()
        .unwrap_or_default()
        .to_ascii_lowercase();
    EXCLUDED_PK_SOURCES
        .iter()
        .any(|s| source == *s || source.starts_with(&format!("{s}_")) || prefix == *s)
}

fn violation(line: usize, field: &str, message: impl Into<String>) -> DataError {
    DataError::SchemaViolation {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn validate_record(
    raw: RawRecord,
    name: DatasetName,
    line: usize,
    warnings: &mut Vec<LoadWarning>,
) -> Result<Instance, DataError> {
    let space = name.label_space();
    if raw.uid.trim().is_empty() {
        return Err(violation(line, "uid", "empty"));
    }
    match DatasetName::from_task_tag(&raw.task) {
        Some(t) if t == name => {}
        _ => {
            return Err(violation(
                line,
                "task",
                format!("expected `{}`, found `{}`", name.task_tag(), raw.task),
            ))
        }
    }

    let required = required_fields(space.task_kind());
    for field in required {
        match raw.texts.get(*field) {
            Some(t) if !t.trim().is_empty() => {}
            Some(_) => return Err(violation(line, &format!("texts.{field}"), "empty")),
            None => return Err(violation(line, &format!("texts.{field}"), "missing")),
        }
    }
    if let Some(extra) = raw.texts.keys().find(|k| !required.contains(&k.as_str())) {
        return Err(violation(
            line,
            &format!("texts.{extra}"),
            "unexpected field",
        ));
    }

    let mut counts = vec![0u64; space.len()];
    let mut seen = vec![false; space.len()];
    for (label, &count) in &raw.label_counts {
        let class = space
            .parse_class(label)
            .ok_or_else(|| violation(line, "label_counts", format!("unknown class `{label}`")))?;
        if count < 0 {
            return Err(violation(
                line,
                "label_counts",
                format!("negative count {count} for `{label}`"),
            ));
        }
        if seen[class.0] {
            return Err(violation(
                line,
                "label_counts",
                format!("duplicate class `{label}`"),
            ));
        }
        seen[class.0] = true;
        counts[class.0] = count as u64;
    }
    if counts.iter().sum::<u64>() == 0 {
        return Err(violation(line, "label_counts", "counts sum to zero"));
    }

    let majority = majority_from_counts(&counts);
    let max = counts[majority.class.0];
    let majority_label = match raw.majority_label.as_deref() {
        Some(label) => {
            let stated = space.parse_class(label).ok_or_else(|| {
                violation(line, "majority_label", format!("unknown class `{label}`"))
            })?;
            if counts[stated.0] == max {
                stated
            } else {
                warnings.push(LoadWarning::MajorityMismatch {
                    uid: raw.uid.clone(),
                    stated,
                    recomputed: majority.class,
                });
                majority.class
            }
        }
        None => {
            if majority.tied {
                warnings.push(LoadWarning::MajorityTie {
                    uid: raw.uid.clone(),
                    chosen: majority.class,
                });
            }
            majority.class
        }
    };

    let old_label = match raw.old_label.as_deref() {
        None => None,
        Some(label) => Some(
            space
                .parse_class(label)
                .ok_or_else(|| violation(line, "old_label", format!("unknown class `{label}`")))?,
        ),
    };

    let total: u64 = counts.iter().sum();
    if total != name.expected_annotations() {
        warnings.push(LoadWarning::AnnotationCount {
            uid: raw.uid.clone(),
            expected: name.expected_annotations(),
            found: total,
        });
    }

    Ok(Instance {
        uid: raw.uid,
        task_kind: space.task_kind(),
        texts: raw.texts,
        label_counts: counts,
        majority_label,
        old_label,
    })
}

/// Parses normalized JSONL from any reader.
pub fn read_dataset<R: BufRead>(reader: R, name: DatasetName) -> Result<LoadReport, DataError> {
    let mut instances = Vec::new();
    let mut warnings = Vec::new();
    let mut uids = HashSet::new();
    let mut excluded = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if name == DatasetName::PK2019 && pk_excluded(&raw) {
            excluded += 1;
            continue;
        }
        let instance = validate_record(raw, name, line_no, &mut warnings)?;
        if !uids.insert(instance.uid.clone()) {
            return Err(violation(
                line_no,
                "uid",
                format!("duplicate uid `{}`", instance.uid),
            ));
        }
        instances.push(instance);
    }
    if instances.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    log::info!(
        "loaded {} {} instances ({} excluded)",
        instances.len(),
        name,
        excluded
    );
    Ok(LoadReport {
        manifest: DatasetManifest { name, instances },
        warnings,
        excluded,
    })
}

pub fn load_dataset(path: &Path, name: DatasetName) -> Result<LoadReport, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(std::io::BufReader::new(file), name)
}

/// Reads the `task` tag of the first non-empty record to guess the dataset.
pub fn detect_dataset(path: &Path) -> Result<DatasetName, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct Tag {
            task: String,
        }
        let tag: Tag = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        return DatasetName::from_task_tag(&tag.task)
            .ok_or_else(|| violation(idx + 1, "task", format!("unknown task `{}`", tag.task)));
    }
    Err(DataError::EmptyDataset)
}

/// Uniform sample without replacement, in draw order.
pub fn subsample(
    manifest: &DatasetManifest,
    n: usize,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    if n > manifest.len() {
        return Err(DataError::SampleTooLarge {
            requested: n,
            available: manifest.len(),
        });
    }
    let picks = SeededRng::new(seed).sample_indices(manifest.len(), n);
    Ok(DatasetManifest {
        name: manifest.name,
        instances: picks
            .into_iter()
            .map(|i| manifest.instances[i].clone())
            .collect(),
    })
}

/// Serializes an instance back into a normalized record line.
pub fn to_record_line(instance: &Instance, name: DatasetName) -> String {
    let space = instance.label_space();
    let raw = RawRecord {
        uid: instance.uid.clone(),
        task: name.task_tag().to_string(),
        texts: instance.texts.clone(),
        label_counts: space
            .classes()
            .map(|c| (space.code(c).to_string(), instance.label_counts[c.0] as i64))
            .collect(),
        majority_label: Some(space.code(instance.majority_label).to_string()),
        old_label: instance.old_label.map(|c| space.code(c).to_string()),
        source: None,
    };
    serde_json::to_string(&raw).expect("record serializes")
}
