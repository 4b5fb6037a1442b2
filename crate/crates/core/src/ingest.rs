//! Conversion of upstream release files into normalized dataset JSONL.
//!
//! Accepted record shapes (one JSON object per line):
//!
//! * ChaosNLI releases: `label_counter` (class → count), `majority_label`,
//!   `old_label`, and an `example` object with `premise`/`hypothesis` or
//!   `obs1`/`obs2`/`hyp1`/`hyp2`, plus an optional `source`.
//! * Flat records carrying the texts at top level (also as
//!   `sentence1`/`sentence2`), with counts given as `label_counts` (object, or
//!   array in class order) or as a raw `labels` list of individual judgments.
//!
//! The `source` field is carried through so that loading can exclude the
//! sub-corpora that are not part of the evaluation.

use crate::data::{read_dataset, DataError, DatasetName, RawRecord};
use crate::labels::{LabelSpace, TaskKind};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Upstream field aliases for each normalized text field.
fn text_aliases(kind: TaskKind) -> &'static [(&'static str, &'static [&'static str])] {
    match kind {
        TaskKind::TwoChoice => &[
            ("obs_start", &["obs1", "obs_start", "observation_1"]),
            ("obs_end", &["obs2", "obs_end", "observation_2"]),
            ("hyp1", &["hyp1", "hypothesis_1"]),
            ("hyp2", &["hyp2", "hypothesis_2"]),
        ],
        TaskKind::ThreeWay => &[
            ("premise", &["premise", "sentence1", "context"]),
            ("hypothesis", &["hypothesis", "sentence2"]),
        ],
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Class code for an upstream label, or the label unchanged when unknown so
/// that loading reports it.
fn code(space: LabelSpace, label: &str) -> String {
    match space.parse_class(label) {
        Some(c) => space.code(c).to_string(),
        None => label.to_string(),
    }
}

fn convert_record(line: usize, value: &Value, name: DatasetName) -> Result<RawRecord, DataError> {
    let space = name.label_space();
    let err = |field: &str, message: &str| DataError::SchemaViolation {
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    let top = value
        .as_object()
        .ok_or_else(|| err("record", "expected a JSON object"))?;
    let example: &Map<String, Value> = top.get("example").and_then(Value::as_object).unwrap_or(top);
    let lookup = |key: &str| example.get(key).or_else(|| top.get(key));

    let uid = ["uid", "id", "pairID"]
        .iter()
        .find_map(|k| lookup(k).and_then(scalar))
        .ok_or_else(|| err("uid", "missing"))?;

    let mut texts = BTreeMap::new();
    for (field, aliases) in text_aliases(space.task_kind()) {
        let text = aliases
            .iter()
            .find_map(|a| lookup(a).and_then(Value::as_str))
            .ok_or_else(|| err(field, "missing"))?;
        texts.insert(field.to_string(), text.to_string());
    }

    let mut label_counts: BTreeMap<String, i64> = BTreeMap::new();
    let mut add = |label: String, count: i64| {
        *label_counts.entry(code(space, &label)).or_default() += count;
    };
    if let Some(obj) = top
        .get("label_counter")
        .or_else(|| top.get("label_counts"))
        .and_then(Value::as_object)
    {
        for (label, count) in obj {
            let count = count
                .as_i64()
                .ok_or_else(|| err("label_counts", "counts must be integers"))?;
            add(label.clone(), count);
        }
    } else if let Some(arr) = top.get("label_counts").and_then(Value::as_array) {
        if arr.len() != space.len() {
            return Err(err(
                "label_counts",
                "array length differs from the number of classes",
            ));
        }
        for (c, count) in space.classes().zip(arr) {
            let count = count
                .as_i64()
                .ok_or_else(|| err("label_counts", "counts must be integers"))?;
            add(space.code(c).to_string(), count);
        }
    } else if let Some(arr) = top.get("labels").and_then(Value::as_array) {
        for label in arr {
            let label =
                scalar(label).ok_or_else(|| err("labels", "labels must be strings or numbers"))?;
            add(label, 1);
        }
    } else {
        return Err(err(
            "label_counts",
            "no label_counter, label_counts or labels",
        ));
    }

    let label_field = |key: &str| top.get(key).and_then(scalar).map(|l| code(space, &l));
    Ok(RawRecord {
        uid,
        task: name.task_tag().to_string(),
        texts,
        label_counts,
        majority_label: label_field("majority_label"),
        old_label: label_field("old_label"),
        source: lookup("source").and_then(scalar),
    })
}

/// Converts upstream lines into normalized record lines.
pub fn convert_upstream<R: BufRead>(
    reader: R,
    name: DatasetName,
) -> Result<Vec<String>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = convert_record(line_no, &value, name)?;
        out.push(serde_json::to_string(&record).expect("record serializes"));
    }
    if out.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub written: usize,
    /// Instances that survive loading (after sub-corpus exclusion).
    pub loadable: usize,
    pub excluded: usize,
    pub warnings: usize,
}

/// Converts `input` into normalized JSONL at `output` and checks that the
/// result loads.
pub fn ingest_file(
    input: &Path,
    output: &Path,
    name: DatasetName,
) -> Result<IngestSummary, DataError> {
    let file = std::fs::File::open(input).map_err(|e| DataError::Io {
        path: input.display().to_string(),
        source: e,
    })?;
    let lines = convert_upstream(BufReader::new(file), name)?;
    let mut body = lines.join("\n");
    body.push('\n');
    let report = read_dataset(body.as_bytes(), name)?;
    let mut out = std::fs::File::create(output).map_err(|e| DataError::Io {
        path: output.display().to_string(),
        source: e,
    })?;
    out.write_all(body.as_bytes()).map_err(|e| DataError::Io {
        path: output.display().to_string(),
        source: e,
    })?;
    Ok(IngestSummary {
        written: lines.len(),
        loadable: report.manifest.len(),
        excluded: report.excluded,
        warnings: report.warnings.len(),
    })
}
