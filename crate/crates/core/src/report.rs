//! Comparison tables across runs.
//!
//! One summary row per (backend, method, prompt type), with accuracy, JSD and
//! DCE columns per dataset and an accuracy-change column for datasets that
//! carry original labels. Output is byte-stable for a given set of records.

use crate::data::DatasetName;
use crate::reconstruction::Method;
use crate::runner::RunRecord;
use crate::verbalization::PromptType;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
            Self::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            "md" | "markdown" => Ok(Self::Markdown),
            _ => Err(format!(
                "unknown report format `{s}` (expected csv, jsonl or markdown)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run records to report")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub run_id: String,
    pub instances: usize,
    pub accuracy: f64,
    pub jsd: f64,
    pub dce: f64,
    /// Percentage points, when every instance has an original label.
    pub accuracy_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub backend: String,
    pub method: Method,
    pub prompt_type: PromptType,
    pub cells: BTreeMap<DatasetName, Cell>,
}

/// Groups records into summary rows. When several records cover the same
/// (backend, method, prompt, dataset), the one with the greatest run id wins.
/// Records without any scored instance contribute no cell.
pub fn summary_rows(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let mut rows: BTreeMap<(String, Method, PromptType), SummaryRow> = BTreeMap::new();
    for rec in sorted {
        let key = (
            rec.spec.backend.clone(),
            rec.spec.method,
            rec.spec.prompt_type,
        );
        let row = rows.entry(key).or_insert_with(|| SummaryRow {
            backend: rec.spec.backend.clone(),
            method: rec.spec.method,
            prompt_type: rec.spec.prompt_type,
            cells: BTreeMap::new(),
        });
        if let Some(report) = &rec.report {
            row.cells.insert(
                rec.spec.dataset,
                Cell {
                    run_id: rec.run_id.clone(),
                    instances: report.per_instance.len(),
                    accuracy: report.accuracy,
                    jsd: report.mean_jsd,
                    dce: report.mean_dce,
                    accuracy_change: report.accuracy_change().ok(),
                },
            );
        }
    }
    rows.into_values().collect()
}

fn datasets(rows: &[SummaryRow]) -> Vec<(DatasetName, bool)> {
    DatasetName::ALL
        .iter()
        .copied()
        .filter_map(|d| {
            let cells: Vec<&Cell> = rows.iter().filter_map(|r| r.cells.get(&d)).collect();
            (!cells.is_empty()).then(|| (d, cells.iter().any(|c| c.accuracy_change.is_some())))
        })
        .collect()
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    backend: &'a str,
    method: Method,
    prompt_type: PromptType,
    dataset: DatasetName,
    #[serde(flatten)]
    cell: &'a Cell,
}

/// Renders summary rows. CSV and Markdown round to four decimals (accuracy
/// change to two); JSONL keeps full precision.
pub fn render_summary(rows: &[SummaryRow], format: ReportFormat) -> String {
    let cols = datasets(rows);
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("backend,method,prompt");
            for (d, change) in &cols {
                let t = d.task_tag();
                write!(out, ",{t}_acc,{t}_jsd,{t}_dce").unwrap();
                if *change {
                    write!(out, ",{t}_acc_change").unwrap();
                }
            }
            out.push('\n');
            for row in rows {
                write!(
                    out,
                    "{},{},{}",
                    csv_field(&row.backend),
                    row.method,
                    row.prompt_type
                )
                .unwrap();
                for (d, change) in &cols {
                    match row.cells.get(d) {
                        Some(c) => {
                            write!(out, ",{:.4},{:.4},{:.4}", c.accuracy, c.jsd, c.dce).unwrap()
                        }
                        None => out.push_str(",,,"),
                    }
                    if *change {
                        out.push(',');
                        if let Some(v) = row.cells.get(d).and_then(|c| c.accuracy_change) {
                            write!(out, "{v:.2}").unwrap();
                        }
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| Backend | Method | Prompt |");
            let mut rule = String::from("|---|---|---|");
            for (d, change) in &cols {
                let n = d.display();
                write!(out, " {n} Acc | {n} JSD | {n} DCE |").unwrap();
                rule.push_str("---:|---:|---:|");
                if *change {
                    write!(out, " {n} ΔAcc |").unwrap();
                    rule.push_str("---:|");
                }
            }
            out.push('\n');
            out.push_str(&rule);
            out.push('\n');
            for row in rows {
                write!(
                    out,
                    "| {} | {} | {} |",
                    row.backend.replace('|', "\\|"),
                    row.method,
                    row.prompt_type
                )
                .unwrap();
                for (d, change) in &cols {
                    match row.cells.get(d) {
                        Some(c) => {
                            write!(out, " {:.4} | {:.4} | {:.4} |", c.accuracy, c.jsd, c.dce)
                                .unwrap()
                        }
                        None => out.push_str(" - | - | - |"),
                    }
                    if *change {
                        match row.cells.get(d).and_then(|c| c.accuracy_change) {
                            Some(v) => write!(out, " {v:+.2} |").unwrap(),
                            None => out.push_str(" - |"),
                        }
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::Jsonl => {
            for row in rows {
                for (dataset, cell) in &row.cells {
                    let line = JsonSummary {
                        backend: &row.backend,
                        method: row.method,
                        prompt_type: row.prompt_type,
                        dataset: *dataset,
                        cell,
                    };
                    out.push_str(&serde_json::to_string(&line).expect("summary serializes"));
                    out.push('\n');
                }
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    run_id: &'a str,
    backend: &'a str,
    method: Method,
    prompt_type: PromptType,
    dataset: DatasetName,
    uid: &'a str,
    jsd: f64,
    dce: f64,
    predicted: &'a str,
    correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct_old: Option<bool>,
}

/// One JSON line per scored instance, records ordered by run id.
pub fn render_instances(records: &[RunRecord]) -> String {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let mut out = String::new();
    for rec in sorted {
        let Some(report) = &rec.report else { continue };
        for s in &report.per_instance {
            let line = InstanceLine {
                run_id: &rec.run_id,
                backend: &rec.spec.backend,
                method: rec.spec.method,
                prompt_type: rec.spec.prompt_type,
                dataset: rec.spec.dataset,
                uid: &s.uid,
                jsd: s.jsd,
                dce: s.dce,
                predicted: rec.label_space.code(s.predicted),
                correct: s.correct,
                correct_old: s.correct_old,
            };
            out.push_str(&serde_json::to_string(&line).expect("instance serializes"));
            out.push('\n');
        }
    }
    out
}

/// Writes `summary.<ext>` and `instances.jsonl` into `out_dir` and returns
/// their paths.
pub fn emit_report(
    records: &[RunRecord],
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let summary_path = out_dir.join(format!("summary.{}", format.extension()));
    std::fs::write(
        &summary_path,
        render_summary(&summary_rows(records), format),
    )
    .map_err(io(&summary_path))?;
    let instances_path = out_dir.join("instances.jsonl");
    std::fs::write(&instances_path, render_instances(records)).map_err(io(&instances_path))?;
    Ok(vec![summary_path, instances_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{ClassId, LabelSpace};
    use crate::metrics::{InstanceScore, MetricReport};
    use crate::runner::{RunSpec, RunStats};
    use crate::verbalization::TemplateStyle;

    fn record(
        backend: &str,
        dataset: DatasetName,
        method: Method,
        acc: f64,
        old: Option<f64>,
    ) -> RunRecord {
        let spec = RunSpec::new(
            dataset,
            "d.jsonl",
            backend,
            method,
            PromptType::NumberSelection,
            "runs",
        );
        RunRecord {
            run_id: spec.resolved_run_id(),
            backend_kind: "mock".into(),
            template_style: TemplateStyle::Plain,
            lexicon_version: "v1".into(),
            template_version: "v1".into(),
            label_space: dataset.label_space(),
            rows: vec![],
            report: Some(MetricReport {
                accuracy: acc,
                mean_jsd: 0.25,
                mean_dce: 0.125,
                accuracy_old: old,
                per_instance: vec![InstanceScore {
                    uid: "u1".into(),
                    jsd: 0.25,
                    dce: 0.125,
                    predicted: ClassId(0),
                    correct: true,
                    correct_old: old.map(|_| true),
                }],
            }),
            stats: RunStats {
                total: 1,
                succeeded: 1,
                failed: 0,
                fallback: 0,
                excluded_from_metrics: 0,
                samples: 0,
                invalid_samples: 0,
                invalid_rate: None,
                mean_matched_mass: None,
            },
            spec,
        }
    }

    #[test]
    fn empty_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&[], ReportFormat::Csv, dir.path()),
            Err(ReportError::Empty)
        ));
    }

    #[test]
    fn csv_groups_by_backend_method_prompt() {
        let recs = vec![
            record("b", DatasetName::ChaosS, Method::Lpr, 0.5, Some(0.6)),
            record("a", DatasetName::ChaosAlpha, Method::Mcr, 0.75, None),
            record("a", DatasetName::ChaosS, Method::Mcr, 0.25, None),
        ];
        let csv = render_summary(&summary_rows(&recs), ReportFormat::Csv);
        assert_eq!(
            csv,
            "backend,method,prompt,alpha_acc,alpha_jsd,alpha_dce,snli_acc,snli_jsd,snli_dce,snli_acc_change\n\
             a,MCR,NS,0.7500,0.2500,0.1250,0.2500,0.2500,0.1250,\n\
             b,LPR,NS,,,,0.5000,0.2500,0.1250,-10.00\n"
        );
    }

    #[test]
    fn output_is_order_independent() {
        let a = record("a", DatasetName::ChaosM, Method::Mcr, 0.5, None);
        let b = record("b", DatasetName::PK2019, Method::Lpr, 0.5, None);
        for format in [
            ReportFormat::Csv,
            ReportFormat::Jsonl,
            ReportFormat::Markdown,
        ] {
            let x = render_summary(&summary_rows(&[a.clone(), b.clone()]), format);
            let y = render_summary(&summary_rows(&[b.clone(), a.clone()]), format);
            assert_eq!(x, y);
        }
        assert_eq!(
            render_instances(&[a.clone(), b.clone()]),
            render_instances(&[b, a])
        );
    }

    #[test]
    fn markdown_and_files() {
        let recs = vec![record(
            "m",
            DatasetName::ChaosS,
            Method::Mcr,
            0.5,
            Some(0.4),
        )];
        let md = render_summary(&summary_rows(&recs), ReportFormat::Markdown);
        assert!(
            md.contains("| m | MCR | NS | 0.5000 | 0.2500 | 0.1250 | +10.00 |"),
            "{md}"
        );
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&recs, ReportFormat::Markdown, dir.path()).unwrap();
        assert!(paths[0].ends_with("summary.md"));
        let inst = std::fs::read_to_string(&paths[1]).unwrap();
        assert!(inst.contains("\"predicted\":\"e\""));
        assert_eq!(LabelSpace::three_way().code(ClassId(0)), "e");
    }
}
