//! End-to-end evaluation runs.
//!
//! A run evaluates every instance of a (possibly subsampled) dataset against
//! one backend with one method and prompt type. Output layout:
//!
//! ```text
//! <out>/<run-id>/spec.json     experiment snapshot
//! <out>/<run-id>/rows.jsonl    per-instance rows, appended as they finish
//! <out>/<run-id>/record.json   final RunRecord, rows sorted by uid
//! <out>/<run-id>/summary.csv   one-line summary
//! <out>/<run-id>/timing.json   wall-clock and request counts
//! <out>/<run-id>/cache/        response cache
//! ```
//!
//! Rerunning the same spec resumes: succeeded rows are kept, everything else
//! is re-evaluated through the warm cache.

use crate::backends::{
    first_token_logprobs, sample_completions, Backend, BackendError, BackendRegistry,
    CachedBackend, ConfigError, GenerationConfig, ResponseCache,
};
use crate::data::{load_dataset, subsample, DataError, DatasetName, Instance};
use crate::labels::{chance_accuracy, ClassId, LabelSpace};
use crate::metrics::{aggregate, score_instance, InstanceScore, MetricReport, MetricsError};
use crate::reconstruction::{
    lpr, mcr, Method, Provenance, ReconstructionError, ReconstructionResult, DEFAULT_LPR_TOP_K,
    DEFAULT_MCR_SAMPLES,
};
use crate::report::{summary_rows, ReportFormat};
use crate::verbalization::{
    LexiconSet, OptionLexicon, PromptTemplate, PromptType, TemplateSet, TemplateStyle,
    VerbalizationError,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_PARALLELISM: usize = 8;

fn default_n() -> usize {
    DEFAULT_MCR_SAMPLES
}
fn default_k() -> usize {
    DEFAULT_LPR_TOP_K
}
fn default_true() -> bool {
    true
}
fn default_temperature() -> f64 {
    1.0
}
fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

/// One evaluation configuration.
///
/// `parallelism` and `output_dir` only affect execution, so they are left out
/// of the serialized snapshot and of the run id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub dataset: DatasetName,
    pub dataset_path: PathBuf,
    pub backend: String,
    pub method: Method,
    pub prompt_type: PromptType,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// `None` picks the chat style for backends that declare it.
    #[serde(default)]
    pub template_style: Option<TemplateStyle>,
    #[serde(default)]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default)]
    pub template_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subsample_n: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    /// Count fallback (uniform) reconstructions in the metrics.
    #[serde(default = "default_true")]
    pub include_fallback: bool,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(skip, default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunSpec {
    pub fn new(
        dataset: DatasetName,
        dataset_path: impl Into<PathBuf>,
        backend: impl Into<String>,
        method: Method,
        prompt_type: PromptType,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            dataset,
            dataset_path: dataset_path.into(),
            backend: backend.into(),
            method,
            prompt_type,
            n_samples: DEFAULT_MCR_SAMPLES,
            k: DEFAULT_LPR_TOP_K,
            template_style: None,
            lexicon_path: None,
            template_path: None,
            seed: 0,
            subsample_n: None,
            temperature: 1.0,
            max_tokens: None,
            include_fallback: true,
            run_id: None,
            parallelism: DEFAULT_PARALLELISM,
            output_dir: output_dir.into(),
        }
    }

    /// Checks everything that can be checked without a backend.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::InvalidSpec(m.to_string()));
        if self.method == Method::Lpr && self.prompt_type != PromptType::NumberSelection {
            return bad("LPR needs single-token answers; use the NS prompt type");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.subsample_n == Some(0) {
            return bad("subsample size must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a nonnegative number");
        }
        if self.max_tokens == Some(0) {
            return bad("max_tokens must be positive");
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return bad("run id must be a plain directory name");
            }
        }
        Ok(())
    }

    /// Backend-dependent validation.
    pub fn validate_for(&self, backend: &dyn Backend) -> Result<(), RunError> {
        self.validate()?;
        if backend.descriptor().id != self.backend {
            return Err(RunError::InvalidSpec(format!(
                "spec names backend `{}` but `{}` was supplied",
                self.backend,
                backend.descriptor().id
            )));
        }
        if self.method == Method::Lpr && !backend.descriptor().supports_logprobs {
            return Err(RunError::InvalidSpec(format!(
                "backend `{}` does not expose log probabilities; LPR is unavailable",
                self.backend
            )));
        }
        Ok(())
    }

    pub fn generation_config(&self) -> GenerationConfig {
        let base = match self.method {
            Method::Mcr => GenerationConfig::for_mcr(),
            Method::Lpr => GenerationConfig::for_lpr(),
        };
        GenerationConfig {
            temperature: self.temperature,
            max_tokens: self.max_tokens.unwrap_or(base.max_tokens),
            top_k_logprobs: self.k,
            stop: Vec::new(),
            seed: Some(self.seed),
        }
    }

    /// Explicit id, or `<dataset>-<backend>-<method>-<prompt>-<hash>` where the
    /// hash covers the serialized snapshot.
    pub fn resolved_run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let snapshot = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&snapshot);
        let hash: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        let backend: String = self
            .backend
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!(
            "{}-{}-{}-{}-{}",
            self.dataset.task_tag(),
            backend,
            self.method.to_string().to_lowercase(),
            self.prompt_type.tag().to_lowercase(),
            hash
        )
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.resolved_run_id())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verbalization(#[from] VerbalizationError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} already holds a run with a different spec")]
    SpecConflict(PathBuf),
    #[error("{path}: malformed row at line {line}: {message}")]
    BadRow {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    Succeeded {
        result: ReconstructionResult,
        jsd: f64,
        dce: f64,
        predicted: ClassId,
        correct: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correct_old: Option<bool>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub uid: String,
    pub prompt_sha256: String,
    #[serde(flatten)]
    pub outcome: RowOutcome,
}

impl InstanceRow {
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, RowOutcome::Succeeded { .. })
    }

    pub fn result(&self) -> Option<&ReconstructionResult> {
        match &self.outcome {
            RowOutcome::Succeeded { result, .. } => Some(result),
            RowOutcome::Failed { .. } => None,
        }
    }

    fn score(&self) -> Option<InstanceScore> {
        match &self.outcome {
            RowOutcome::Succeeded {
                jsd,
                dce,
                predicted,
                correct,
                correct_old,
                ..
            } => Some(InstanceScore {
                uid: self.uid.clone(),
                jsd: *jsd,
                dce: *dce,
                predicted: *predicted,
                correct: *correct,
                correct_old: *correct_old,
            }),
            RowOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Reconstructions that fell back to uniform.
    pub fallback: usize,
    /// Instances left out of the metrics (failures, plus fallbacks when excluded).
    pub excluded_from_metrics: usize,
    /// MCR: samples drawn and samples that matched no class.
    pub samples: usize,
    pub invalid_samples: usize,
    pub invalid_rate: Option<f64>,
    /// LPR: mean probability mass landing on valid options.
    pub mean_matched_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub spec: RunSpec,
    pub backend_kind: String,
    pub template_style: TemplateStyle,
    pub lexicon_version: String,
    pub template_version: String,
    pub label_space: LabelSpace,
    /// Sorted by uid.
    pub rows: Vec<InstanceRow>,
    pub report: Option<MetricReport>,
    pub stats: RunStats,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| RunError::BadRow {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// `1 / k` for the run's label space.
    pub fn chance_accuracy(&self) -> f64 {
        chance_accuracy(self.label_space)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_seconds: f64,
    pub parallelism: usize,
    pub resumed_rows: usize,
    pub evaluated_rows: usize,
    pub backend_requests: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub timing: RunTiming,
    pub run_dir: PathBuf,
}

impl RunOutcome {
    pub fn has_failures(&self) -> bool {
        self.record.stats.failed > 0
    }
}

fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Error)]
enum InstanceError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Reconstruction(#[from] ReconstructionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Everything an instance evaluation needs besides the instance.
pub struct EvalContext<'a> {
    pub method: Method,
    pub n_samples: usize,
    pub config: GenerationConfig,
    pub backend: &'a dyn Backend,
    pub lexicon: &'a OptionLexicon,
    pub template: &'a PromptTemplate,
}

/// Renders, queries, reconstructs and scores one instance. Backend and
/// estimator failures become a `Failed` row.
pub fn evaluate_instance(
    instance: &Instance,
    ctx: &EvalContext<'_>,
) -> Result<InstanceRow, VerbalizationError> {
    let prompt = ctx.template.render(instance)?;
    let prompt_sha256 = sha256_hex(&prompt);
    let attempt = || -> Result<RowOutcome, InstanceError> {
        let result = match ctx.method {
            Method::Mcr => {
                let samples = sample_completions(ctx.backend, &prompt, ctx.n_samples, &ctx.config)?;
                mcr(&samples, ctx.lexicon)?
            }
            Method::Lpr => {
                let top = first_token_logprobs(ctx.backend, &prompt, &ctx.config)?;
                lpr(&top, ctx.lexicon)?
            }
        };
        let score = score_instance(instance, &result.distribution)?;
        Ok(RowOutcome::Succeeded {
            result,
            jsd: score.jsd,
            dce: score.dce,
            predicted: score.predicted,
            correct: score.correct,
            correct_old: score.correct_old,
        })
    };
    let outcome = attempt().unwrap_or_else(|e| {
        log::warn!("{}: {e}", instance.uid);
        RowOutcome::Failed {
            error: e.to_string(),
        }
    });
    Ok(InstanceRow {
        uid: instance.uid.clone(),
        prompt_sha256,
        outcome,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads previously persisted rows, ignoring a torn final line.
fn read_rows(path: &Path) -> Result<Vec<InstanceRow>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        log::warn!("{}: dropping incomplete trailing row", path.display());
        OpenOptions::new()
            .write(true)
            .open(path)
            .and_then(|f| f.set_len(complete as u64))
            .map_err(io_err(path))?;
    }
    text[..complete]
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::BadRow {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn compute_stats(rows: &[InstanceRow], include_fallback: bool) -> RunStats {
    let mut stats = RunStats {
        total: rows.len(),
        succeeded: 0,
        failed: 0,
        fallback: 0,
        excluded_from_metrics: 0,
        samples: 0,
        invalid_samples: 0,
        invalid_rate: None,
        mean_matched_mass: None,
    };
    let mut mass_sum = 0.0;
    let mut mass_n = 0usize;
    for row in rows {
        match row.result() {
            None => {
                stats.failed += 1;
                stats.excluded_from_metrics += 1;
            }
            Some(result) => {
                stats.succeeded += 1;
                if result.fallback {
                    stats.fallback += 1;
                    if !include_fallback {
                        stats.excluded_from_metrics += 1;
                    }
                }
                match &result.provenance {
                    Provenance::Mcr {
                        n_samples,
                        invalid_count,
                        ..
                    } => {
                        stats.samples += n_samples;
                        stats.invalid_samples += invalid_count;
                    }
                    Provenance::Lpr { matched_mass, .. } => {
                        mass_sum += matched_mass;
                        mass_n += 1;
                    }
                }
            }
        }
    }
    if stats.samples > 0 {
        stats.invalid_rate = Some(stats.invalid_samples as f64 / stats.samples as f64);
    }
    if mass_n > 0 {
        stats.mean_matched_mass = Some(mass_sum / mass_n as f64);
    }
    stats
}

/// Builds the backend named by the spec from the registry and runs.
pub fn run(spec: &RunSpec, registry: &BackendRegistry) -> Result<RunOutcome, RunError> {
    spec.validate()?;
    let backend = registry
        .get(&spec.backend)?
        .build(spec.dataset.label_space())?;
    run_with_backend(spec, backend)
}

pub fn run_with_backend(spec: &RunSpec, backend: Arc<dyn Backend>) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    spec.validate_for(backend.as_ref())?;

    let loaded = load_dataset(&spec.dataset_path, spec.dataset)?;
    let manifest = match spec.subsample_n {
        Some(n) => subsample(&loaded.manifest, n, spec.seed)?,
        None => loaded.manifest,
    };
    let space = manifest.label_space();

    let lexicons = match &spec.lexicon_path {
        Some(p) => LexiconSet::from_json(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => LexiconSet::builtin(),
    };
    let templates = match &spec.template_path {
        Some(p) => TemplateSet::from_json(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => TemplateSet::builtin(),
    };
    let style = spec
        .template_style
        .unwrap_or(if backend.descriptor().chat_template {
            TemplateStyle::ChatHumanAssistant
        } else {
            TemplateStyle::Plain
        });
    let template = templates.get(style, spec.prompt_type, space.task_kind())?;
    let lexicon = lexicons.get(space.task_kind(), spec.prompt_type)?;

    let run_id = spec.resolved_run_id();
    let run_dir = spec.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let spec_path = run_dir.join("spec.json");
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes");
    if spec_path.exists() {
        let existing = std::fs::read_to_string(&spec_path).map_err(io_err(&spec_path))?;
        let existing: RunSpec = serde_json::from_str(&existing).map_err(|e| RunError::BadRow {
            path: spec_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut comparable = existing;
        comparable.parallelism = spec.parallelism;
        comparable.output_dir = spec.output_dir.clone();
        if &comparable != spec {
            return Err(RunError::SpecConflict(run_dir));
        }
    } else {
        write_atomic(&spec_path, spec_json.as_bytes())?;
    }

    let cache = Arc::new(ResponseCache::open(&run_dir.join("cache")).map_err(BackendError::from)?);
    let cached = CachedBackend::new(backend.clone(), cache);
    let requests_before = backend.request_count();

    // resume
    let rows_path = run_dir.join("rows.jsonl");
    let in_scope: HashMap<&str, &Instance> = manifest
        .instances
        .iter()
        .map(|i| (i.uid.as_str(), i))
        .collect();
    let mut done: BTreeMap<String, InstanceRow> = BTreeMap::new();
    for row in read_rows(&rows_path)? {
        if row.succeeded() && in_scope.contains_key(row.uid.as_str()) {
            done.insert(row.uid.clone(), row);
        }
    }
    let resumed_rows = done.len();
    let pending: Vec<&Instance> = manifest
        .instances
        .iter()
        .filter(|i| !done.contains_key(&i.uid))
        .collect();
    if resumed_rows > 0 {
        log::info!(
            "{run_id}: resuming with {resumed_rows} finished rows, {} pending",
            pending.len()
        );
    }

    let ctx = EvalContext {
        method: spec.method,
        n_samples: spec.n_samples,
        config: spec.generation_config(),
        backend: &cached,
        lexicon,
        template: &template,
    };
    let mut rows_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&rows_path)
        .map_err(io_err(&rows_path))?;

    let next = AtomicUsize::new(0);
    let workers = spec.parallelism.min(pending.len()).max(1);
    let mut fresh: Vec<InstanceRow> = Vec::with_capacity(pending.len());
    std::thread::scope(|scope| -> Result<(), RunError> {
        let (tx, rx) = mpsc::channel::<Result<InstanceRow, VerbalizationError>>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, ctx) = (&next, &pending, &ctx);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(instance) = pending.get(i) else {
                    break;
                };
                if tx.send(evaluate_instance(instance, ctx)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for row in rx {
            let row = row?;
            let mut line = serde_json::to_vec(&row).expect("row serializes");
            line.push(b'\n');
            rows_file
                .write_all(&line)
                .and_then(|_| rows_file.flush())
                .map_err(io_err(&rows_path))?;
            fresh.push(row);
        }
        Ok(())
    })?;

    let evaluated_rows = fresh.len();
    let mut rows: Vec<InstanceRow> = done.into_values().chain(fresh).collect();
    rows.sort_by(|a, b| a.uid.cmp(&b.uid));

    let stats = compute_stats(&rows, spec.include_fallback);
    let scores: Vec<InstanceScore> = rows
        .iter()
        .filter(|r| spec.include_fallback || !r.result().is_some_and(|res| res.fallback))
        .filter_map(InstanceRow::score)
        .collect();
    let report = if scores.is_empty() {
        None
    } else {
        Some(aggregate(scores).expect("non-empty scores aggregate"))
    };

    let record = RunRecord {
        run_id: run_id.clone(),
        spec: spec.clone(),
        backend_kind: backend.descriptor().kind.to_string(),
        template_style: style,
        lexicon_version: lexicons.version.clone(),
        template_version: templates.version.clone(),
        label_space: space,
        rows,
        report,
        stats,
    };
    let record_json = serde_json::to_string_pretty(&record).expect("record serializes");
    write_atomic(&run_dir.join("record.json"), record_json.as_bytes())?;
    let summary = crate::report::render_summary(
        &summary_rows(std::slice::from_ref(&record)),
        ReportFormat::Csv,
    );
    write_atomic(&run_dir.join("summary.csv"), summary.as_bytes())?;

    let timing = RunTiming {
        wall_seconds: started.elapsed().as_secs_f64(),
        parallelism: spec.parallelism,
        resumed_rows,
        evaluated_rows,
        backend_requests: backend.request_count() - requests_before,
    };
    let timing_json = serde_json::to_string_pretty(&timing).expect("timing serializes");
    write_atomic(&run_dir.join("timing.json"), timing_json.as_bytes())?;

    Ok(RunOutcome {
        record,
        timing,
        run_dir,
    })
}

/// Chance-baseline numbers for a label space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChanceSummary {
    pub dataset: DatasetName,
    pub instances: usize,
    /// `1 / k`.
    pub analytic_accuracy: f64,
    /// Argmax of the uniform distribution (always the first class).
    pub argmax_accuracy: f64,
    pub mean_jsd: f64,
    pub mean_dce: f64,
}

/// Runs the built-in uniform backend (LPR over NS prompts) on a dataset.
pub fn run_chance(
    dataset: DatasetName,
    dataset_path: &Path,
    output_dir: &Path,
    parallelism: usize,
) -> Result<(RunOutcome, ChanceSummary), RunError> {
    let mut spec = RunSpec::new(
        dataset,
        dataset_path,
        crate::backends::UNIFORM_BACKEND_ID,
        Method::Lpr,
        PromptType::NumberSelection,
        output_dir,
    );
    spec.parallelism = parallelism;
    let outcome = run(&spec, &BackendRegistry::default())?;
    let report = outcome
        .record
        .report
        .as_ref()
        .ok_or_else(|| RunError::InvalidSpec("chance run produced no scorable rows".into()))?;
    let summary = ChanceSummary {
        dataset,
        instances: report.per_instance.len(),
        analytic_accuracy: outcome.record.chance_accuracy(),
        argmax_accuracy: report.accuracy,
        mean_jsd: report.mean_jsd,
        mean_dce: report.mean_dce,
    };
    Ok((outcome, summary))
}
