//! Reconstructing categorical label distributions from language-model
//! outputs and scoring them against human annotation distributions.
//!
//! Two estimators are provided: Monte-Carlo reconstruction (MCR) over sampled
//! completions and log-probability reconstruction (LPR) over first-token
//! log probabilities. Runs are orchestrated by [`runner`], compared by
//! [`report`].

pub mod backends;
pub mod data;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod reconstruction;
pub mod report;
pub mod rng;
pub mod runner;
pub mod verbalization;

pub use backends::{
    Backend, BackendDescriptor, BackendError, BackendKind, BackendRegistry, GenerationConfig,
    TokenLogprob,
};
pub use data::{load_dataset, DataError, DatasetManifest, DatasetName, Instance};
pub use labels::{CategoricalDistribution, ClassId, LabelSpace, TaskKind};
pub use metrics::{dce, jsd, kl, MetricReport};
pub use reconstruction::{lpr, mcr, Method, ReconstructionResult};
pub use report::{emit_report, ReportFormat};
pub use runner::{run, run_with_backend, RunOutcome, RunRecord, RunSpec};
pub use verbalization::{OptionLexicon, PromptTemplate, PromptType, TemplateStyle};
