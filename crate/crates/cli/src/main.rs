use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use labeldist::data::detect_dataset;
use labeldist::ingest::ingest_file;
use labeldist::report::{emit_report, ReportFormat};
use labeldist::runner::{run, run_chance, RunRecord, RunSpec, DEFAULT_PARALLELISM};
use labeldist::{BackendRegistry, DatasetName, Method, PromptType, TemplateStyle};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Reconstruct label distributions from language models and score them
/// against human annotation distributions.
#[derive(Parser)]
#[command(name = "labeldist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an upstream release file into normalized JSONL.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// alpha, snli, mnli or pk2019.
        #[arg(long)]
        dataset_name: DatasetName,
    },
    /// Evaluate one backend with one method and prompt type.
    Run(RunArgs),
    /// Evaluate the uniform chance baseline.
    Chance {
        #[arg(long)]
        dataset: PathBuf,
        /// Inferred from the file when omitted.
        #[arg(long)]
        dataset_name: Option<DatasetName>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
        parallelism: usize,
    },
    /// Build comparison tables from finished runs.
    Report {
        /// Run directories, or directories containing run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Plain,
    Chat,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mcr,
    Lpr,
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptArg {
    Os,
    Ns,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Normalized dataset JSONL.
    #[arg(long)]
    dataset: PathBuf,
    /// Inferred from the file when omitted.
    #[arg(long)]
    dataset_name: Option<DatasetName>,
    #[arg(long)]
    backend: String,
    /// TOML file declaring backends (`uniform` is always available).
    #[arg(long)]
    backends_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum)]
    prompt: PromptArg,
    /// Samples per instance (MCR).
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Top-k log probabilities requested (LPR).
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate a seeded random subset of this size.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    run_id: Option<String>,
    /// Lexicon JSON replacing the built-in lexicons.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Template JSON replacing the built-in templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Defaults to the backend's declared style.
    #[arg(long, value_enum)]
    template_style: Option<Style>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Leave uniform-fallback reconstructions out of the metrics.
    #[arg(long)]
    exclude_fallback: bool,
}

fn dataset_name(path: &Path, given: Option<DatasetName>) -> Result<DatasetName> {
    match given {
        Some(name) => Ok(name),
        None => detect_dataset(path)
            .with_context(|| format!("cannot infer the dataset of {}", path.display())),
    }
}

fn print_record(record: &RunRecord, run_dir: &Path) {
    let s = &record.stats;
    println!("run {} -> {}", record.run_id, run_dir.display());
    println!(
        "instances {}  succeeded {}  failed {}  fallback {}",
        s.total, s.succeeded, s.failed, s.fallback
    );
    if let Some(rate) = s.invalid_rate {
        println!("invalid sample rate {rate:.4}");
    }
    if let Some(mass) = s.mean_matched_mass {
        println!("mean matched mass {mass:.4}");
    }
    match &record.report {
        Some(r) => {
            print!(
                "accuracy {:.4}  JSD {:.4}  DCE {:.4}",
                r.accuracy, r.mean_jsd, r.mean_dce
            );
            if let Ok(change) = r.accuracy_change() {
                print!("  accuracy change {change:+.2}");
            }
            println!();
        }
        None => println!("no instance could be scored"),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let registry = match &args.backends_config {
        Some(p) => BackendRegistry::load(p)?,
        None => BackendRegistry::default(),
    };
    let name = dataset_name(&args.dataset, args.dataset_name)?;
    let method = match args.method {
        MethodArg::Mcr => Method::Mcr,
        MethodArg::Lpr => Method::Lpr,
    };
    let prompt = match args.prompt {
        PromptArg::Os => PromptType::OptionSelection,
        PromptArg::Ns => PromptType::NumberSelection,
    };
    let mut spec = RunSpec::new(
        name,
        &args.dataset,
        &args.backend,
        method,
        prompt,
        &args.out,
    );
    spec.n_samples = args.n;
    spec.k = args.k;
    spec.seed = args.seed;
    spec.subsample_n = args.subsample;
    spec.parallelism = args.parallelism;
    spec.run_id = args.run_id;
    spec.lexicon_path = args.lexicon;
    spec.template_path = args.templates;
    spec.template_style = args.template_style.map(|s| match s {
        Style::Plain => TemplateStyle::Plain,
        Style::Chat => TemplateStyle::ChatHumanAssistant,
    });
    spec.temperature = args.temperature;
    spec.max_tokens = args.max_tokens;
    spec.include_fallback = !args.exclude_fallback;
    let outcome = run(&spec, &registry)?;
    print_record(&outcome.record, &outcome.run_dir);
    Ok(if outcome.has_failures() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

/// `record.json` files directly in each directory or one level below.
fn find_records(roots: &[PathBuf]) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    for root in roots {
        let direct = root.join("record.json");
        if direct.is_file() {
            paths.push(direct);
            continue;
        }
        let entries =
            std::fs::read_dir(root).with_context(|| format!("reading {}", root.display()))?;
        for entry in entries {
            let candidate = entry?.path().join("record.json");
            if candidate.is_file() {
                paths.push(candidate);
            }
        }
    }
    paths.sort();
    paths.dedup();
    paths
        .iter()
        .map(|p| RunRecord::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest {
            input,
            output,
            dataset_name,
        } => {
            let summary = ingest_file(&input, &output, dataset_name)?;
            println!(
                "wrote {} records to {} ({} loadable, {} excluded, {} warnings)",
                summary.written,
                output.display(),
                summary.loadable,
                summary.excluded,
                summary.warnings
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => cmd_run(args),
        Command::Chance {
            dataset,
            dataset_name: name,
            out,
            parallelism,
        } => {
            let name = dataset_name(&dataset, name)?;
            let (outcome, summary) = run_chance(name, &dataset, &out, parallelism)?;
            print_record(&outcome.record, &outcome.run_dir);
            println!(
                "{}: chance accuracy {:.4} (analytic), {:.4} (argmax)  JSD {:.4}  DCE {:.4}",
                name.display(),
                summary.analytic_accuracy,
                summary.argmax_accuracy,
                summary.mean_jsd,
                summary.mean_dce
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { runs, format, out } => {
            let records = find_records(&runs)?;
            if records.is_empty() {
                bail!("no record.json found under the given directories");
            }
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Jsonl => ReportFormat::Jsonl,
                Format::Markdown => ReportFormat::Markdown,
            };
            for path in emit_report(&records, format, &out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
