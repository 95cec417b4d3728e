//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vislint::catalog;
use vislint::client::{
    ChatBackend, DecodeMode, HttpChatClient, ModelConfig, ScriptedBackend, API_KEY_ENV,
};
use vislint::dataset::{self, SamplePlan};
use vislint::metrics::InvalidPolicy;
use vislint::prompt::{FewShotExemplar, Strategy};
use vislint::report::{RenderFormat, Thresholds};
use vislint::runner::{self, LintConfig, RunConfig};

#[derive(Parser)]
#[command(
    name = "vislint",
    version,
    about = "Guideline-compliance linting and evaluation for scientific diagrams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lint a single image or every record of a manifest.
    Lint(LintArgs),
    /// Run a prompting strategy over an annotated manifest and score it.
    Experiment(ExperimentArgs),
    /// Rescore a persisted answers file against a manifest, offline.
    Evaluate(EvaluateArgs),
    /// Draw a stratified sample from an ingestion pool.
    Sample(SampleArgs),
    /// Print the question catalog.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// Chat-completions endpoint base URL (e.g. http://localhost:8000/v1).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent with each request.
    #[arg(long)]
    model: Option<String>,
    /// Answer from a scripted mock instead of a live endpoint.
    #[arg(long, value_name = "script.json", conflicts_with = "endpoint")]
    mock: Option<PathBuf>,
    /// API key; defaults to the VISLINT_API_KEY environment variable.
    #[arg(long)]
    api_key: Option<String>,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Retry budget for transport failures (at most 5).
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    /// Maximum tokens per completion.
    #[arg(long, default_value_t = 512)]
    max_tokens: u32,
    /// Use sampling instead of the server's default decoding.
    #[arg(long)]
    sampling: bool,
    /// Sampling temperature (sent only with --sampling).
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    /// Target a model without system-prompt support.
    #[arg(long)]
    chart_specific: bool,
}

impl BackendArgs {
    fn build(&self) -> Result<(Box<dyn ChatBackend>, String)> {
        if let Some(script) = &self.mock {
            let backend = ScriptedBackend::load(script)
                .with_context(|| format!("loading mock script {}", script.display()))?;
            let name = self.model.clone().unwrap_or_else(|| "mock".to_string());
            return Ok((Box::new(backend), name));
        }
        let endpoint = self
            .endpoint
            .as_ref()
            .context("either --endpoint/--model or --mock is required")?;
        let model = self
            .model
            .as_ref()
            .context("--model is required with --endpoint")?;
        let mut config = ModelConfig::new(endpoint, model);
        config.api_key = self
            .api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok());
        config.timeout = std::time::Duration::from_secs(self.timeout);
        config.max_retries = self.max_retries;
        config.max_tokens = self.max_tokens;
        config.temperature = self.temperature;
        config.decode_mode = if self.sampling {
            DecodeMode::Sampling
        } else {
            DecodeMode::ServerDefault
        };
        let client = HttpChatClient::new(config)?;
        Ok((Box::new(client), model.clone()))
    }
}

#[derive(Args)]
struct LintArgs {
    /// Image file to lint.
    #[arg(long, conflicts_with = "manifest")]
    image: Option<PathBuf>,
    /// Manifest whose records should all be linted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "individual")]
    strategy: Strategy,
    #[command(flatten)]
    backend: BackendArgs,
    /// Threshold overrides (JSON: {"max_lines": 5, ...}).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Few-shot exemplars (JSON array of {question_id, image, answer}).
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Directory for report files; reports go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: RenderFormat,
    /// Exit non-zero when any violation-severity finding is reported.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Strategy to run; repeat the flag to compare several.
    #[arg(long, required = true)]
    strategy: Vec<Strategy>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Output directory for answers.jsonl and report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Score invalid answers as misclassifications ("penalize") or drop them
    /// ("drop").
    #[arg(long, default_value = "penalize", value_parser = parse_policy)]
    invalid_policy: InvalidPolicy,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Answers JSONL produced by `experiment`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value = "penalize", value_parser = parse_policy)]
    invalid_policy: InvalidPolicy,
    /// Directory for report files; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: RenderFormat,
}

#[derive(Args)]
struct SampleArgs {
    /// Ingestion pool manifest to draw from.
    #[arg(long)]
    manifest: PathBuf,
    /// Sampling plan (JSON: {"seed": 7, "targets": {"line": 200, ...}});
    /// defaults to the built-in plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Seed override for the built-in plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Output manifest path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CatalogArgs {
    /// Emit the catalog as JSON (for prompt auditing).
    #[arg(long)]
    json: bool,
}

/// Print to stdout, exiting quietly when the consumer closed the pipe
/// (`vislint ... | head` must not panic).
fn emit(text: impl AsRef<str>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_ref().as_bytes()).is_err() {
        std::process::exit(0);
    }
}

fn emitln(text: impl AsRef<str>) {
    emit(text);
    emit("\n");
}

fn parse_format(s: &str) -> Result<RenderFormat, String> {
    match s {
        "json" => Ok(RenderFormat::Json),
        "markdown" | "md" => Ok(RenderFormat::Markdown),
        other => Err(format!("unknown format {other:?}; expected json|markdown")),
    }
}

fn parse_policy(s: &str) -> Result<InvalidPolicy, String> {
    match s {
        "penalize" => Ok(InvalidPolicy::Penalize),
        "drop" => Ok(InvalidPolicy::Drop),
        other => Err(format!("unknown policy {other:?}; expected penalize|drop")),
    }
}

fn load_thresholds(path: Option<&PathBuf>) -> Result<Thresholds> {
    match path {
        None => Ok(Thresholds::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading thresholds {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing thresholds {}", p.display()))
        }
    }
}

fn load_exemplars(path: Option<&PathBuf>) -> Result<Option<Vec<FewShotExemplar>>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading exemplars {}", p.display()))?;
            let exemplars: Vec<FewShotExemplar> = serde_json::from_str(&text)
                .with_context(|| format!("parsing exemplars {}", p.display()))?;
            Ok(Some(exemplars))
        }
    }
}

fn print_diagnostics(diagnostics: &[String]) {
    for d in diagnostics {
        eprintln!("warning: {d}");
    }
}

fn cmd_lint(args: LintArgs) -> Result<ExitCode> {
    let (backend, model_name) = args.backend.build()?;
    let config = LintConfig {
        strategy: args.strategy,
        model_name,
        thresholds: load_thresholds(args.thresholds.as_ref())?,
        parallelism: args.parallelism.max(1),
        chart_specific: args.backend.chart_specific,
        exemplars: load_exemplars(args.exemplars.as_ref())?,
    };

    let reports = match (&args.image, &args.manifest) {
        (Some(image), None) => {
            let (report, diagnostics) = runner::lint_image(&config, image, backend.as_ref())?;
            print_diagnostics(&diagnostics);
            vec![report]
        }
        (None, Some(manifest)) => {
            let (reports, diagnostics) =
                runner::lint_manifest(&config, manifest, backend.as_ref())?;
            print_diagnostics(&diagnostics);
            reports
        }
        _ => bail!("exactly one of --image or --manifest is required"),
    };

    let mut violations = false;
    for report in &reports {
        violations |= report.has_violations();
        let rendered = report.render(args.format);
        match &args.out {
            None => emit(&rendered),
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let ext = if args.format == RenderFormat::Json {
                    "json"
                } else {
                    "md"
                };
                let path = dir.join(format!("lint_{}.{ext}", report.image_id));
                std::fs::write(&path, rendered)
                    .with_context(|| format!("writing {}", path.display()))?;
                emitln(format!("wrote {}", path.display()));
            }
        }
    }

    if args.strict && violations {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let (backend, model_name) = args.backend.build()?;
    let thresholds = load_thresholds(args.thresholds.as_ref())?;
    let exemplars = load_exemplars(args.exemplars.as_ref())?;

    for strategy in &args.strategy {
        let config = RunConfig {
            strategy: *strategy,
            model_name: model_name.clone(),
            thresholds,
            parallelism: args.parallelism.max(1),
            out_dir: args.out.clone(),
            chart_specific: args.backend.chart_specific,
            exemplars: exemplars.clone(),
            invalid_policy: args.invalid_policy,
        };
        let outcome = runner::run_experiment(&config, &args.manifest, backend.as_ref())?;
        print_diagnostics(&outcome.diagnostics);
        emitln(format!(
            "strategy {strategy}: {} new answers, report at {}",
            outcome.new_rows,
            outcome.report_json_path.display()
        ));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let records = dataset::load_manifest(&args.manifest)?;
    let rows = runner::read_answers(&args.predictions)?;
    let thresholds = load_thresholds(args.thresholds.as_ref())?;
    let reports = runner::score_answers(&rows, &records, &thresholds, args.invalid_policy)?;
    if reports.is_empty() {
        bail!("no answer rows found in {}", args.predictions.display());
    }
    for report in &reports {
        let rendered = report.render(args.format);
        match &args.out {
            None => emit(&rendered),
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let ext = if args.format == RenderFormat::Json {
                    "json"
                } else {
                    "md"
                };
                let path = dir.join(format!(
                    "report_{}_{}.{ext}",
                    report.strategy,
                    report.model.replace(['/', ' '], "_")
                ));
                std::fs::write(&path, rendered)
                    .with_context(|| format!("writing {}", path.display()))?;
                emitln(format!("wrote {}", path.display()));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode> {
    let pool = dataset::load_pool(&args.manifest)?;
    let mut plan = match &args.plan {
        Some(path) => SamplePlan::load(path)?,
        None => SamplePlan::default_plan(args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let sample = dataset::stratified_sample(&pool, &plan)?;
    dataset::write_manifest(&args.out, &sample)?;
    emitln(format!(
        "sampled {} of {} records into {}",
        sample.len(),
        pool.len(),
        args.out.display()
    ));
    Ok(ExitCode::SUCCESS)
}

fn cmd_catalog(args: CatalogArgs) -> Result<ExitCode> {
    if args.json {
        let questions: Vec<serde_json::Value> = catalog::questions()
            .iter()
            .map(|q| {
                serde_json::json!({
                    "id": q.id,
                    "text": q.text,
                    "kind": q.kind,
                })
            })
            .collect();
        let types: Vec<&str> = catalog::DiagramType::ALL.iter().map(|t| t.name()).collect();
        let out = serde_json::json!({
            "diagram_types": types,
            "questions": questions,
        });
        emitln(serde_json::to_string_pretty(&out)?);
    } else {
        emitln(format!(
            "Diagram types: {}\n",
            catalog::DiagramType::ALL.map(|t| t.name()).join(", ")
        ));
        for q in catalog::questions() {
            let applicable: Vec<String> = catalog::DiagramType::ALL
                .iter()
                .filter(|t| {
                    catalog::is_applicable(
                        q.id,
                        **t,
                        &catalog::ApplicabilityFlags {
                            legend_present: Some(true),
                            ..Default::default()
                        },
                    )
                })
                .map(|t| t.name().to_string())
                .collect();
            let scope = if applicable.len() == catalog::DiagramType::ALL.len() {
                "all types".to_string()
            } else {
                applicable.join(", ")
            };
            emitln(format!(
                "{:2}. [{:?}] {}\n    applies to: {scope}\n",
                q.id, q.kind, q.text
            ));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Lint(args) => cmd_lint(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Catalog(args) => cmd_catalog(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn format_and_policy_parsers() {
        assert_eq!(parse_format("json").unwrap(), RenderFormat::Json);
        assert_eq!(parse_format("markdown").unwrap(), RenderFormat::Markdown);
        assert!(parse_format("yaml").is_err());
        assert_eq!(parse_policy("drop").unwrap(), InvalidPolicy::Drop);
        assert!(parse_policy("ignore").is_err());
    }
}
