//! Command-line front end: `solve`, `bench`, `report` and `probe`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use codegrad_core::bench::{
    default_jobs, emit_report, load_dataset, run_bench, score_task, BenchReport, DatasetKind, LoadOptions,
    ReportFormat, TaskRow,
};
use codegrad_core::engine::{parse_transcript, EngineRef, PromptTemplates, ScriptedEngine, SharedEngine, ENDPOINT_ENV};
use codegrad_core::refine::{run_task, Engines, LoopContext, RunConfig, TaskStatus};
use codegrad_core::sandbox::{run_probes, visible_probes, Backend, Sandbox, SandboxConfig, SandboxHandle};
use codegrad_core::task::TaskSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_TASK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "codegrad", version, about = "Review-driven, verification-gated code refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the refinement loop on one task and print its trace.
    Solve(SolveArgs),
    /// Run every task of a dataset and write a report.
    Bench(BenchArgs),
    /// Re-render a stored JSON report, optionally against a baseline.
    Report(ReportArgs),
    /// Run a source file against a task's visible probes.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON file with the same schema as the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Forward model id.
    #[arg(long)]
    forward: Option<String>,
    /// Backward model id, or `none` for the draft-only baseline.
    #[arg(long)]
    backward: Option<String>,
    /// Base URL of an OpenAI-compatible endpoint. Falls back to CODEGRAD_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, overrides_with = "no_probes")]
    probes: bool,
    #[arg(long, overrides_with = "probes")]
    no_probes: bool,
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Guest Python interpreter.
    #[arg(long)]
    interpreter: Option<String>,
    #[arg(long, conflicts_with = "lenient_efficiency")]
    strict_efficiency: bool,
    #[arg(long)]
    lenient_efficiency: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Replay canned responses instead of calling a model.
    #[arg(long)]
    scripted_transcript: Option<PathBuf>,
    /// Run guest code through this runner script instead of directly.
    #[arg(long)]
    shim: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Task file (a single task object).
    #[arg(long)]
    task: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// humaneval_jsonl, livecodebench_jsonl or custom_taskspec_json. Inferred from the file name when omitted.
    #[arg(long)]
    format: Option<String>,
    /// HumanEval+ style extra tests, merged by task id.
    #[arg(long)]
    extra_tests: Option<PathBuf>,
    /// `{task_id, category}` lines, merged by task id.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    jobs: Option<usize>,
    /// Run only the first N tasks after filtering.
    #[arg(long)]
    limit: Option<usize>,
    /// Keep tasks whose id contains this text.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Directory for report.json, report.md, report.csv and traces.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// markdown, csv or json.
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    task: PathBuf,
    /// Python source to run.
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value = "python3")]
    interpreter: String,
    /// Run the full test suite instead of the visible probes.
    #[arg(long)]
    all: bool,
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    error: anyhow::Error,
}

fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

fn runtime_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_TASK_FAILED,
        error: error.into(),
    }
}

/// Exit code for a finished `solve`.
pub fn solve_exit_code(status: TaskStatus) -> i32 {
    match status {
        TaskStatus::Accepted | TaskStatus::BaselineDraft => EXIT_OK,
        TaskStatus::UnverifiedBest => EXIT_TASK_FAILED,
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
        Command::Probe(a) => probe(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// File values, then environment, then flags.
fn resolve_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => read_json::<RunConfig>(path)?,
        None => RunConfig::default(),
    };
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty()));
    if let Some(url) = &endpoint {
        config.forward.endpoint_url = Some(url.clone());
        if let Some(b) = config.backward.as_mut() {
            b.endpoint_url = Some(url.clone());
        }
    }
    if let Some(model) = &args.forward {
        config.forward.model_id = Some(model.clone());
    }
    match args.backward.as_deref() {
        Some("none") => config.backward = None,
        Some(model) => {
            let url = endpoint
                .or_else(|| config.forward.endpoint_url.clone())
                .unwrap_or_default();
            let b = config
                .backward
                .get_or_insert_with(|| EngineRef::http("backward", url, model));
            b.model_id = Some(model.to_string());
        }
        None => {}
    }
    if args.scripted_transcript.is_some() {
        config.forward = EngineRef::scripted("forward");
        if config.backward.is_some() {
            config.backward = Some(EngineRef::scripted("backward"));
        }
    }
    if args.probes {
        config.probes_enabled = true;
    }
    if args.no_probes {
        config.probes_enabled = false;
    }
    if let Some(n) = args.max_iterations {
        config.max_iterations = n;
    }
    if let Some(i) = &args.interpreter {
        config.interpreter = i.clone();
    }
    if args.strict_efficiency {
        config.strict_efficiency = true;
        config.lenient_efficiency = false;
    }
    if args.lenient_efficiency {
        config.lenient_efficiency = true;
        config.strict_efficiency = false;
    }
    if let Some(seed) = args.seed {
        config.random_seed = Some(seed);
    }
    if let Some(dir) = &args.templates {
        config.template_dir = Some(dir.clone());
    }
    config.validate()?;
    tracing::info!(config = %serde_json::to_string(&config).unwrap_or_default(), "effective configuration");
    Ok(config)
}

fn engines(config: &RunConfig, transcript: Option<&Path>) -> anyhow::Result<Engines> {
    if let Some(path) = transcript {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let t = parse_transcript(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let forward: SharedEngine = Arc::new(ScriptedEngine::new(config.forward.name.clone(), t.forward));
        let backward = config.backward.as_ref().map(|b| {
            Arc::new(ScriptedEngine::new(b.name.clone(), t.backward.clone())) as SharedEngine
        });
        return Ok(Engines { forward, backward });
    }
    Ok(Engines {
        forward: config.forward.connect()?,
        backward: config.backward.as_ref().map(EngineRef::connect).transpose()?,
    })
}

fn sandbox(interpreter: &str, shim: Option<&Path>, workers: usize) -> anyhow::Result<SandboxHandle> {
    let mut sc = SandboxConfig::new(interpreter);
    sc.max_workers = workers.max(1);
    if let Some(path) = shim {
        sc.backend = Backend::Shim;
        sc.shim_path = Some(path.to_path_buf());
    }
    Ok(Sandbox::new(sc)?)
}

fn templates(config: &RunConfig) -> anyhow::Result<PromptTemplates> {
    Ok(match &config.template_dir {
        Some(dir) => PromptTemplates::with_overrides(dir)?,
        None => PromptTemplates::builtin(),
    })
}

fn load_single_task(path: &Path) -> anyhow::Result<TaskSpec> {
    let loaded = load_dataset(DatasetKind::CustomTaskspecJson, path, &LoadOptions::default())?;
    if let Some(s) = loaded.skipped.first() {
        bail!("{}: {}", path.display(), s.reason);
    }
    match <[TaskSpec; 1]>::try_from(loaded.tasks) {
        Ok([task]) => Ok(task),
        Err(tasks) => bail!("{} holds {} tasks; solve takes exactly one", path.display(), tasks.len()),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn solve(args: SolveArgs) -> Result<i32, Failure> {
    let config = resolve_config(&args.run).map_err(config_error)?;
    let task = load_single_task(&args.task).map_err(config_error)?;
    let engines = engines(&config, args.run.scripted_transcript.as_deref()).map_err(config_error)?;
    let sb = sandbox(&config.interpreter, args.run.shim.as_deref(), 1).map_err(config_error)?;
    let templates = templates(&config).map_err(config_error)?;
    let ctx = LoopContext {
        sandbox: &sb,
        templates: &templates,
        config: &config,
    };
    let mut result = run_task(&ctx, &engines, &task).map_err(runtime_error)?;
    score_task(&sb, &task, &mut result, &config.sandbox_limits).map_err(runtime_error)?;

    let mut json = result.trace_json();
    json["config"] = serde_json::to_value(&config).map_err(runtime_error)?;
    let text = serde_json::to_string_pretty(&json).map_err(runtime_error)? + "\n";
    write_output(args.out.as_deref(), &text).map_err(runtime_error)?;
    eprintln!(
        "{}: {} at iteration {}, hidden tests {}",
        result.task_id,
        result.status.as_str(),
        result.final_candidate.iteration,
        if result.final_tests_passed == Some(true) { "passed" } else { "failed" },
    );
    Ok(solve_exit_code(result.status))
}

fn bench(args: BenchArgs) -> Result<i32, Failure> {
    let config = resolve_config(&args.run).map_err(config_error)?;
    let kind = match &args.format {
        Some(f) => DatasetKind::parse(f).ok_or_else(|| config_error(anyhow!("unknown dataset format `{f}`")))?,
        None => DatasetKind::infer(&args.dataset).ok_or_else(|| {
            config_error(anyhow!("cannot infer the format of {}; pass --format", args.dataset.display()))
        })?,
    };
    let options = LoadOptions {
        extra_tests: args.extra_tests.clone(),
        categories: args.categories.clone(),
    };
    let loaded = load_dataset(kind, &args.dataset, &options).map_err(config_error)?;
    for s in &loaded.skipped {
        tracing::warn!(source = %s.source, line = s.line, reason = %s.reason, "skipped record");
    }
    let mut tasks = loaded.tasks;
    if let Some(f) = &args.filter {
        tasks.retain(|t| t.task_id.contains(f.as_str()));
    }
    if let Some(n) = args.limit {
        tasks.truncate(n);
    }
    if tasks.is_empty() {
        return Err(config_error(anyhow!("no tasks selected")));
    }

    // Scripted responses are consumed in order, so their runs stay sequential.
    let jobs = if args.run.scripted_transcript.is_some() {
        1
    } else {
        args.jobs.unwrap_or_else(default_jobs).max(1)
    };
    let engines = engines(&config, args.run.scripted_transcript.as_deref()).map_err(config_error)?;
    let sb = sandbox(&config.interpreter, args.run.shim.as_deref(), jobs).map_err(config_error)?;
    let templates = templates(&config).map_err(config_error)?;
    let ctx = LoopContext {
        sandbox: &sb,
        templates: &templates,
        config: &config,
    };
    let results = run_bench(&ctx, &engines, &tasks, jobs).map_err(runtime_error)?;

    let rows: Vec<TaskRow> = tasks.iter().zip(&results).map(|(t, r)| TaskRow::new(t, r)).collect();
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| if config.backward.is_some() { "codegrad" } else { "null" }.to_string());
    let report = BenchReport::new(label, args.dataset.display().to_string(), config, rows, loaded.skipped.len())
        .map_err(runtime_error)?;

    if let Some(dir) = &args.out {
        let write = || -> anyhow::Result<()> {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), emit_report(&report, ReportFormat::Json, None))?;
            fs::write(dir.join("report.md"), emit_report(&report, ReportFormat::Markdown, None))?;
            fs::write(dir.join("report.csv"), emit_report(&report, ReportFormat::Csv, None))?;
            let mut traces = String::new();
            for r in &results {
                traces.push_str(&serde_json::to_string(&r.trace_json())?);
                traces.push('\n');
            }
            fs::write(dir.join("traces.jsonl"), traces)?;
            Ok(())
        };
        write().with_context(|| format!("writing reports to {}", dir.display())).map_err(runtime_error)?;
    }
    write_output(None, &emit_report(&report, ReportFormat::Markdown, None)).map_err(runtime_error)?;
    Ok(EXIT_OK)
}

fn report(args: ReportArgs) -> Result<i32, Failure> {
    let format = ReportFormat::parse(&args.format)
        .ok_or_else(|| config_error(anyhow!("unknown report format `{}`", args.format)))?;
    let current: BenchReport = read_json(&args.input).map_err(config_error)?;
    let baseline: Option<BenchReport> = args.baseline.as_deref().map(read_json).transpose().map_err(config_error)?;
    let text = emit_report(&current, format, baseline.as_ref());
    write_output(args.out.as_deref(), &text).map_err(runtime_error)?;
    Ok(EXIT_OK)
}

fn probe(args: ProbeArgs) -> Result<i32, Failure> {
    let task = load_single_task(&args.task).map_err(config_error)?;
    let source = fs::read_to_string(&args.source)
        .with_context(|| format!("reading {}", args.source.display()))
        .map_err(config_error)?;
    let sb = sandbox(&args.interpreter, None, 1).map_err(config_error)?;
    let cases = if args.all {
        task.test_suite.cases.iter().chain(&task.test_suite.edge_probes).cloned().collect()
    } else {
        visible_probes(&task)
    };
    let limits = codegrad_core::sandbox::ResourceLimits::default();
    let report = run_probes(&sb, &source, task.io_mode, task.entry_point.as_deref(), &cases, &limits)
        .map_err(runtime_error)?;
    write_output(None, &report.render()).map_err(runtime_error)?;
    let matched = report.probes.iter().filter(|p| p.passed()).count();
    eprintln!("{matched}/{} matched", report.probes.len());
    Ok(if report.all_matched() { EXIT_OK } else { EXIT_TASK_FAILED })
}
