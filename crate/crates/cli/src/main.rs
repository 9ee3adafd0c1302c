use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pkgraph::config::Config;
use pkgraph::engine::{developer_keywords, ranking_table, Engine, Filters, RecommendRequest, ServiceError};
use pkgraph::error::{failed, CliError};
use pkgraph::evaluate::{classification_report, mcnemar_report, wilcoxon_report, EvalReport};
use pkgraph::pipeline::{self, BuildOptions, IngestPlan, Staging};
use pkgraph_core::analytics::{availability_split, keyword_frequency, ranked_table, ranked_tsv, top_k_usage, BucketSpec};
use pkgraph_core::evaluation::sample_size;
use pkgraph_core::graph::{QualityAttribute, Taxonomy};
use pkgraph_core::{load_snapshot, save_snapshot, Execution, KnowledgeGraph};
use pkgraph_ingest::{Endpoints, Ingest};

#[derive(Parser)]
#[command(name = "pkgraph", version, about = "Build and query a package-selection knowledge graph")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "PKGRAPH_CONFIG")]
    config: Option<PathBuf>,
    /// Run scans and ranking on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch repositories, registry metadata, advisories and reviews into a staging directory.
    Ingest(IngestArgs),
    /// Count imports over a corpus of Python sources.
    Scan(ScanArgs),
    /// Merge staging data and a scan into a sealed snapshot.
    BuildGraph(BuildArgs),
    /// Print usage, availability or keyword reports for a snapshot.
    Analyze(AnalyzeArgs),
    /// Rank packages for one user story.
    Recommend(RecommendArgs),
    /// Run a statistical evaluation over a TSV file.
    Eval(EvalArgs),
    /// Serve the JSON API over a snapshot.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Replay,
    Record,
    Live,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    staging: PathBuf,
    /// Taxonomy term to search repositories for (repeatable).
    #[arg(long = "term")]
    terms: Vec<String>,
    /// Package to fetch metadata, advisories and reviews for (repeatable).
    #[arg(long = "package")]
    packages: Vec<String>,
    /// Also fetch every registry or unresolved package found by a scan.
    #[arg(long)]
    packages_from_scan: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "replay")]
    mode: Mode,
    /// Fixture bundle read in replay mode and written in record mode.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Corpus root; defaults to the staging corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Staging directory whose registry packages drive resolution.
    #[arg(long)]
    staging: Option<PathBuf>,
    /// File with one registry package name per line.
    #[arg(long)]
    registry_index: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip user-topic extraction from comments and docstrings.
    #[arg(long)]
    no_topics: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    staging: PathBuf,
    #[arg(long)]
    scan: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Build timestamp in seconds since the epoch; defaults to now.
    #[arg(long)]
    timestamp: Option<i64>,
    /// Taxonomy file, one term per line; defaults to the built-in taxonomy.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Usage,
    Availability,
    Keywords,
    TopUsage,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Table,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    report: Report,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Rows in ranked reports.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Total scripts scanned, the denominator for top-usage shares.
    #[arg(long)]
    total_scripts: Option<u64>,
    /// Scan output to read the script total from.
    #[arg(long)]
    scan: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    story: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    exclude_vulnerable: bool,
    #[arg(long)]
    min_quality: Option<f64>,
    /// Quality attribute every result must have evidence for (repeatable).
    #[arg(long = "require")]
    required: Vec<QualityAttribute>,
    #[arg(long)]
    runtime: Option<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    #[command(subcommand)]
    test: EvalTest,
}

#[derive(Subcommand)]
enum EvalTest {
    /// Precision, recall and F1 from `item_id, gold, predicted` rows.
    Classification {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "positive")]
        positive: String,
    },
    /// McNemar's test from `item_id, a_hit, b_hit` rows.
    Mcnemar {
        #[arg(long)]
        input: PathBuf,
    },
    /// Wilcoxon signed-rank test from `item_id, a_score, b_score` rows.
    Wilcoxon {
        #[arg(long)]
        input: PathBuf,
    },
    /// Required sample size for estimating a proportion.
    SampleSize {
        #[arg(long)]
        population: Option<u64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("PKGRAPH_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(filter)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = %format!("{e:#}"), "command failed");
            eprintln!("pkgraph: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    let execution = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Ingest(a) => ingest(a, &config),
        Command::Scan(a) => scan(a, execution),
        Command::BuildGraph(a) => build(a),
        Command::Analyze(a) => analyze(a),
        Command::Recommend(a) => recommend_cmd(a, &config, execution),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a, &config),
    }
}

fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).context("writing output")?;
    if !text.ends_with('\n') {
        out.write_all(b"\n").context("writing output")?;
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    emit(&serde_json::to_string_pretty(value).map_err(failed)?)
}

fn snapshot_path(graph: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let path = graph.ok_or_else(|| CliError::MissingInput("no snapshot given; pass --graph <file>".into()))?;
    if !path.is_file() {
        return Err(CliError::MissingInput(format!("snapshot {} does not exist", path.display())));
    }
    Ok(path)
}

fn open_graph(graph: Option<PathBuf>) -> Result<KnowledgeGraph, CliError> {
    let path = snapshot_path(graph)?;
    load_snapshot(&path).with_context(|| format!("loading {}", path.display())).map_err(CliError::Failed)
}

fn ingest(a: IngestArgs, config: &Config) -> Result<(), CliError> {
    let endpoints = Endpoints::from_env();
    let client = match a.mode {
        Mode::Replay => {
            let dir = a.fixtures.ok_or_else(|| CliError::MissingInput("replay mode needs --fixtures <dir>".into()))?;
            if !dir.is_dir() {
                return Err(CliError::MissingInput(format!("fixture bundle {} does not exist", dir.display())));
            }
            Ingest::replay(&dir, endpoints, config.fetch)
        }
        Mode::Record => {
            let dir = a.fixtures.ok_or_else(|| CliError::Invalid("record mode needs --fixtures <dir>".into()))?;
            Ingest::recording(endpoints, config.fetch, &dir)
        }
        Mode::Live => Ingest::live(endpoints, config.fetch),
    }
    .map_err(failed)?;
    let mut packages = a.packages;
    if let Some(scan) = &a.packages_from_scan {
        packages.extend(pipeline::packages_from_scan(&pipeline::load_scan(scan)?));
    }
    if a.terms.is_empty() && packages.is_empty() {
        return Err(CliError::Invalid("nothing to ingest; pass --term or --package".into()));
    }
    let plan = IngestPlan {
        terms: a.terms,
        packages,
        settings: config.ingest.clone(),
    };
    let summary = pipeline::run_ingest(&client, &plan, &a.staging)?;
    for w in &summary.warnings {
        tracing::warn!(warning = %w, "ingest");
    }
    emit_json(&summary)
}

fn read_registry_index(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("registry index {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn scan(a: ScanArgs, execution: Execution) -> Result<(), CliError> {
    let staging = a.staging.as_deref().map(Staging::load).transpose()?;
    let mut registry: Vec<String> = staging.iter().flat_map(|s| s.registry_names().map(str::to_string)).collect();
    if let Some(index) = &a.registry_index {
        registry.extend(read_registry_index(index)?);
    }
    let corpus = match (a.corpus, &staging) {
        (Some(c), _) => c,
        (None, Some(s)) => s.corpus_dir(),
        (None, None) => return Err(CliError::Invalid("pass --corpus or --staging".into())),
    };
    let report = pipeline::run_scan(&corpus, registry.iter().map(String::as_str), execution, !a.no_topics)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    pipeline::write_scan(&report, &a.out)?;
    tracing::info!(
        files = report.files_scanned,
        skipped = report.skipped.len(),
        packages = report.usage.len(),
        "scan complete"
    );
    emit(&format!(
        "scanned {} files ({} skipped); {} packages, {} unresolved top-level modules",
        report.files_scanned,
        report.skipped.len(),
        report.usage.len(),
        report.unresolved.len()
    ))
}

fn now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

fn build(a: BuildArgs) -> Result<(), CliError> {
    let staging = Staging::load(&a.staging)?;
    let scan = a.scan.as_deref().map(pipeline::load_scan).transpose()?;
    let taxonomy = a
        .taxonomy
        .as_deref()
        .map(|p| {
            std::fs::read_to_string(p)
                .map(|t| Taxonomy::parse(&t))
                .map_err(|e| CliError::MissingInput(format!("taxonomy {}: {e}", p.display())))
        })
        .transpose()?;
    let opts = BuildOptions {
        taxonomy,
        timestamp: a.timestamp.unwrap_or_else(now),
    };
    let graph = pipeline::build_graph(&staging, scan.as_ref(), &opts)?;
    save_snapshot(&graph, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    emit(&format!("wrote {} with {} packages", a.out.display(), graph.package_count()))
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let graph = open_graph(a.graph)?;
    match a.report {
        Report::Usage => {
            let report = Engine::new(graph, Default::default()).map_err(failed)?.usage_report();
            match a.format {
                Format::Tsv => emit(&report.to_tsv()),
                Format::Table => emit(&report.render_table()),
                Format::Json => emit_json(&report),
            }
        }
        Report::Availability => {
            let split = availability_split(graph.packages().map(|p| (p.name.as_str(), p.registry_available)));
            match a.format {
                Format::Tsv => emit(&split.to_tsv()),
                Format::Table => emit(&split.render_table()),
                Format::Json => emit_json(&split),
            }
        }
        Report::Keywords => {
            let report = keyword_frequency(developer_keywords(&graph), &BucketSpec::default(), a.k);
            match a.format {
                Format::Tsv => emit(&format!("{}\n{}", report.distribution.to_tsv(), ranked_tsv("keyword", &report.top))),
                Format::Table => emit(&format!(
                    "{}\n{}",
                    report.distribution.render_table(),
                    ranked_table("Keyword", &report.top)
                )),
                Format::Json => emit_json(&report),
            }
        }
        Report::TopUsage => {
            let total = match (a.total_scripts, a.scan) {
                (Some(t), _) => t,
                (None, Some(scan)) => pipeline::load_scan(&scan)?.files_scanned,
                (None, None) => {
                    return Err(CliError::Invalid("top-usage needs --total-scripts or --scan".into()));
                }
            };
            let rows = top_k_usage(graph.usage_stats().map(|(n, u)| (n, u.script_count)), a.k, total)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            match a.format {
                Format::Tsv => emit(&ranked_tsv("package", &rows)),
                Format::Table => emit(&ranked_table("Package", &rows)),
                Format::Json => emit_json(&rows),
            }
        }
    }
}

fn recommend_cmd(a: RecommendArgs, config: &Config, execution: Execution) -> Result<(), CliError> {
    let graph = open_graph(a.graph)?;
    let engine = Engine::new(graph, config.ranking).map_err(CliError::Config)?.with_execution(execution);
    let req = RecommendRequest {
        filters: Filters {
            exclude_vulnerable: a.exclude_vulnerable,
            min_quality: a.min_quality,
            required_attributes: a.required.into_iter().collect(),
            runtime_constraint: a.runtime,
        },
        ..RecommendRequest::new(&a.story, a.k)
    };
    match engine.recommend(&req, now()) {
        Ok(resp) => match a.format {
            Format::Json => emit_json(&resp),
            Format::Table | Format::Tsv => emit(&ranking_table(&resp.recommendations)),
        },
        Err(ServiceError::BadRequest(m)) => Err(CliError::Invalid(m)),
        Err(e @ ServiceError::EmptyResult { .. }) => {
            if let ServiceError::EmptyResult { diagnostics, .. } = &e {
                eprintln!("{}", serde_json::to_string_pretty(diagnostics).map_err(failed)?);
            }
            Err(failed(e))
        }
        Err(e) => Err(failed(e)),
    }
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| CliError::MissingInput(format!("{}: {e}", p.display())))
    };
    let invalid = |e: anyhow::Error| CliError::Invalid(format!("{e:#}"));
    let report = match a.test {
        EvalTest::Classification { input, positive } => classification_report(&read(&input)?, &positive).map_err(invalid)?,
        EvalTest::Mcnemar { input } => mcnemar_report(&read(&input)?).map_err(invalid)?,
        EvalTest::Wilcoxon { input } => wilcoxon_report(&read(&input)?).map_err(invalid)?,
        EvalTest::SampleSize {
            population,
            confidence,
            margin,
        } => EvalReport::SampleSize {
            population,
            confidence,
            margin,
            n: sample_size(population, confidence, margin).map_err(|e| CliError::Invalid(e.to_string()))?,
        },
    };
    emit_json(&report)
}

fn serve(a: ServeArgs, config: &Config) -> Result<(), CliError> {
    let path = snapshot_path(a.graph)?;
    let port = config.port(std::env::var("PKGRAPH_PORT").ok().as_deref())?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    runtime.block_on(pkgraph::api::serve(path, config.ranking, port)).map_err(CliError::Failed)
}
