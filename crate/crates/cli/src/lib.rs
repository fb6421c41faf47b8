//! `deepsketch` command-line frontend.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 query parse error,
//! 4 query outside the sketch's scope, 5 internal failure.

pub mod workload;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deepsketch::datastore::{
    generate_synthetic_dataset, load_dataset, true_cardinality, write_dataset, DataError, SyntheticSpec, TableStore,
};
use deepsketch::mscn::qerror;
use deepsketch::queryir::{ColumnRef, Grouping, Query, QueryError, QueryTemplate, Statement};
use deepsketch::sketch::{
    create_sketch, evaluate_workload, CardinalityEstimator, DeepSketch, EstimateFlags, GroundTruth,
    IndependenceBaseline, Phase, ProgressEvent, ProgressSink, SamplingBaseline, SketchConfig, SketchError, SketchModel,
};
use deepsketch_service::{router, AppState, ServiceConfig, ServiceError, DATA_DIR_ENV};
use serde::Serialize;
use thiserror::Error;

use workload::parse_workload;

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const SCOPE: i32 = 4;
    pub const INTERNAL: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "deepsketch", version, about = "Learned cardinality sketches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic star-schema dataset.
    GenData(GenDataArgs),
    /// Train a sketch over a subset of tables.
    Train(TrainArgs),
    /// Estimate one query, or every instance of a template.
    Estimate(EstimateArgs),
    /// Score estimators on a workload file.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Demo,
    Benchmark,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator spec (TOML).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in spec instead of a file.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = DATA_DIR_ENV)]
    pub data: PathBuf,
    /// Comma-separated tables; all tables when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tables: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub queries: usize,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    /// Sample rows per table.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub hidden_units: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// No progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub sql: String,
    /// Treat the statement as a template with one `?` placeholder.
    #[arg(long)]
    pub template: bool,
    /// Template grouping: equal-width buckets.
    #[arg(long, requires = "template", conflicts_with = "year")]
    pub buckets: Option<usize>,
    /// Template grouping: calendar years of a date column.
    #[arg(long, requires = "template")]
    pub year: bool,
    #[arg(long)]
    pub baselines: bool,
    /// Exact cardinality from the dataset in `--data`.
    #[arg(long)]
    pub truth: bool,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data: PathBuf,
    /// Also score the exact executor as an estimator.
    #[arg(long)]
    pub with_truth: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data: PathBuf,
    /// Write the demo dataset into `--data` when it has no schema.
    #[arg(long)]
    pub demo: bool,
    /// Persisted sketches; defaults to `<data>/sketches`.
    #[arg(long)]
    pub sketch_dir: Option<PathBuf>,
    /// Built web UI assets.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Concurrent training jobs.
    #[arg(long, default_value_t = 1)]
    pub slots: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{}", caret_message(.sql, .source))]
    Parse { sql: String, source: SketchError },
    #[error("{}: {source}", .path.display())]
    SketchFile { path: PathBuf, source: SketchError },
    #[error("{0}")]
    Sketch(#[from] SketchError),
    #[error("workload line {line}: {source}")]
    Workload { line: usize, source: Box<CliError> },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) | CliError::SketchFile { .. } => exit::USAGE,
            CliError::Parse { source, .. } | CliError::Sketch(source) => sketch_exit_code(source),
            CliError::Workload { source, .. } => source.exit_code(),
            CliError::Service(ServiceError::Data(_)) => exit::USAGE,
            CliError::Service(_) | CliError::Io(_) => exit::INTERNAL,
        }
    }
}

fn sketch_exit_code(e: &SketchError) -> i32 {
    use SketchError::*;
    match e {
        UnknownSymbol { .. } => exit::SCOPE,
        Query(q) => match q {
            QueryError::UnknownTable(_) | QueryError::UnknownColumn { .. } => exit::SCOPE,
            QueryError::InvalidTemplate(_)
            | QueryError::EmptySample { .. }
            | QueryError::NonDateColumnForYear { .. }
            | QueryError::InvalidGenerator(_) => exit::USAGE,
            _ => exit::PARSE,
        },
        EmptyCorpus
        | DegenerateLabels
        | InvalidConfig(_)
        | EmptyWorkload
        | Data(_)
        | BadMagic
        | TruncatedFile
        | ChecksumMismatch
        | VersionMismatch { .. }
        | Corrupt(_)
        | Io(_) => exit::USAGE,
        Model(_) | Cancelled => exit::INTERNAL,
    }
}

/// The error message plus the statement with a caret under the offending
/// position, when the parser reports one.
fn caret_message(sql: &str, e: &SketchError) -> String {
    let position = match e {
        SketchError::Query(q) => q.position(),
        _ => None,
    };
    match position {
        Some(p) => {
            let col = sql.get(..p.min(sql.len())).map_or(p, |s| s.chars().count());
            format!("{e}\n  {sql}\n  {}^", " ".repeat(col))
        }
        None => e.to_string(),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(args) => gen_data(&args, out),
        Command::Train(args) => train(&args, out),
        Command::Estimate(args) => estimate(&args, out),
        Command::Eval(args) => eval(&args, out),
        Command::Serve(args) => serve(&args, out),
    }
}

fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = match (&args.spec, args.preset) {
        (Some(path), _) => SyntheticSpec::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(Preset::Demo)) => SyntheticSpec::demo(),
        (None, Some(Preset::Benchmark)) => SyntheticSpec::benchmark(0.8),
        (None, None) => return Err(CliError::Usage("give --spec or --preset".into())),
    };
    let store = generate_synthetic_dataset(&spec, args.seed)?;
    write_dataset(&args.out, &store)?;
    for t in store.tables() {
        writeln!(out, "{:<16} {:>9} rows", t.name(), t.row_count())?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

/// Prints phase changes and epoch metrics to stderr.
struct TrainProgress {
    last: Mutex<Option<Phase>>,
}

impl ProgressSink for TrainProgress {
    fn report(&self, event: ProgressEvent) {
        let mut last = self.last.lock().expect("progress lock");
        if *last != Some(event.phase) {
            *last = Some(event.phase);
            let label = match event.phase {
                Phase::Generating => "generating training queries",
                Phase::Labeling => "labeling with exact cardinalities",
                Phase::Training => "training",
                _ => return,
            };
            eprintln!("{label}");
        }
        if let Some(e) = event.epoch {
            let validation = e
                .validation_qerror
                .map_or_else(String::new, |v| format!("  validation {v:.3}"));
            eprintln!(
                "epoch {:>3}  train q-error {:.3}{validation}  {} ms",
                e.epoch, e.train_qerror, e.wall_ms
            );
        }
    }
}

fn load_store(dir: &Path) -> Result<TableStore, CliError> {
    Ok(load_dataset(dir)?)
}

fn load_sketch(path: &Path) -> Result<DeepSketch, CliError> {
    DeepSketch::load(path).map_err(|source| CliError::SketchFile {
        path: path.to_path_buf(),
        source,
    })
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_store(&args.data)?;
    let mut config = SketchConfig {
        tables: args.tables.clone(),
        num_queries: args.queries,
        sample_size: args.samples,
        seed: args.seed,
        ..SketchConfig::default()
    };
    config.train.epochs = args.epochs;
    config.train.hidden_units = args.hidden_units;
    config.train.batch_size = args.batch_size;
    config.train.learning_rate = args.learning_rate;

    let sketch = if args.quiet {
        create_sketch(&store, &config, &deepsketch::sketch::NoProgress)?
    } else {
        create_sketch(&store, &config, &TrainProgress { last: Mutex::new(None) })?
    };
    // save() writes a temporary sibling and renames, so a failure leaves
    // no partial file behind
    sketch.save(&args.out)?;
    let bytes = std::fs::metadata(&args.out)?.len();
    let meta = sketch.metadata();
    writeln!(out, "tables      {}", meta.tables.join(","))?;
    writeln!(out, "queries     {}", meta.num_queries)?;
    writeln!(out, "parameters  {}", sketch.params().shape().parameter_count())?;
    if let Some(v) = &meta.train.validation {
        writeln!(out, "validation  median q-error {:.3}, 95th {:.3}", v.median, v.p95)?;
    }
    writeln!(out, "wrote {} ({bytes} bytes)", args.out.display())?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Baselines {
    pub sampling: f64,
    pub independence: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct QErrors {
    pub sketch: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub independence: Option<f64>,
}

/// One estimate with its optional comparisons.
#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub sql: String,
    pub estimate: f64,
    pub flags: EstimateFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Baselines>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qerror: Option<QErrors>,
}

#[derive(Debug, Serialize)]
pub struct InstanceReport {
    pub label: String,
    pub key: f64,
    #[serde(flatten)]
    pub report: EstimateReport,
}

#[derive(Debug, Serialize)]
pub struct TemplateReport {
    pub placeholder: ColumnRef,
    pub grouping: Grouping,
    pub instances: Vec<InstanceReport>,
}

fn estimate_report(
    sketch: &DeepSketch,
    query: &Query,
    baselines: bool,
    store: Option<&TableStore>,
) -> Result<EstimateReport, CliError> {
    let est = sketch.estimate(query)?;
    let baselines = if baselines {
        Some(Baselines {
            sampling: sketch.sampling_estimate(query)?,
            independence: sketch.independence_estimate(query)?,
        })
    } else {
        None
    };
    let truth = store.map(|s| true_cardinality(s, query)).transpose()?;
    let qerror = truth.map(|t| {
        let t = t as f64;
        QErrors {
            sketch: qerror(est.cardinality, t, 1.0),
            sampling: baselines.as_ref().map(|b| qerror(b.sampling, t, 1.0)),
            independence: baselines.as_ref().map(|b| qerror(b.independence, t, 1.0)),
        }
    });
    Ok(EstimateReport {
        sql: deepsketch::queryir::render_sql(query),
        estimate: est.cardinality,
        flags: est.flags,
        baselines,
        truth,
        qerror,
    })
}

fn estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sketch = load_sketch(&args.sketch)?;
    let store = if args.truth {
        let dir = args
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--truth needs --data or {DATA_DIR_ENV}")))?;
        Some(load_store(dir)?)
    } else {
        None
    };
    let parse_err = |source: SketchError| CliError::Parse {
        sql: args.sql.clone(),
        source,
    };

    if !args.template {
        let query = sketch.parse(&args.sql).map_err(parse_err)?;
        let report = estimate_report(&sketch, &query, args.baselines, store.as_ref())?;
        if args.json {
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            )?;
        } else {
            write_estimate_text(out, &report)?;
        }
        return Ok(());
    }

    let (base, placeholder) = match sketch.parse_statement(&args.sql).map_err(parse_err)? {
        Statement::Template { base, placeholder } => (base, placeholder),
        Statement::Query(_) => return Err(parse_err(QueryError::NoPlaceholder.into())),
    };
    let grouping = match (args.buckets, args.year) {
        (Some(k), _) => Grouping::Buckets { k },
        (None, true) => Grouping::Year,
        (None, false) => Grouping::Distinct,
    };
    let template = QueryTemplate::new(base, placeholder.clone(), grouping, sketch.schema())
        .map_err(|e| CliError::Sketch(e.into()))?;
    let instances = sketch
        .expand_template(&template)?
        .into_iter()
        .map(|inst| {
            Ok(InstanceReport {
                report: estimate_report(&sketch, &inst.query, args.baselines, store.as_ref())?,
                label: inst.label,
                key: inst.key,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = TemplateReport {
        placeholder,
        grouping,
        instances,
    };
    if args.json {
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        )?;
    } else {
        write_template_text(out, &report)?;
    }
    Ok(())
}

fn fmt_card(v: f64) -> String {
    format!("{v:.1}")
}

fn write_estimate_text(out: &mut dyn Write, r: &EstimateReport) -> std::io::Result<()> {
    if r.baselines.is_none() && r.truth.is_none() {
        return writeln!(out, "{}", fmt_card(r.estimate));
    }
    let q = r.qerror.as_ref();
    let mut rows = vec![("sketch", fmt_card(r.estimate), q.map(|q| q.sketch))];
    if let Some(b) = &r.baselines {
        rows.push(("sampling", fmt_card(b.sampling), q.and_then(|q| q.sampling)));
        rows.push(("independence", fmt_card(b.independence), q.and_then(|q| q.independence)));
    }
    if let Some(t) = r.truth {
        rows.push(("truth", t.to_string(), None));
    }
    let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(8);
    if r.truth.is_some() {
        writeln!(out, "{:<12}  {:>width$}  {:>8}", "estimator", "estimate", "q-error")?;
    } else {
        writeln!(out, "{:<12}  {:>width$}", "estimator", "estimate")?;
    }
    for (name, value, qe) in rows {
        match qe {
            Some(qe) => writeln!(out, "{name:<12}  {value:>width$}  {qe:>8.3}")?,
            None => writeln!(out, "{name:<12}  {value:>width$}")?,
        }
    }
    if !r.flags.zero_tuple_tables.is_empty() {
        writeln!(
            out,
            "note: no sampled rows qualify in {}",
            r.flags.zero_tuple_tables.join(", ")
        )?;
    }
    if r.flags.clamped_literals {
        writeln!(out, "note: literals outside the trained value range were clamped")?;
    }
    Ok(())
}

fn write_template_text(out: &mut dyn Write, r: &TemplateReport) -> std::io::Result<()> {
    let mut header = vec!["value".to_string(), "sketch".to_string()];
    let with_baselines = r.instances.first().is_some_and(|i| i.report.baselines.is_some());
    let with_truth = r.instances.first().is_some_and(|i| i.report.truth.is_some());
    if with_baselines {
        header.extend(["sampling".into(), "independence".into()]);
    }
    if with_truth {
        header.push("truth".into());
    }
    let rows: Vec<Vec<String>> = r
        .instances
        .iter()
        .map(|i| {
            let mut row = vec![i.label.clone(), fmt_card(i.report.estimate)];
            if let Some(b) = &i.report.baselines {
                row.extend([fmt_card(b.sampling), fmt_card(b.independence)]);
            }
            if let Some(t) = i.report.truth {
                row.push(t.to_string());
            }
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(&header))?;
    for row in &rows {
        writeln!(out, "{}", line(row))?;
    }
    Ok(())
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sketch = load_sketch(&args.sketch)?;
    let store = load_store(&args.data)?;
    let text = std::fs::read_to_string(&args.workload)?;
    let lines = parse_workload(&text);
    if lines.is_empty() {
        return Err(SketchError::EmptyWorkload.into());
    }
    let queries = lines
        .iter()
        .map(|l| {
            sketch.parse(l.sql).map_err(|source| CliError::Workload {
                line: l.line,
                source: Box::new(CliError::Parse {
                    sql: l.sql.to_string(),
                    source,
                }),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let model = SketchModel(&sketch);
    let sampling = SamplingBaseline(&sketch);
    let independence = IndependenceBaseline(&sketch);
    let truth = GroundTruth(&store);
    let mut estimators: Vec<&dyn CardinalityEstimator> = vec![&model, &sampling, &independence];
    if args.with_truth {
        estimators.push(&truth);
    }
    let name = args.workload.file_stem().and_then(|s| s.to_str()).unwrap_or("workload");
    let report = evaluate_workload(name, &estimators, &queries, &store)?;
    if args.json {
        writeln!(out, "{}", report.to_json())?;
    } else {
        write!(out, "{}", report.to_text())?;
    }
    Ok(())
}

fn serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = if args.demo {
        deepsketch_service::open_or_create_demo(&args.data, 0)?
    } else {
        load_store(&args.data)?
    };
    let config = ServiceConfig {
        sketch_dir: Some(args.sketch_dir.clone().unwrap_or_else(|| args.data.join("sketches"))),
        static_dir: args.static_dir.clone(),
        training_slots: args.slots,
        ..ServiceConfig::default()
    };
    let state = AppState::new(store, &config)?;
    let app = router(state, config.static_dir.as_deref());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        deepsketch_service::serve(listener, app).await
    })?;
    Ok(())
}
