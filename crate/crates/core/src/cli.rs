// SPDX-License-Identifier: Apache-2.0

//! `sgannot` command line.
//!
//! Exit status: 0 success, 1 validation or integrity failure, 2 I/O, parse
//! or usage failure. Machine-readable output goes to stdout with
//! `--format json`; diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use parking_lot::RwLock;
use serde::Serialize;

use crate::config::ProjectConfig;
use crate::formats::{
    export_merged, import_merged, load_config, load_merged, load_per_image, save_merged, save_per_image,
    ConversionReport, FormatError, SplitAssignment,
};
use crate::model::AnnotationDocument;
use crate::recommender::evaluate_replay;
use crate::service::{read_log, serve, OpenMode, Project, ServiceError};
use crate::stats::{compute_metrics, triple_frequencies, DatasetMetrics};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Environment variable that overrides `serve --project`.
pub const PROJECT_ENV: &str = "SG_PROJECT";

#[derive(Debug, Parser)]
#[command(name = "sgannot", version, about = "Scene-graph annotation tools")]
pub struct Cli {
    /// Output format for results on stdout.
    #[arg(long, value_enum, global = true, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Merged,
    PerImage,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve a project over HTTP.
    Serve {
        #[arg(long)]
        project: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Convert between per-image files and the merged dataset file.
    Convert {
        #[arg(long, value_enum)]
        to: Target,
        /// Directory of per-image files (or a project), or a merged file.
        input: PathBuf,
        /// Merged file, or directory for per-image files.
        output: PathBuf,
        /// Project config; defaults to `config.json` next to the input,
        /// then to the built-in traffic config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON object mapping image id to train|val|test.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Dataset statistics for a project or a directory of per-image files.
    Stats {
        dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also list the N most frequent category-level triples.
        #[arg(long, default_value_t = 0)]
        triples: usize,
    },
    /// Check a project without modifying it.
    Verify { dir: PathBuf },
    /// Re-derive relationship features from current geometry and recount priors.
    RebuildPriors { dir: PathBuf },
    /// Top-k accuracy of the recommender replayed over a mutation log.
    ReplayEval {
        log: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, message: message.into() }
    }

    fn with_context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Parse { .. } | FormatError::Schema { .. } => Failure::io(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let code = match &e {
            ServiceError::CorruptAnnotation { .. } | ServiceError::Invalid(_) => EXIT_INVALID,
            ServiceError::Config(f) | ServiceError::Format(f) => Failure::from(f.clone()).code,
            _ => EXIT_IO,
        };
        Failure { code, message: format!("{}: {e}", e.code()) }
    }
}

type CmdResult = Result<i32, Failure>;

/// `SG_PROJECT` wins over `--project` when set and non-empty.
pub fn resolve_project(flag: Option<PathBuf>, env: Option<OsString>) -> Option<PathBuf> {
    env.filter(|v| !v.is_empty()).map(PathBuf::from).or(flag)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn emit<T: Serialize>(
    out: &mut dyn Write,
    format: OutputFormat,
    value: &T,
    text: impl FnOnce() -> String,
) -> Result<(), Failure> {
    let s = match format {
        OutputFormat::Json => serde_json::to_string_pretty(value).expect("output serializes") + "\n",
        OutputFormat::Text => text(),
    };
    out.write_all(s.as_bytes()).map_err(|e| Failure::io(format!("stdout: {e}")))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Explicit `--config`, else `config.json` in `near`, else the default.
fn config_for(explicit: Option<&Path>, near: Option<&Path>) -> Result<ProjectConfig, Failure> {
    let path = explicit.map(Path::to_path_buf).or_else(|| near.map(|d| d.join("config.json")).filter(|p| p.is_file()));
    match path {
        Some(p) => Ok(load_config(&read(&p)?).map_err(|e| Failure::from(e).with_context(&p))?),
        None => Ok(ProjectConfig::default_traffic()),
    }
}

/// Per-image files under `dir/annotations/` when present, else under `dir`.
fn load_docs(dir: &Path, cfg: &ProjectConfig) -> Result<Vec<AnnotationDocument>, Failure> {
    let sub = dir.join("annotations");
    let src = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut files: Vec<PathBuf> = fs::read_dir(&src)
        .map_err(|e| Failure::io(format!("{}: {e}", src.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files.iter().map(|p| load_per_image(&read(p)?, cfg).map_err(|e| Failure::from(e).with_context(p))).collect()
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let format = cli.format;
    match cli.command {
        Command::Serve { project, port, host } => {
            let root = resolve_project(project, std::env::var_os(PROJECT_ENV))
                .ok_or_else(|| Failure::io(format!("no project: pass --project or set {PROJECT_ENV}")))?;
            cmd_serve(&root, SocketAddr::new(host, port), err)
        }
        Command::Convert { to, input, output, config, split } => {
            cmd_convert(to, &input, &output, config.as_deref(), split.as_deref(), format, out)
        }
        Command::Stats { dir, config, triples } => cmd_stats(&dir, config.as_deref(), triples, format, out),
        Command::Verify { dir } => cmd_verify(&dir, format, out),
        Command::RebuildPriors { dir } => cmd_rebuild(&dir, format, out),
        Command::ReplayEval { log, k, config } => cmd_replay_eval(&log, k, config.as_deref(), format, out),
    }
}

fn cmd_serve(root: &Path, addr: SocketAddr, err: &mut dyn Write) -> CmdResult {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let (project, report) = Project::open(root, OpenMode::Repair)?;
    for issue in &report.issues {
        let _ = writeln!(err, "repair: {} {}", issue.code, issue.message);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(e.to_string()))?;
    runtime.block_on(serve(Arc::new(RwLock::new(project)), addr)).map_err(|e| Failure::io(format!("{addr}: {e}")))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ConvertOutput<'a> {
    images: usize,
    output: &'a Path,
    report: &'a ConversionReport,
}

fn report_text(report: &ConversionReport) -> String {
    let mut s = String::new();
    for r in &report.dropped_regions {
        s += &format!("dropped region {}/{}\n", r.image_id, r.id);
    }
    for c in &report.expanded_clusters {
        s += &format!(
            "expanded cluster {}/{} ({} members, {} relationships)\n",
            c.image_id, c.cluster_id, c.members, c.relationships
        );
    }
    for f in &report.dropped_fields {
        s += &format!("dropped field {}/{}.{}\n", f.image_id, f.entity, f.field);
    }
    s
}

fn cmd_convert(
    to: Target,
    input: &Path,
    output: &Path,
    config: Option<&Path>,
    split: Option<&Path>,
    format: OutputFormat,
    out: &mut dyn Write,
) -> CmdResult {
    let (images, report) = match to {
        Target::Merged => {
            let cfg = config_for(config, Some(input))?;
            let docs = load_docs(input, &cfg)?;
            let split: SplitAssignment = match split {
                Some(p) => {
                    serde_json::from_slice(&read(p)?).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?
                }
                None => SplitAssignment::new(),
            };
            let (data, report) = export_merged(&docs, &cfg, &split)?;
            write(output, &save_merged(&data))?;
            (docs.len(), report)
        }
        Target::PerImage => {
            let cfg = config_for(config, input.parent())?;
            let data = load_merged(&read(input)?).map_err(|e| Failure::from(e).with_context(input))?;
            let (docs, report) = import_merged(&data, &cfg)?;
            for doc in &docs {
                write(&output.join(format!("{}.json", doc.image_id())), &save_per_image(doc))?;
            }
            (docs.len(), report)
        }
    };
    let value = ConvertOutput { images, output, report: &report };
    emit(out, format, &value, || {
        format!("converted {images} image(s) to {}\n{}", output.display(), report_text(&report))
    })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct StatsOutput {
    #[serde(flatten)]
    metrics: DatasetMetrics,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    top_triples: Vec<crate::stats::TripleCount>,
}

fn cmd_stats(
    dir: &Path,
    config: Option<&Path>,
    triples: usize,
    format: OutputFormat,
    out: &mut dyn Write,
) -> CmdResult {
    let (docs, cfg) = if config.is_none() && dir.join("config.json").is_file() {
        let (p, _) = Project::open(dir, OpenMode::ReadOnly)?;
        (p.documents().cloned().collect::<Vec<_>>(), p.config().clone())
    } else {
        let cfg = config_for(config, None)?;
        (load_docs(dir, &cfg)?, cfg)
    };
    let metrics = compute_metrics(&docs, &cfg);
    let mut top = triple_frequencies(&docs);
    top.truncate(triples);
    let value = StatsOutput { metrics, top_triples: top };
    emit(out, format, &value, || {
        let mut s = value.metrics.to_table();
        for t in &value.top_triples {
            s += &format!("{:>8}  {} {} {}\n", t.count, t.subject_category, t.predicate, t.object_category);
        }
        s
    })?;
    Ok(EXIT_OK)
}

fn cmd_verify(dir: &Path, format: OutputFormat, out: &mut dyn Write) -> CmdResult {
    let report = Project::verify(dir)?;
    emit(out, format, &report, || {
        if report.is_clean() {
            "ok\n".to_string()
        } else {
            report
                .issues
                .iter()
                .map(|i| format!("{}\t{}\t{}\n", i.code, i.image_id.as_deref().unwrap_or("-"), i.message))
                .collect()
        }
    })?;
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_INVALID })
}

#[derive(Serialize)]
struct RebuildOutput {
    repairs: usize,
    changed_images: usize,
    total_annotations: u64,
}

fn cmd_rebuild(dir: &Path, format: OutputFormat, out: &mut dyn Write) -> CmdResult {
    let (mut p, report) = Project::open(dir, OpenMode::Repair)?;
    let changed = p.rebuild_priors()?;
    let value = RebuildOutput {
        repairs: report.issues.len(),
        changed_images: changed,
        total_annotations: p.prior().total_annotations(),
    };
    emit(out, format, &value, || {
        format!(
            "rebuilt priors: {} annotation(s), {} image(s) changed\n",
            value.total_annotations, value.changed_images
        )
    })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ReplayOutput {
    k: usize,
    annotations: usize,
    accuracy: f64,
}

fn cmd_replay_eval(
    log: &Path,
    k: usize,
    config: Option<&Path>,
    format: OutputFormat,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = config_for(config, log.parent())?;
    if !log.is_file() {
        return Err(Failure::io(format!("{}: no such file", log.display())));
    }
    let contents = read_log(log)?;
    let annotations: Vec<_> = contents.records.iter().filter_map(|r| r.annotation()).collect();
    let accuracy = evaluate_replay(&cfg, &annotations, k).map_err(|e| Failure::invalid(e.to_string()))?;
    let value = ReplayOutput { k, annotations: annotations.len(), accuracy };
    emit(out, format, &value, || format!("top-{k} accuracy {accuracy:.4} over {} annotation(s)\n", annotations.len()))?;
    Ok(EXIT_OK)
}
