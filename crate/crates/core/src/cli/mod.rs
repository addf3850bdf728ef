//! Command-line front end: one subcommand per pipeline stage plus `stats`,
//! `serve` and `export`.

pub mod stages;

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::{self, ApiOptions};
use crate::ingest::{DumpFormat, IngestReport};
use crate::model::{RegistryId, SimilarityConfig};
use crate::store::{ExportFormat, RunDir, Stage, Store, StoreError};
use stages::{InputSpec, PipelineError, StageRun};

pub const RUN_DIR_ENV: &str = "REGDEDUP_RUN_DIR";

pub mod exit {
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const STAGE_ORDER: i32 = 4;
    pub const INTEGRITY: i32 = 5;
    pub const LOCKED: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(Box<PipelineError>),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(Box::new(e))
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        PipelineError::Store(e).into()
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config { .. } => exit::VALIDATION,
            CliError::Io(_) => exit::FAILURE,
            CliError::Pipeline(p) => match p.as_ref() {
                PipelineError::Store(s) => match s {
                    StoreError::StageOrder { .. } => exit::STAGE_ORDER,
                    StoreError::Integrity(_) => exit::INTEGRITY,
                    StoreError::Locked(_) => exit::LOCKED,
                    StoreError::Validation(_) => exit::VALIDATION,
                    _ => exit::FAILURE,
                },
                PipelineError::Ingest { .. }
                | PipelineError::Mapping { .. }
                | PipelineError::Model(_)
                | PipelineError::Config(_) => exit::VALIDATION,
                PipelineError::Merge(_) => exit::INTEGRITY,
                PipelineError::Read { .. } => exit::FAILURE,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "regdedup",
    version,
    about = "De-duplicate scholarly repository registries"
)]
pub struct Cli {
    /// Run directory holding stage documents and decisions.
    #[arg(long, global = true, env = RUN_DIR_ENV)]
    pub run_dir: Option<PathBuf>,

    /// Run configuration (TOML): input dumps, mappings, similarity settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print reports as line-delimited JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read registry dumps into profiles.
    Ingest(IngestArgs),
    /// Conflate registry claims into duplicate sets.
    Conflate,
    /// Find duplicates by blocking and similarity matching.
    Dedup(DedupArgs),
    /// Extend and merge claim sets with dedup clusters.
    Merge,
    /// Print composition tables and merge counts.
    Stats,
    /// Serve the review API.
    Serve(ServeArgs),
    /// Write the final dataset.
    Export(ExportArgs),
    /// Run ingest, conflate, dedup and merge in order.
    Run(RunArgs),
}

#[derive(Debug, Args, Default)]
pub struct IngestArgs {
    /// Registry of the dump given with --input.
    #[arg(long, requires = "input")]
    pub registry: Option<RegistryId>,
    /// Dump file for --registry.
    #[arg(long, requires = "registry")]
    pub input: Option<PathBuf>,
    /// Field mapping for --registry (TOML); the built-in mapping otherwise.
    #[arg(long, requires = "registry")]
    pub mapping: Option<PathBuf>,
    /// Dump format for --registry: json, jsonl or csv.
    #[arg(long, requires = "registry")]
    pub format: Option<DumpFormat>,
}

#[derive(Debug, Args, Default)]
pub struct DedupArgs {
    /// Similarity threshold in [0, 1].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Worker threads for pair scoring.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Allow cross-origin requests (local UI development).
    #[arg(long)]
    pub cors: bool,
    /// Static files to serve at `/` (a built review UI).
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// jsonl or csv.
    #[arg(long, default_value = "jsonl")]
    pub format: ExportFormat,
    /// Output file; standard output if absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[command(flatten)]
    pub dedup: DedupArgs,
}

/// Run configuration file.
///
/// ```toml
/// run_dir = "runs/latest"
///
/// [inputs.roar]
/// path = "dumps/roar.csv"
/// mapping = "mappings/roar.toml"   # optional
/// format = "csv"                   # optional
///
/// [similarity]
/// threshold = 0.9
/// ```
///
/// Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: Option<PathBuf>,
    #[serde(default)]
    pub inputs: BTreeMap<String, InputConfig>,
    #[serde(default)]
    pub similarity: SimilarityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub mapping: Option<PathBuf>,
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = config.run_dir.as_mut() {
            resolve(dir);
        }
        for input in config.inputs.values_mut() {
            resolve(&mut input.path);
            if let Some(m) = input.mapping.as_mut() {
                resolve(m);
            }
        }
        config
            .similarity
            .validate()
            .map_err(|e| err(e.to_string()))?;
        config.input_specs().map_err(|e| err(e.to_string()))?;
        Ok(config)
    }

    pub fn input_specs(&self) -> Result<Vec<InputSpec>, CliError> {
        self.inputs
            .iter()
            .map(|(name, input)| {
                let registry: RegistryId = name
                    .parse()
                    .map_err(|e: crate::model::ModelError| CliError::Usage(e.to_string()))?;
                let format = input
                    .format
                    .as_deref()
                    .map(str::parse::<DumpFormat>)
                    .transpose()
                    .map_err(CliError::Usage)?;
                Ok(InputSpec {
                    registry,
                    path: input.path.clone(),
                    mapping: input.mapping.clone(),
                    format,
                })
            })
            .collect()
    }
}

impl Cli {
    fn load_config(&self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }

    fn run_dir(&self, config: &RunConfig) -> Result<PathBuf, CliError> {
        self.run_dir
            .clone()
            .or_else(|| config.run_dir.clone())
            .ok_or_else(|| CliError::Usage(format!("no run directory: pass --run-dir, set {RUN_DIR_ENV}, or set run_dir in --config")))
    }
}

/// Opens the run directory for `command`, treating a missing directory as
/// a run where `missing` has not happened yet.
fn open_run(dir: &Path, command: &str, missing: Stage) -> Result<RunDir, CliError> {
    if !dir.is_dir() {
        return Err(StoreError::StageOrder {
            command: command.to_string(),
            missing,
        }
        .into());
    }
    Ok(RunDir::open(dir)?)
}

fn open_store(dir: &Path, command: &str, needs: Stage) -> Result<Store, CliError> {
    let run = open_run(dir, command, needs)?;
    if !run.manifest().completed(needs) {
        return Err(StoreError::StageOrder {
            command: command.to_string(),
            missing: needs,
        }
        .into());
    }
    Ok(Store::open(dir)?)
}

fn inputs_for(args: &IngestArgs, config: &RunConfig) -> Result<Vec<InputSpec>, CliError> {
    let mut specs = config.input_specs()?;
    if let (Some(registry), Some(input)) = (args.registry, &args.input) {
        specs.retain(|s| s.registry != registry);
        specs.push(InputSpec {
            registry,
            path: input.clone(),
            mapping: args.mapping.clone(),
            format: args.format,
        });
    }
    Ok(specs)
}

fn similarity_for(args: &DedupArgs, config: &RunConfig) -> Result<SimilarityConfig, CliError> {
    let mut sim = config.similarity.clone();
    if let Some(t) = args.threshold {
        sim.threshold = t;
    }
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(sim)
}

struct Reporter<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Reporter<'_> {
    fn stage<R: Serialize>(
        &mut self,
        name: &str,
        run: &StageRun<R>,
        text: String,
    ) -> std::io::Result<()> {
        if self.json {
            let line =
                serde_json::json!({"stage": name, "reused": run.reused, "report": run.report});
            writeln!(self.out, "{line}")
        } else {
            let suffix = if run.reused {
                " (up to date, not recomputed)"
            } else {
                ""
            };
            writeln!(self.out, "{name}{suffix}: {text}")
        }
    }
}

fn ingest_text(reports: &[IngestReport]) -> String {
    reports
        .iter()
        .map(|r| {
            format!(
                "{} {} records, {} profiles, {} skipped, {} warnings",
                r.registry,
                r.records_read,
                r.profiles_emitted,
                r.skipped.len(),
                r.warnings.len()
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Executes a parsed command line, writing reports to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.load_config()?;
    let dir = cli.run_dir(&config)?;
    let mut rep = Reporter {
        json: cli.json,
        out,
    };

    match &cli.command {
        Command::Ingest(args) => {
            let mut run = RunDir::create(&dir)?;
            let _lock = run.lock()?;
            let r = stages::ingest(&mut run, &inputs_for(args, &config)?)?;
            let text = ingest_text(&r.report);
            rep.stage("ingest", &r, text)?;
        }
        Command::Conflate => {
            let mut run = open_run(&dir, "conflate", Stage::Ingest)?;
            let _lock = run.lock()?;
            let r = stages::conflate(&mut run)?;
            let text = format!(
                "{} sets, {} problematic, {} dangling claims",
                r.report.sets,
                r.report.problematic,
                r.report.dangling.len()
            );
            rep.stage("conflate", &r, text)?;
        }
        Command::Dedup(args) => {
            let mut run = open_run(&dir, "dedup", Stage::Ingest)?;
            let _lock = run.lock()?;
            let r = stages::dedup(&mut run, &similarity_for(args, &config)?, args.jobs)?;
            let text = format!(
                "{} blocks, {} candidate pairs, {} edges, {} clusters",
                r.report.blocks, r.report.candidate_pairs, r.report.edges, r.report.clusters
            );
            rep.stage("dedup", &r, text)?;
        }
        Command::Merge => {
            let mut run = open_run(&dir, "merge", Stage::Ingest)?;
            let _lock = run.lock()?;
            let r = stages::merge(&mut run)?;
            let c = r.report.counts;
            let text = format!(
                "{} final sets (claims-only {}, dedup-only {}, extended {}, merged {}), {} need review",
                r.report.total,
                c.claims_only,
                c.dedup_only,
                c.extended,
                c.merged,
                r.report.needs_review.len()
            );
            rep.stage("merge", &r, text)?;
        }
        Command::Run(args) => {
            let mut run = RunDir::create(&dir)?;
            let _lock = run.lock()?;
            let r = stages::ingest(&mut run, &inputs_for(&args.ingest, &config)?)?;
            let text = ingest_text(&r.report);
            rep.stage("ingest", &r, text)?;
            let r = stages::conflate(&mut run)?;
            let text = format!(
                "{} sets, {} problematic",
                r.report.sets, r.report.problematic
            );
            rep.stage("conflate", &r, text)?;
            let r = stages::dedup(
                &mut run,
                &similarity_for(&args.dedup, &config)?,
                args.dedup.jobs,
            )?;
            let text = format!("{} edges, {} clusters", r.report.edges, r.report.clusters);
            rep.stage("dedup", &r, text)?;
            let r = stages::merge(&mut run)?;
            let text = format!(
                "{} final sets, {} need review",
                r.report.total,
                r.report.needs_review.len()
            );
            rep.stage("merge", &r, text)?;
        }
        Command::Stats => {
            let stats = open_store(&dir, "stats", Stage::Merge)?.stats()?;
            if cli.json {
                writeln!(
                    rep.out,
                    "{}",
                    serde_json::to_string(&stats).expect("stats serialize")
                )?;
            } else {
                write!(rep.out, "{stats}")?;
            }
        }
        Command::Export(args) => {
            let bytes = open_store(&dir, "export", Stage::Merge)?.export(args.format)?;
            match &args.output {
                Some(path) => std::fs::write(path, bytes)?,
                None => rep.out.write_all(&bytes)?,
            }
        }
        Command::Serve(args) => {
            let store = open_store(&dir, "serve", Stage::Conflate)?;
            let addr = SocketAddr::new(args.bind, args.port);
            let options = ApiOptions {
                cors: args.cors,
                ui_dir: args.ui_dir.clone(),
            };
            log::info!("serving run {} on http://{addr}", store.run_id());
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(api::serve(Arc::new(RwLock::new(store)), addr, options))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{CLUSTERS, DEDUP_REPORT, FINAL_SETS};

    fn fixtures() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples")
    }

    fn regdedup(dir: &Path, args: &[&str]) -> (Result<(), CliError>, String) {
        let mut argv = vec![
            "regdedup".to_string(),
            "--run-dir".into(),
            dir.display().to_string(),
        ];
        argv.extend(args.iter().map(|s| s.to_string()));
        let cli = Cli::try_parse_from(argv).unwrap();
        let mut out = Vec::new();
        let res = run(cli, &mut out);
        (res, String::from_utf8(out).unwrap())
    }

    fn config_arg() -> String {
        fixtures().join("run.toml").display().to_string()
    }

    fn code(res: Result<(), CliError>) -> i32 {
        res.map(|_| 0).unwrap_or_else(|e| e.exit_code())
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let config = RunConfig::load(&fixtures().join("run.toml")).unwrap();
        let specs = config.input_specs().unwrap();
        assert_eq!(specs.len(), 4);
        assert!(specs
            .iter()
            .all(|s| s.path.starts_with(fixtures()) && s.path.exists()));
        assert_eq!(config.similarity.threshold, 0.9);
    }

    #[test]
    fn bad_configs_are_validation_errors() {
        let tmp = tempfile::tempdir().unwrap();
        for body in [
            "[similarity]\nthreshold = 1.5\n",
            "[inputs.dblp]\npath = \"x\"\n",
            "[inputs.roar]\npath = \"x\"\nformat = \"xml\"\n",
            "not toml at all [",
        ] {
            let path = tmp.path().join("run.toml");
            std::fs::write(&path, body).unwrap();
            let err = RunConfig::load(&path).unwrap_err();
            assert_eq!(err.exit_code(), exit::VALIDATION, "{body}");
        }
        assert!(RunConfig::load(&tmp.path().join("absent.toml")).is_err());
    }

    #[test]
    fn usage_errors() {
        assert!(Cli::try_parse_from(["regdedup", "ingest", "--registry", "roar"]).is_err());
        assert!(Cli::try_parse_from(["regdedup", "export", "--format", "xml"]).is_err());
        assert!(Cli::try_parse_from(["regdedup", "frobnicate"]).is_err());
        let tmp = tempfile::tempdir().unwrap();
        let (res, _) = regdedup(
            tmp.path(),
            &["--config", &config_arg(), "dedup", "--threshold", "2"],
        );
        assert_eq!(code(res), exit::USAGE);
    }

    #[test]
    fn stages_out_of_order() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        for args in [
            &["conflate"][..],
            &["dedup"],
            &["merge"],
            &["stats"],
            &["export"],
            &["serve"],
        ] {
            let (res, _) = regdedup(&dir, args);
            assert_eq!(code(res), exit::STAGE_ORDER, "{args:?}");
        }
        let (res, _) = regdedup(&dir, &["--config", &config_arg(), "ingest"]);
        res.unwrap();
        for args in [&["dedup"][..], &["merge"], &["stats"]] {
            let (res, _) = regdedup(&dir, args);
            let err = res.unwrap_err();
            assert_eq!(err.exit_code(), exit::STAGE_ORDER, "{args:?}");
        }
    }

    #[test]
    fn step_by_step_matches_run() {
        let tmp = tempfile::tempdir().unwrap();
        let stepwise = tmp.path().join("a");
        let whole = tmp.path().join("b");
        let cfg = config_arg();
        for args in [
            &["ingest"][..],
            &["conflate"],
            &["dedup", "--jobs", "1"],
            &["merge"],
        ] {
            let mut full = vec!["--config", cfg.as_str()];
            full.extend_from_slice(args);
            let (res, _) = regdedup(&stepwise, &full);
            res.unwrap();
        }
        let (res, _) = regdedup(&whole, &["--config", &cfg, "run", "--jobs", "4"]);
        res.unwrap();
        for file in [CLUSTERS, DEDUP_REPORT, FINAL_SETS] {
            assert_eq!(
                std::fs::read(stepwise.join(file)).unwrap(),
                std::fs::read(whole.join(file)).unwrap(),
                "{file}"
            );
        }
        let a = regdedup(&stepwise, &["export", "--format", "csv"]).1;
        let b = regdedup(&whole, &["export", "--format", "csv"]).1;
        assert_eq!(a, b);
        assert!(a.starts_with("setId,ref,registry,name,url\n"));
    }

    #[test]
    fn rerun_reuses_unchanged_stages() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config_arg();
        regdedup(tmp.path(), &["--config", &cfg, "run"]).0.unwrap();
        let (res, out) = regdedup(tmp.path(), &["--config", &cfg, "--json", "run"]);
        res.unwrap();
        let lines: Vec<serde_json::Value> = out
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l["reused"] == true), "{out}");

        let (res, out) = regdedup(
            tmp.path(),
            &["--config", &cfg, "--json", "dedup", "--threshold", "0.95"],
        );
        res.unwrap();
        assert!(out.contains("\"reused\":false"));
        let (res, _) = regdedup(tmp.path(), &["export"]);
        assert_eq!(code(res), exit::STAGE_ORDER);
    }

    #[test]
    fn locked_runs_refuse_stage_commands() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config_arg();
        regdedup(tmp.path(), &["--config", &cfg, "run"]).0.unwrap();
        let run = RunDir::open(tmp.path()).unwrap();
        let _held = run.lock().unwrap();
        let (res, _) = regdedup(tmp.path(), &["merge"]);
        assert_eq!(code(res), exit::LOCKED);
        let (res, out) = regdedup(tmp.path(), &["stats"]);
        res.unwrap();
        assert!(!out.is_empty());
    }

    #[test]
    fn tampered_outputs_are_integrity_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config_arg();
        regdedup(tmp.path(), &["--config", &cfg, "run"]).0.unwrap();
        let path = tmp.path().join(CLUSTERS);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"\n");
        std::fs::write(&path, bytes).unwrap();
        let (res, _) = regdedup(tmp.path(), &["merge"]);
        assert_eq!(code(res), exit::INTEGRITY);
    }

    #[test]
    fn single_registry_override() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config_arg();
        let dump = tmp.path().join("roar.csv");
        std::fs::write(
            &dump,
            "eprintid,title,home_page,opendoar_id\n1,Solo Archive,http://solo.example.org,\n",
        )
        .unwrap();
        let dir = tmp.path().join("run");
        let (res, out) = regdedup(
            &dir,
            &[
                "--config",
                &cfg,
                "ingest",
                "--registry",
                "roar",
                "--input",
                dump.to_str().unwrap(),
            ],
        );
        res.unwrap();
        assert!(out.contains("roar"));
        let store_dir = dir.clone();
        regdedup(&store_dir, &["conflate"]).0.unwrap();
        let store = Store::open(&store_dir).unwrap();
        assert_eq!(store.profile_count(), 12 + 14 + 8 + 1);
    }

    #[test]
    fn invalid_dumps_fail_validation() {
        let tmp = tempfile::tempdir().unwrap();
        let dump = tmp.path().join("fs.json");
        std::fs::write(&dump, "{\"data\": [").unwrap();
        let (res, _) = regdedup(
            &tmp.path().join("run"),
            &[
                "ingest",
                "--registry",
                "fairsharing",
                "--input",
                dump.to_str().unwrap(),
            ],
        );
        assert_eq!(code(res), exit::VALIDATION);
        let (res, _) = regdedup(
            &tmp.path().join("run"),
            &[
                "ingest",
                "--registry",
                "fairsharing",
                "--input",
                "/nonexistent/dump.json",
            ],
        );
        assert_ne!(code(res), 0);
    }
}
