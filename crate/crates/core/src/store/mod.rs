//! Run directory: stage documents, manifest, lock file and decision log.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json            stage records, digests, counts, run id
//! profiles.jsonl           ingest: one RepositoryProfile per line
//! ingest_report.json       ingest: one IngestReport per registry
//! claim_sets.jsonl         conflate: claim-derived duplicate sets
//! problematic.jsonl        conflate: problematic claim chains
//! conflation_report.json   conflate
//! clusters.jsonl           dedup: similarity clusters with their edges
//! dedup_report.json        dedup
//! final_sets.jsonl         merge: final duplicate sets
//! merge_report.json        merge
//! decisions.jsonl          append-only curator decisions
//! .lock                    held by a stage command while it runs
//! ```
//!
//! Every stage document is written to a temporary file and renamed into
//! place. The manifest is updated last, so an interrupted stage leaves the
//! run at its previous completed stage.

mod review;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use review::{
    effective_decisions, resolutions, ExportFormat, MemberDetail, ReviewDecision, ReviewFilter,
    SetDetail, SetKind, SetView, Stats, StatusCounts, Store,
};

pub const MANIFEST: &str = "manifest.json";
pub const PROFILES: &str = "profiles.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const CLAIM_SETS: &str = "claim_sets.jsonl";
pub const PROBLEMATIC: &str = "problematic.jsonl";
pub const CONFLATION_REPORT: &str = "conflation_report.json";
pub const CLUSTERS: &str = "clusters.jsonl";
pub const DEDUP_REPORT: &str = "dedup_report.json";
pub const FINAL_SETS: &str = "final_sets.jsonl";
pub const MERGE_REPORT: &str = "merge_report.json";
pub const DECISIONS: &str = "decisions.jsonl";
pub const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("`{command}` needs a completed {missing} stage; run `{missing}` first")]
    StageOrder { command: String, missing: Stage },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("run directory is locked by another command ({0}); remove the file if no command is running")]
    Locked(PathBuf),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Conflate,
    Dedup,
    Merge,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ingest, Stage::Conflate, Stage::Dedup, Stage::Merge];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Conflate => "conflate",
            Stage::Dedup => "dedup",
            Stage::Merge => "merge",
        }
    }

    pub fn predecessor(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Conflate => Some(Stage::Ingest),
            Stage::Dedup => Some(Stage::Conflate),
            Stage::Merge => Some(Stage::Dedup),
        }
    }

    pub fn files(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[PROFILES, INGEST_REPORT],
            Stage::Conflate => &[CLAIM_SETS, PROBLEMATIC, CONFLATION_REPORT],
            Stage::Dedup => &[CLUSTERS, DEDUP_REPORT],
            Stage::Merge => &[FINAL_SETS, MERGE_REPORT],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub completed_at: String,
    /// Digests of everything the stage read: input dumps, mappings,
    /// configuration, upstream documents.
    pub inputs: BTreeMap<String, String>,
    /// Digests of the documents the stage wrote.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    /// Digest over all stage output digests. Empty before the first stage.
    pub run_id: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl RunManifest {
    pub fn completed(&self, stage: Stage) -> bool {
        self.stages.contains_key(&stage)
    }

    /// The last stage in order that has completed.
    pub fn last_completed(&self) -> Option<Stage> {
        self.stages.keys().max().copied()
    }

    fn recompute_id(&mut self) {
        if self.stages.is_empty() {
            self.run_id.clear();
            return;
        }
        let lines = self.stages.iter().flat_map(|(stage, rec)| {
            rec.outputs
                .iter()
                .map(move |(file, digest)| format!("{stage}:{file}:{digest}"))
        });
        self.run_id = format!(
            "run-{}",
            &hex_digest(lines.collect::<Vec<_>>().join("\n").as_bytes())[..16]
        );
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    fs::read(path)
        .map(|b| hex_digest(&b))
        .map_err(|e| StoreError::io(path, e))
}

/// Serializes items as one compact JSON document per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    out.push(b'\n');
    out
}

fn parse_jsonl<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.push(
            serde_json::from_slice(line).map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
    f.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

/// Exclusive hold on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Documents produced by one stage, committed together.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub counts: BTreeMap<String, usize>,
}

impl StageOutput {
    pub fn input(mut self, name: impl Into<String>, digest: impl Into<String>) -> Self {
        self.inputs.insert(name.into(), digest.into());
        self
    }

    pub fn file(mut self, name: &'static str, bytes: Vec<u8>) -> Self {
        self.files.push((name, bytes));
        self
    }

    pub fn count(mut self, name: impl Into<String>, n: usize) -> Self {
        self.counts.insert(name.into(), n);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Opens a run directory, creating it if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Self::open(root)
    }

    /// Opens an existing run directory. A missing manifest means no stage
    /// has completed yet.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::NotFound(format!(
                "run directory {}",
                root.display()
            )));
        }
        let manifest = read_manifest(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    /// Re-reads the manifest from disk.
    pub fn reload(&mut self) -> Result<()> {
        self.manifest = read_manifest(&self.root)?;
        Ok(())
    }

    /// Run id currently on disk, which differs from [`Self::run_id`] if
    /// another command has rerun a stage since this handle was opened.
    pub fn disk_run_id(&self) -> Result<String> {
        Ok(read_manifest(&self.root)?.run_id)
    }

    pub fn lock(&self) -> Result<RunLock> {
        let path = self.path(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(path))
            }
            Err(e) => Err(StoreError::io(&path, e)),
        }
    }

    /// Checks that `stage` has completed and that its documents still
    /// match their recorded digests.
    pub fn require(&self, stage: Stage, command: &str) -> Result<&StageRecord> {
        let record = self
            .manifest
            .stages
            .get(&stage)
            .ok_or_else(|| StoreError::StageOrder {
                command: command.to_string(),
                missing: stage,
            })?;
        for (file, digest) in &record.outputs {
            let actual = file_digest(&self.path(file))?;
            if &actual != digest {
                return Err(StoreError::Integrity(format!(
                    "{file} changed since stage {stage} wrote it; rerun `{stage}`"
                )));
            }
        }
        Ok(record)
    }

    /// Checks the predecessor of `stage`.
    pub fn ready_for(&self, stage: Stage) -> Result<()> {
        if let Some(prev) = stage.predecessor() {
            self.require(prev, stage.name())?;
        }
        Ok(())
    }

    /// True when `stage` already completed from exactly these inputs and its
    /// documents are intact, so rerunning it would change nothing.
    pub fn up_to_date(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> bool {
        match self.manifest.stages.get(&stage) {
            Some(rec) if &rec.inputs == inputs => self.require(stage, stage.name()).is_ok(),
            _ => false,
        }
    }

    /// Writes a stage's documents and records it. Completing a stage
    /// discards it and every later stage first.
    pub fn commit(&mut self, stage: Stage, output: StageOutput) -> Result<()> {
        self.ready_for(stage)?;
        let stale: Vec<Stage> = self
            .manifest
            .stages
            .keys()
            .filter(|s| **s >= stage)
            .copied()
            .collect();
        if !stale.is_empty() {
            for s in &stale {
                self.manifest.stages.remove(s);
            }
            self.manifest.recompute_id();
            self.write_manifest()?;
            for s in stale.iter().filter(|s| **s > stage) {
                for file in s.files() {
                    let _ = fs::remove_file(self.path(file));
                }
            }
        }

        let mut outputs = BTreeMap::new();
        for (name, bytes) in &output.files {
            write_atomic(&self.path(name), bytes)?;
            outputs.insert(name.to_string(), hex_digest(bytes));
        }
        self.manifest.stages.insert(
            stage,
            StageRecord {
                completed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                inputs: output.inputs,
                outputs,
                counts: output.counts,
            },
        );
        self.manifest.recompute_id();
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<()> {
        write_atomic(&self.path(MANIFEST), &to_json(&self.manifest))
    }

    /// Reads a stage document, verifying it against the manifest digest.
    pub fn read_bytes(&self, stage: Stage, file: &str) -> Result<Vec<u8>> {
        let record = self
            .manifest
            .stages
            .get(&stage)
            .ok_or_else(|| StoreError::StageOrder {
                command: format!("reading {file}"),
                missing: stage,
            })?;
        let path = self.path(file);
        let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
        if record.outputs.get(file) != Some(&hex_digest(&bytes)) {
            return Err(StoreError::Integrity(format!(
                "{file} does not match the digest recorded by stage {stage}"
            )));
        }
        Ok(bytes)
    }

    pub fn read_jsonl<T: DeserializeOwned>(&self, stage: Stage, file: &str) -> Result<Vec<T>> {
        let bytes = self.read_bytes(stage, file)?;
        parse_jsonl(&self.path(file), &bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, stage: Stage, file: &str) -> Result<T> {
        let bytes = self.read_bytes(stage, file)?;
        serde_json::from_slice(&bytes).map_err(|source| StoreError::Json {
            path: self.path(file),
            line: 0,
            source,
        })
    }

    /// The full decision log, oldest first.
    pub fn read_decisions(&self) -> Result<Vec<ReviewDecision>> {
        let path = self.path(DECISIONS);
        match fs::read(&path) {
            Ok(bytes) => parse_jsonl(&path, &bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(StoreError::io(&path, e)),
        }
    }

    /// Appends one decision to the log and flushes it to disk.
    pub fn append_decision(&self, decision: &ReviewDecision) -> Result<()> {
        let path = self.path(DECISIONS);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        f.write_all(&to_jsonl(std::slice::from_ref(decision)))
            .and_then(|_| f.sync_data())
            .map_err(|e| StoreError::io(&path, e))
    }
}

fn read_manifest(root: &Path) -> Result<RunManifest> {
    let path = root.join(MANIFEST);
    match File::open(&path) {
        Ok(f) => serde_json::from_reader(BufReader::new(f)).map_err(|source| StoreError::Json {
            path,
            line: 0,
            source,
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(RunManifest::default()),
        Err(e) => Err(StoreError::io(&path, e)),
    }
}

/// Reads line-delimited JSON from any reader.
pub fn read_jsonl_from<T: DeserializeOwned, R: std::io::Read>(
    reader: R,
    label: &Path,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| StoreError::Json {
                path: label.to_path_buf(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
