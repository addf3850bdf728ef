//! Pipeline stages over a run directory. Each stage reads its predecessor's
//! documents, computes, and commits its own documents to the manifest.
//!
//! A stage whose inputs have not changed since it last completed is not
//! recomputed, so an interrupted pipeline resumes where it stopped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claimgraph::{conflate_claims, ConflationReport, ProblematicSet};
use crate::dedup::{run_dedup, run_dedup_with_threads, DedupReport};
use crate::ingest::mapping::default_mapping_text;
use crate::ingest::{
    ingest_dump, DumpFormat, FieldMapping, IngestError, IngestReport, MappingError,
};
use crate::merge::{extend_sets, resolve_problematic, MergeError, MergeReport};
use crate::model::{
    Cluster, DuplicateSet, ModelError, RegistryId, RepositoryProfile, SimilarityConfig,
};
use crate::store::{
    hex_digest, resolutions, to_json, to_jsonl, RunDir, Stage, StageOutput, StoreError, CLAIM_SETS,
    CLUSTERS, CONFLATION_REPORT, DEDUP_REPORT, FINAL_SETS, INGEST_REPORT, MERGE_REPORT,
    PROBLEMATIC, PROFILES,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{}: {source}", path.display())]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{}: {source}", path.display())]
    Mapping {
        path: PathBuf,
        #[source]
        source: MappingError,
    },
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("{0}")]
    Config(String),
}

/// One registry dump to ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSpec {
    pub registry: RegistryId,
    pub path: PathBuf,
    /// Field mapping file; the built-in mapping for the registry if absent.
    pub mapping: Option<PathBuf>,
    /// Overrides the mapping's dump format.
    pub format: Option<DumpFormat>,
}

impl InputSpec {
    pub fn new(registry: RegistryId, path: impl Into<PathBuf>) -> Self {
        Self {
            registry,
            path: path.into(),
            mapping: None,
            format: None,
        }
    }
}

/// Result of a stage call. `reused` is set when the stage was already
/// complete for identical inputs and nothing was recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRun<R> {
    pub report: R,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupDocument {
    pub config: SimilarityConfig,
    pub report: DedupReport,
}

fn read(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads the dumps into profiles.
///
/// When ingest already ran, registries not named in `inputs` keep their
/// previously ingested profiles, so one registry can be refreshed alone.
pub fn ingest(
    run: &mut RunDir,
    inputs: &[InputSpec],
) -> Result<StageRun<Vec<IngestReport>>, PipelineError> {
    if inputs.is_empty() {
        return Err(PipelineError::Config(
            "no input dumps given; use --config or --registry with --input".into(),
        ));
    }
    let fresh: BTreeSet<RegistryId> = inputs.iter().map(|i| i.registry).collect();
    if fresh.len() != inputs.len() {
        return Err(PipelineError::Config(
            "a registry is listed twice among the inputs".into(),
        ));
    }

    let mut loaded = Vec::new();
    let mut digests = BTreeMap::new();
    for spec in inputs {
        let (mut mapping, mapping_digest) = match &spec.mapping {
            Some(path) => {
                let text = read(path)?;
                let m = FieldMapping::load(path).map_err(|source| PipelineError::Mapping {
                    path: path.clone(),
                    source,
                })?;
                (m, hex_digest(&text))
            }
            None => (
                FieldMapping::default_for(spec.registry),
                hex_digest(default_mapping_text(spec.registry).as_bytes()),
            ),
        };
        if mapping.registry != spec.registry {
            return Err(PipelineError::Config(format!(
                "mapping for {} describes registry {}",
                spec.registry, mapping.registry
            )));
        }
        if let Some(format) = spec.format {
            mapping.format = format;
        }
        let bytes = read(&spec.path)?;
        let reg = spec.registry.name();
        digests.insert(format!("dump:{reg}"), hex_digest(&bytes));
        digests.insert(format!("mapping:{reg}"), mapping_digest);
        digests.insert(
            format!("format:{reg}"),
            format!("{:?}", mapping.format).to_lowercase(),
        );
        loaded.push((spec, mapping, bytes));
    }

    let mut profiles: BTreeMap<_, RepositoryProfile> = BTreeMap::new();
    let mut reports: BTreeMap<RegistryId, IngestReport> = BTreeMap::new();
    if let Some(previous) = run.manifest().stages.get(&Stage::Ingest) {
        for (k, v) in &previous.inputs {
            let keep = k
                .split_once(':')
                .and_then(|(_, reg)| reg.parse::<RegistryId>().ok())
                .is_some_and(|reg| !fresh.contains(&reg));
            if keep {
                digests.insert(k.clone(), v.clone());
            }
        }
        if run.up_to_date(Stage::Ingest, &digests) {
            let report = run.read_json(Stage::Ingest, INGEST_REPORT)?;
            return Ok(StageRun {
                report,
                reused: true,
            });
        }
        let old: Vec<RepositoryProfile> = run.read_jsonl(Stage::Ingest, PROFILES)?;
        profiles.extend(
            old.into_iter()
                .filter(|p| !fresh.contains(&p.id.registry()))
                .map(|p| (p.id.clone(), p)),
        );
        let old: Vec<IngestReport> = run.read_json(Stage::Ingest, INGEST_REPORT)?;
        reports.extend(
            old.into_iter()
                .filter(|r| !fresh.contains(&r.registry))
                .map(|r| (r.registry, r)),
        );
    }

    for (spec, mapping, bytes) in loaded {
        let out =
            ingest_dump(bytes.as_slice(), &mapping).map_err(|source| PipelineError::Ingest {
                path: spec.path.clone(),
                source,
            })?;
        for w in &out.report.warnings {
            log::debug!("{}: {}", spec.registry, w.message);
        }
        log::info!(
            "{}: {} records, {} profiles, {} skipped",
            spec.registry,
            out.report.records_read,
            out.report.profiles_emitted,
            out.report.skipped.len()
        );
        profiles.extend(out.profiles.into_iter().map(|p| (p.id.clone(), p)));
        reports.insert(spec.registry, out.report);
    }

    let profiles: Vec<RepositoryProfile> = profiles.into_values().collect();
    let reports: Vec<IngestReport> = reports.into_values().collect();
    let mut output = StageOutput::default()
        .file(PROFILES, to_jsonl(&profiles))
        .file(INGEST_REPORT, to_json(&reports))
        .count("profiles", profiles.len())
        .count("claims", profiles.iter().map(|p| p.claims.len()).sum());
    output.inputs = digests;
    run.commit(Stage::Ingest, output)?;
    Ok(StageRun {
        report: reports,
        reused: false,
    })
}

/// Conflates the ingested claims into duplicate sets and problematic chains.
pub fn conflate(run: &mut RunDir) -> Result<StageRun<ConflationReport>, PipelineError> {
    run.ready_for(Stage::Conflate)?;
    let profiles_bytes = run.read_bytes(Stage::Ingest, PROFILES)?;
    let inputs = BTreeMap::from([("profiles".to_string(), hex_digest(&profiles_bytes))]);
    if run.up_to_date(Stage::Conflate, &inputs) {
        let report = run.read_json(Stage::Conflate, CONFLATION_REPORT)?;
        return Ok(StageRun {
            report,
            reused: true,
        });
    }
    let profiles: Vec<RepositoryProfile> = run.read_jsonl(Stage::Ingest, PROFILES)?;
    let c = conflate_claims(&profiles);
    let mut output = StageOutput::default()
        .file(CLAIM_SETS, to_jsonl(&c.sets))
        .file(PROBLEMATIC, to_jsonl(&c.problematic))
        .file(CONFLATION_REPORT, to_json(&c.report))
        .count("sets", c.sets.len())
        .count("problematic", c.problematic.len())
        .count("dangling", c.report.dangling.len());
    output.inputs = inputs;
    run.commit(Stage::Conflate, output)?;
    Ok(StageRun {
        report: c.report,
        reused: false,
    })
}

/// Finds similarity clusters over all profiles. `threads` sizes a dedicated
/// worker pool; the output does not depend on it.
pub fn dedup(
    run: &mut RunDir,
    config: &SimilarityConfig,
    threads: Option<usize>,
) -> Result<StageRun<DedupReport>, PipelineError> {
    config.validate()?;
    run.ready_for(Stage::Dedup)?;
    let profiles_bytes = run.read_bytes(Stage::Ingest, PROFILES)?;
    let inputs = BTreeMap::from([
        ("profiles".to_string(), hex_digest(&profiles_bytes)),
        ("similarity".to_string(), hex_digest(&to_json(config))),
    ]);
    if run.up_to_date(Stage::Dedup, &inputs) {
        let doc: DedupDocument = run.read_json(Stage::Dedup, DEDUP_REPORT)?;
        return Ok(StageRun {
            report: doc.report,
            reused: true,
        });
    }
    let profiles: Vec<RepositoryProfile> = run.read_jsonl(Stage::Ingest, PROFILES)?;
    let out = match threads {
        Some(n) => run_dedup_with_threads(&profiles, config, n)?,
        None => run_dedup(&profiles, config)?,
    };
    for t in &out.report.truncated_blocks {
        log::warn!(
            "block {:?} truncated from {} to {} members",
            t.key,
            t.size,
            t.kept
        );
    }
    let doc = DedupDocument {
        config: config.clone(),
        report: out.report,
    };
    let mut output = StageOutput::default()
        .file(CLUSTERS, to_jsonl(&out.clusters))
        .file(DEDUP_REPORT, to_json(&doc))
        .count("candidatePairs", doc.report.candidate_pairs)
        .count("edges", doc.report.edges)
        .count("clusters", doc.report.clusters);
    output.inputs = inputs;
    run.commit(Stage::Dedup, output)?;
    Ok(StageRun {
        report: doc.report,
        reused: false,
    })
}

/// Folds curator resolutions of problematic chains into the claim sets,
/// then extends, merges and promotes with the clusters.
pub fn merge(run: &mut RunDir) -> Result<StageRun<MergeReport>, PipelineError> {
    run.ready_for(Stage::Merge)?;
    run.require(Stage::Conflate, "merge")?;
    let claim_sets: Vec<DuplicateSet> = run.read_jsonl(Stage::Conflate, CLAIM_SETS)?;
    let problematic: Vec<ProblematicSet> = run.read_jsonl(Stage::Conflate, PROBLEMATIC)?;
    let clusters: Vec<Cluster> = run.read_jsonl(Stage::Dedup, CLUSTERS)?;
    let resolved = resolutions(&problematic, &run.read_decisions()?);

    let inputs = BTreeMap::from([
        (
            "claimSets".to_string(),
            hex_digest(&run.read_bytes(Stage::Conflate, CLAIM_SETS)?),
        ),
        (
            "clusters".to_string(),
            hex_digest(&run.read_bytes(Stage::Dedup, CLUSTERS)?),
        ),
        ("resolutions".to_string(), hex_digest(&to_json(&resolved))),
    ]);
    if run.up_to_date(Stage::Merge, &inputs) {
        let report = run.read_json(Stage::Merge, MERGE_REPORT)?;
        return Ok(StageRun {
            report,
            reused: true,
        });
    }

    let sets = resolve_problematic(&claim_sets, &resolved)?;
    let (final_sets, report) = extend_sets(&sets, &clusters)?;
    let mut output = StageOutput::default()
        .file(FINAL_SETS, to_jsonl(&final_sets))
        .file(MERGE_REPORT, to_json(&report))
        .count("finalSets", final_sets.len())
        .count("needsReview", report.needs_review.len())
        .count("resolutions", resolved.len());
    output.inputs = inputs;
    run.commit(Stage::Merge, output)?;
    Ok(StageRun {
        report,
        reused: false,
    })
}

/// Summary of a whole pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub ingest: Vec<IngestReport>,
    pub conflation: ConflationReport,
    pub dedup: DedupReport,
    pub merge: MergeReport,
}

/// Runs every stage in order.
pub fn run_pipeline(
    run: &mut RunDir,
    inputs: &[InputSpec],
    config: &SimilarityConfig,
    threads: Option<usize>,
) -> Result<PipelineSummary, PipelineError> {
    let ingest = ingest(run, inputs)?.report;
    let conflation = conflate(run)?.report;
    let dedup = dedup(run, config, threads)?.report;
    let merge = merge(run)?.report;
    Ok(PipelineSummary {
        ingest,
        conflation,
        dedup,
        merge,
    })
}
