//! Semi-automated de-duplication of scholarly repository registries.
//!
//! The pipeline reads dumps of FAIRsharing, re3data, OpenDOAR and ROAR,
//! conflates the registries' cross-registry "same-as" claims into duplicate
//! sets, finds further duplicates by blocking and name/URL similarity, fuses
//! both results, and hands everything touched by automatic matching to a
//! curator review queue.
//!
//! Stages, in order:
//!
//! - [`ingest`]: dumps to [`RepositoryProfile`]s
//! - [`claimgraph`]: claims to duplicate sets and problematic chains
//! - [`dedup`]: blocking, pairwise matching, transitive closure
//! - [`merge`]: extend/merge claim sets with clusters
//! - [`store`]: run directory, review decisions, export
//! - [`api`]: HTTP façade for the review UI
//! - [`cli`]: stage commands

pub mod api;
pub mod claimgraph;
pub mod cli;
pub mod dedup;
pub mod dsu;
pub mod ingest;
pub mod merge;
pub mod model;
pub mod store;

pub use model::{
    format_profile_ref, parse_profile_ref, BlockingConfig, BlockingKeyKind, Cluster, DuplicateSet,
    HistoryEvent, MatchEdge, NormalizationOptions, ProfileRef, Provenance, RegistryId,
    RepositoryProfile, SetStatus, SimilarityConfig, Verdict,
};
