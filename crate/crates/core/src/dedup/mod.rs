//! Automatic duplicate detection in two phases.
//!
//! Candidate identification groups profiles into blocks by cheap keys and
//! only pairs profiles that share a block. Duplicate-set identification
//! scores every candidate pair, keeps those at or above the threshold as
//! edges, and closes the edge graph transitively into [`Cluster`]s.

pub mod similarity;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSets;
use crate::model::{
    BlockingKeyKind, Cluster, MatchEdge, ModelError, ProfileRef, RepositoryProfile,
    SimilarityConfig,
};

pub use similarity::{jaro, jaro_winkler, pair_similarity, score, NotComparable, PreparedProfile};

/// Profiles sharing one blocking key, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub key: String,
    pub members: Vec<ProfileRef>,
}

/// Blocking keys for one profile. Nameless profiles without a URL get none.
pub fn blocking_keys(profile: &RepositoryProfile, config: &SimilarityConfig) -> Vec<String> {
    prepared_keys(&PreparedProfile::new(profile, config), config)
}

fn prepared_keys(p: &PreparedProfile, config: &SimilarityConfig) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    for kind in &config.blocking.keys {
        let key = match kind {
            BlockingKeyKind::NamePrefix => {
                let mut parts: Vec<String> = p
                    .name
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .take(2)
                    .map(|t| t.chars().take(3).collect())
                    .collect();
                parts.sort();
                Some(parts.concat()).filter(|k| !k.is_empty())
            }
            BlockingKeyKind::UrlHost => p.host.clone(),
            BlockingKeyKind::Exhaustive => {
                (p.comparable() || p.host.is_some()).then(|| "*".to_string())
            }
        };
        if let Some(key) = key {
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys
}

/// Groups profiles into blocks, ordered by key.
pub fn build_blocks(profiles: &[RepositoryProfile], config: &SimilarityConfig) -> Vec<Block> {
    let mut by_key: BTreeMap<String, BTreeSet<ProfileRef>> = BTreeMap::new();
    for p in profiles {
        for key in blocking_keys(p, config) {
            by_key.entry(key).or_default().insert(p.id.clone());
        }
    }
    by_key
        .into_iter()
        .map(|(key, members)| Block {
            key,
            members: members.into_iter().collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedBlock {
    pub key: String,
    pub size: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    /// Unique `(a, b)` pairs with `a < b`, sorted.
    pub pairs: Vec<(ProfileRef, ProfileRef)>,
    pub truncated: Vec<TruncatedBlock>,
}

/// Pairs members inside each block over a sliding window.
///
/// Blocks larger than `max_block` keep only their first `max_block` members.
/// Same-registry pairs are kept: registries contain inward duplicates.
pub fn candidate_pairs(blocks: &[Block], config: &SimilarityConfig) -> Candidates {
    let mut pairs: BTreeSet<(ProfileRef, ProfileRef)> = BTreeSet::new();
    let mut truncated = Vec::new();
    for block in blocks {
        let mut members = block.members.as_slice();
        if members.len() > config.blocking.max_block {
            log::warn!(
                "block {:?} has {} members; truncated to {}",
                block.key,
                members.len(),
                config.blocking.max_block
            );
            truncated.push(TruncatedBlock {
                key: block.key.clone(),
                size: members.len(),
                kept: config.blocking.max_block,
            });
            members = &members[..config.blocking.max_block];
        }
        let window = config.blocking.window.unwrap_or(members.len()).max(2);
        for i in 0..members.len() {
            for j in (i + 1)..members.len().min(i + window) {
                let (a, b) = (&members[i], &members[j]);
                let pair = if a < b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                pairs.insert(pair);
            }
        }
    }
    Candidates {
        pairs: pairs.into_iter().collect(),
        truncated,
    }
}

/// Scores candidate pairs and keeps those at or above the threshold.
///
/// Pairs involving a nameless or unknown profile are skipped. Scoring runs
/// on the current rayon pool; the result is in pair order regardless.
pub fn match_pairs(
    pairs: &[(ProfileRef, ProfileRef)],
    profiles: &[RepositoryProfile],
    config: &SimilarityConfig,
) -> Vec<MatchEdge> {
    let prepared: HashMap<&ProfileRef, PreparedProfile> = profiles
        .par_iter()
        .map(|p| (&p.id, PreparedProfile::new(p, config)))
        .collect();
    match_prepared(pairs, &prepared, config)
}

fn match_prepared(
    pairs: &[(ProfileRef, ProfileRef)],
    prepared: &HashMap<&ProfileRef, PreparedProfile>,
    config: &SimilarityConfig,
) -> Vec<MatchEdge> {
    let mut edges: Vec<MatchEdge> = pairs
        .par_iter()
        .filter_map(|(a, b)| {
            let (p, q) = (prepared.get(a)?, prepared.get(b)?);
            let s = score(p, q, config).ok()?;
            (s >= config.threshold)
                .then(|| MatchEdge::new(a.clone(), b.clone(), s))
                .flatten()
        })
        .collect();
    edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    edges.dedup_by(|x, y| x.a == y.a && x.b == y.b);
    edges
}

/// Connected components of the edge graph with at least two members,
/// ordered by smallest member.
pub fn connected_components(edges: &[MatchEdge]) -> Vec<Cluster> {
    let mut nodes: BTreeSet<&ProfileRef> = BTreeSet::new();
    for e in edges {
        nodes.insert(&e.a);
        nodes.insert(&e.b);
    }
    let nodes: Vec<&ProfileRef> = nodes.into_iter().collect();
    let slot: HashMap<&ProfileRef, usize> =
        nodes.iter().enumerate().map(|(i, r)| (*r, i)).collect();

    let mut dsu = DisjointSets::new(nodes.len());
    for e in edges {
        dsu.union(slot[&e.a], slot[&e.b]);
    }

    let groups = dsu.groups();
    let mut group_of = vec![0usize; nodes.len()];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            group_of[m] = g;
        }
    }
    let mut group_edges: Vec<Vec<MatchEdge>> = vec![Vec::new(); groups.len()];
    for e in edges {
        group_edges[group_of[slot[&e.a]]].push(e.clone());
    }

    // Groups come out ordered by smallest node index, and nodes are sorted,
    // so cluster order is by smallest member.
    groups
        .into_iter()
        .zip(group_edges)
        .filter(|(members, _)| members.len() >= 2)
        .map(|(members, edges)| {
            Cluster::new(
                members.into_iter().map(|i| nodes[i].clone()).collect(),
                edges,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub profiles: usize,
    pub nameless: usize,
    pub blocks: usize,
    pub candidate_pairs: usize,
    pub edges: usize,
    pub clusters: usize,
    pub truncated_blocks: Vec<TruncatedBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub clusters: Vec<Cluster>,
    pub edges: Vec<MatchEdge>,
    pub report: DedupReport,
}

/// Blocking, candidate pairing, matching and closure in one call.
pub fn run_dedup(
    profiles: &[RepositoryProfile],
    config: &SimilarityConfig,
) -> Result<DedupOutcome, ModelError> {
    config.validate()?;
    let prepared: Vec<PreparedProfile> = profiles
        .par_iter()
        .map(|p| PreparedProfile::new(p, config))
        .collect();

    let mut by_key: BTreeMap<String, BTreeSet<ProfileRef>> = BTreeMap::new();
    for p in &prepared {
        for key in prepared_keys(p, config) {
            by_key.entry(key).or_default().insert(p.id.clone());
        }
    }
    let blocks: Vec<Block> = by_key
        .into_iter()
        .map(|(key, members)| Block {
            key,
            members: members.into_iter().collect(),
        })
        .collect();
    let candidates = candidate_pairs(&blocks, config);

    let index: HashMap<&ProfileRef, PreparedProfile> =
        prepared.iter().map(|p| (&p.id, p.clone())).collect();
    let edges = match_prepared(&candidates.pairs, &index, config);
    let clusters = connected_components(&edges);

    let report = DedupReport {
        profiles: profiles.len(),
        nameless: prepared.iter().filter(|p| !p.comparable()).count(),
        blocks: blocks.len(),
        candidate_pairs: candidates.pairs.len(),
        edges: edges.len(),
        clusters: clusters.len(),
        truncated_blocks: candidates.truncated,
    };
    Ok(DedupOutcome {
        clusters,
        edges,
        report,
    })
}

/// [`run_dedup`] on a dedicated pool of `threads` workers.
pub fn run_dedup_with_threads(
    profiles: &[RepositoryProfile],
    config: &SimilarityConfig,
    threads: usize,
) -> Result<DedupOutcome, ModelError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| {
            ModelError::InvalidConfig(format!("cannot start {threads} worker threads: {e}"))
        })?;
    pool.install(|| run_dedup(profiles, config))
}
