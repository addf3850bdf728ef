#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use registry_dedup::claimgraph::conflate_claims;
use registry_dedup::dedup::{pair_similarity, run_dedup, run_dedup_with_threads, DedupOutcome};
use registry_dedup::ingest::normalize_url;
use registry_dedup::merge::{extend_sets, MergeReport};
use registry_dedup::{
    BlockingConfig, Cluster, DuplicateSet, MatchEdge, ProfileRef, RegistryId, RepositoryProfile,
    SimilarityConfig,
};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples")
}

pub fn r(s: &str) -> ProfileRef {
    s.parse().unwrap()
}

pub fn refs(items: &[&str]) -> BTreeSet<ProfileRef> {
    items.iter().map(|s| r(s)).collect()
}

const NAMES: [&str; 10] = [
    "Open Research Data Archive",
    "Marine Biodiversity Portal",
    "Institutional Repository of Lisbon",
    "Climate Observations Library",
    "Genome Sequence Depository",
    "Digital Humanities Collection",
    "Università di Padova Research",
    "Research Data Archive",
    "Astronomy Image Gallery",
    "Open Access Theses",
];

const HOSTS: [&str; 6] = [
    "data.example.org",
    "www.example.org",
    "repo.uni-a.edu",
    "archive.uni-a.edu",
    "marine.example.net",
    "theses.example.ac.uk",
];

fn mutate(name: &str, how: u8) -> String {
    match how {
        0 | 1 => name.to_string(),
        2 => name.to_uppercase(),
        3 => {
            let mut s = name.to_string();
            s.remove(s.len() / 2);
            s
        }
        4 => format!("{name} Repository"),
        _ => String::new(),
    }
}

fn local_id(registry: RegistryId, i: usize) -> String {
    match registry {
        RegistryId::Re3data => format!("r3d{:09}", 100_000_000 + i),
        _ => (1000 + i).to_string(),
    }
}

/// Random profiles over a small vocabulary so names, hosts and claims collide often.
pub fn corpus(max: usize) -> impl Strategy<Value = Vec<RepositoryProfile>> {
    let row = (
        0..4usize,
        0..NAMES.len(),
        0u8..6,
        0..HOSTS.len() + 3,
        prop::collection::vec(0..1000usize, 0..3),
    );
    prop::collection::vec(row, 0..=max).prop_map(|rows| {
        let ids: Vec<ProfileRef> = rows
            .iter()
            .enumerate()
            .map(|(i, (reg, ..))| {
                let registry = RegistryId::ALL[*reg];
                ProfileRef::new(registry, local_id(registry, i)).unwrap()
            })
            .collect();
        rows.iter()
            .enumerate()
            .map(|(i, (_, name, how, host, picks))| {
                let id = ids[i].clone();
                let claims: Vec<ProfileRef> = picks
                    .iter()
                    .filter_map(|p| {
                        if *p >= 990 {
                            // dangling claim into a registry that may be claimed
                            let target = RegistryId::ALL
                                .into_iter()
                                .find(|t| id.registry().may_claim(*t));
                            target.map(|t| ProfileRef::new(t, local_id(t, 90_000 + p)).unwrap())
                        } else {
                            ids.get(p % ids.len()).cloned()
                        }
                    })
                    .filter(|t| *t != id && id.registry().may_claim(t.registry()))
                    .collect();
                let url = HOSTS
                    .get(*host)
                    .and_then(|h| normalize_url(&format!("https://{h}/{}", i % 2)));
                RepositoryProfile::new(id, mutate(NAMES[*name], *how), url, claims).unwrap()
            })
            .collect()
    })
}

pub fn exhaustive(threshold: f64) -> SimilarityConfig {
    SimilarityConfig {
        blocking: BlockingConfig::exhaustive(1000),
        ..SimilarityConfig::default()
    }
    .with_threshold(threshold)
}

/// Components of the edge graph by breadth-first search, singletons dropped.
pub fn bfs_components(edges: &[MatchEdge]) -> BTreeSet<BTreeSet<ProfileRef>> {
    let mut adj: BTreeMap<&ProfileRef, Vec<&ProfileRef>> = BTreeMap::new();
    for e in edges {
        adj.entry(&e.a).or_default().push(&e.b);
        adj.entry(&e.b).or_default().push(&e.a);
    }
    let mut seen: BTreeSet<&ProfileRef> = BTreeSet::new();
    let mut out = BTreeSet::new();
    for start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([*start]);
        while let Some(v) = queue.pop_front() {
            comp.insert(v.clone());
            for w in &adj[v] {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        out.insert(comp);
    }
    out
}

/// Every matchable pair scored directly.
pub fn all_pairs(
    profiles: &[RepositoryProfile],
    config: &SimilarityConfig,
) -> BTreeSet<(ProfileRef, ProfileRef)> {
    let mut out = BTreeSet::new();
    for (i, p) in profiles.iter().enumerate() {
        for q in &profiles[i + 1..] {
            if let Ok(s) = pair_similarity(p, q, config) {
                if s >= config.threshold {
                    let (a, b) = if p.id < q.id {
                        (&p.id, &q.id)
                    } else {
                        (&q.id, &p.id)
                    };
                    out.insert((a.clone(), b.clone()));
                }
            }
        }
    }
    out
}

pub fn edge_pairs(edges: &[MatchEdge]) -> BTreeSet<(ProfileRef, ProfileRef)> {
    edges.iter().map(|e| (e.a.clone(), e.b.clone())).collect()
}

pub fn member_sets<'a>(
    groups: impl IntoIterator<Item = &'a BTreeSet<ProfileRef>>,
) -> BTreeSet<BTreeSet<ProfileRef>> {
    groups.into_iter().cloned().collect()
}

pub struct Pipeline {
    pub sets: Vec<DuplicateSet>,
    pub dedup: DedupOutcome,
    pub finals: Vec<DuplicateSet>,
    pub report: MergeReport,
}

pub fn pipeline(profiles: &[RepositoryProfile], config: &SimilarityConfig) -> Pipeline {
    let sets = conflate_claims(profiles).sets;
    let dedup = run_dedup(profiles, config).unwrap();
    let (finals, report) = extend_sets(&sets, &dedup.clusters).unwrap();
    Pipeline {
        sets,
        dedup,
        finals,
        report,
    }
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(message()))
    }
}

pub fn check_disjoint_cover_conserve(profiles: &[RepositoryProfile]) -> Result<(), TestCaseError> {
    let p = pipeline(profiles, &SimilarityConfig::default());
    let mut owner: HashMap<&ProfileRef, usize> = HashMap::new();
    for (i, s) in p.finals.iter().enumerate() {
        for m in &s.members {
            if let Some(j) = owner.insert(m, i) {
                return Err(TestCaseError::fail(format!(
                    "{m} in final sets {j} and {i}"
                )));
            }
        }
    }
    let inputs = p
        .sets
        .iter()
        .map(|s| &s.members)
        .chain(p.dedup.clusters.iter().map(|c| &c.members));
    let mut union = BTreeSet::new();
    for group in inputs {
        let homes: BTreeSet<usize> = group.iter().filter_map(|m| owner.get(m).copied()).collect();
        ensure(
            homes.len() == 1 && group.iter().all(|m| owner.contains_key(m)),
            || format!("{group:?} spread over final sets {homes:?}"),
        )?;
        union.extend(group.iter().cloned());
    }
    let out: BTreeSet<ProfileRef> = owner.keys().map(|m| (*m).clone()).collect();
    ensure(out == union, || "members were gained or lost".into())?;
    let total: usize = p.finals.iter().map(|s| s.len()).sum();
    ensure(total == union.len(), || "duplicate membership".into())
}

pub fn check_idempotent_and_order_free(
    profiles: &[RepositoryProfile],
    seed: u64,
) -> Result<(), TestCaseError> {
    let p = pipeline(profiles, &SimilarityConfig::default());
    let (again, _) = extend_sets(&p.finals, &p.dedup.clusters).unwrap();
    ensure(again == p.finals, || {
        "second pass changed the final sets".into()
    })?;

    let mut sets = p.sets.clone();
    let mut clusters: Vec<Cluster> = p.dedup.clusters.clone();
    shuffle(&mut sets, seed);
    shuffle(&mut clusters, seed.rotate_left(17));
    let (shuffled, report) = extend_sets(&sets, &clusters).unwrap();
    let key = |v: &[DuplicateSet]| {
        v.iter()
            .map(|s| (s.id.clone(), s.members.clone(), s.provenance))
            .collect::<BTreeSet<_>>()
    };
    ensure(key(&shuffled) == key(&p.finals), || {
        "input order changed the result".into()
    })?;
    ensure(report.counts == p.report.counts, || {
        "input order changed the counts".into()
    })
}

fn shuffle<T>(items: &mut [T], seed: u64) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    items.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
}

pub fn check_components(profiles: &[RepositoryProfile]) -> Result<(), TestCaseError> {
    let out = run_dedup(profiles, &SimilarityConfig::default()).unwrap();
    let got = member_sets(out.clusters.iter().map(|c| &c.members));
    ensure(got == bfs_components(&out.edges), || {
        "clusters differ from traversal oracle".into()
    })
}

pub fn check_threshold_monotone(
    profiles: &[RepositoryProfile],
    lo: f64,
    hi: f64,
) -> Result<(), TestCaseError> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let loose = run_dedup(profiles, &SimilarityConfig::default().with_threshold(lo)).unwrap();
    let strict = run_dedup(profiles, &SimilarityConfig::default().with_threshold(hi)).unwrap();
    ensure(
        edge_pairs(&strict.edges).is_subset(&edge_pairs(&loose.edges)),
        || format!("edges at {hi} not a subset of edges at {lo}"),
    )?;
    for c in &strict.clusters {
        ensure(
            loose
                .clusters
                .iter()
                .any(|l| c.members.is_subset(&l.members)),
            || {
                format!(
                    "cluster {:?} at {hi} splits across clusters at {lo}",
                    c.members
                )
            },
        )?;
    }
    Ok(())
}

pub fn check_blocking_recall(
    profiles: &[RepositoryProfile],
    threshold: f64,
) -> Result<(), TestCaseError> {
    let config = exhaustive(threshold);
    let out = run_dedup(profiles, &config).unwrap();
    ensure(out.report.truncated_blocks.is_empty(), || {
        "exhaustive block was truncated".into()
    })?;
    ensure(
        edge_pairs(&out.edges) == all_pairs(profiles, &config),
        || "blocked edges differ from all pairs".into(),
    )
}

pub fn check_parallel_bytes(
    profiles: &[RepositoryProfile],
    threads: usize,
) -> Result<(), TestCaseError> {
    let config = SimilarityConfig::default();
    let render = |threads: usize| {
        let out = run_dedup_with_threads(profiles, &config, threads).unwrap();
        let sets = conflate_claims(profiles).sets;
        let (finals, report) = extend_sets(&sets, &out.clusters).unwrap();
        serde_json::to_vec(&(&out.clusters, &out.edges, &out.report, &finals, &report)).unwrap()
    };
    ensure(render(1) == render(threads), || {
        format!("output differs between 1 and {threads} threads")
    })
}

pub fn check_bookkeeping(profiles: &[RepositoryProfile]) -> Result<(), TestCaseError> {
    let p = pipeline(profiles, &SimilarityConfig::default());
    let r = &p.report;
    ensure(
        r.extension_events() as i64 - r.fusion_events() as i64 == r.unique_extended() as i64,
        || {
            format!(
                "{} extension - {} fusion != {} extended",
                r.extension_events(),
                r.fusion_events(),
                r.unique_extended()
            )
        },
    )?;
    // claim sets are never dedup-only, so every extended output shows up in the counts
    ensure(
        r.unique_extended() == r.counts.extended + r.counts.merged,
        || {
            format!(
                "{} extended by events, {:?} by provenance",
                r.unique_extended(),
                r.counts
            )
        },
    )?;
    ensure(r.promotion_events() == r.counts.dedup_only, || {
        "promotions differ from dedup-only sets".into()
    })
}
