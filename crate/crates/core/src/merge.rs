//! Integration of claim-derived duplicate sets with de-duplication clusters.
//!
//! Sets and clusters form a bipartite graph joined by shared profiles. Every
//! connected component of that graph becomes one final set.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsu::DisjointSets;
use crate::model::{
    Cluster, DuplicateSet, HistoryEvent, ProfileRef, Provenance, SetStatus, Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("duplicate sets {first} and {second} both contain {member}")]
    OverlappingSets {
        first: String,
        second: String,
        member: ProfileRef,
    },
    #[error("resolution of {0} has no members")]
    EmptyResolution(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceCounts {
    pub claims_only: usize,
    pub dedup_only: usize,
    pub extended: usize,
    pub merged: usize,
}

impl ProvenanceCounts {
    pub fn of<'a>(sets: impl IntoIterator<Item = &'a DuplicateSet>) -> Self {
        let mut c = Self::default();
        for s in sets {
            match s.provenance {
                Provenance::ClaimsOnly => c.claims_only += 1,
                Provenance::DedupOnly => c.dedup_only += 1,
                Provenance::Extended => c.extended += 1,
                Provenance::Merged => c.merged += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.claims_only + self.dedup_only + self.extended + self.merged
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum MergeEvent {
    /// One input set grew through one or more clusters.
    Extension {
        set: String,
        clusters: Vec<String>,
        into: String,
    },
    /// An input set was absorbed into a set that already absorbed another.
    Fusion { set: String, into: String },
    /// A cluster that touches no set became a set of its own.
    Promotion { cluster: String, into: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeReport {
    pub counts: ProvenanceCounts,
    pub total: usize,
    pub events: Vec<MergeEvent>,
    pub needs_review: Vec<String>,
}

impl MergeReport {
    pub fn extension_events(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, MergeEvent::Extension { .. }))
            .count()
    }

    pub fn fusion_events(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, MergeEvent::Fusion { .. }))
            .count()
    }

    pub fn promotion_events(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, MergeEvent::Promotion { .. }))
            .count()
    }

    /// Final sets that came out of at least one extension.
    pub fn unique_extended(&self) -> usize {
        self.events
            .iter()
            .filter_map(|e| match e {
                MergeEvent::Extension { into, .. } => Some(into),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .len()
    }
}

fn check_disjoint(sets: &[DuplicateSet]) -> Result<(), MergeError> {
    let mut owner: HashMap<&ProfileRef, &str> = HashMap::new();
    for s in sets {
        for m in &s.members {
            if let Some(first) = owner.insert(m, &s.id) {
                return Err(MergeError::OverlappingSets {
                    first: first.to_string(),
                    second: s.id.clone(),
                    member: m.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Groups item indices by shared members. `items[i]` yields the members of item `i`.
fn overlap_components<'a>(items: &[&'a BTreeSet<ProfileRef>]) -> Vec<Vec<usize>> {
    let mut dsu = DisjointSets::new(items.len());
    let mut first_seen: HashMap<&'a ProfileRef, usize> = HashMap::new();
    for (i, members) in items.iter().enumerate() {
        for m in members.iter() {
            match first_seen.get(m) {
                Some(&j) => {
                    dsu.union(i, j);
                }
                None => {
                    first_seen.insert(m, i);
                }
            }
        }
    }
    dsu.groups()
}

fn sorted_final(mut sets: Vec<DuplicateSet>) -> Vec<DuplicateSet> {
    sets.sort_by(|a, b| a.members.iter().next().cmp(&b.members.iter().next()));
    sets
}

/// Extends, fuses and promotes. Input sets must be pairwise disjoint.
///
/// A component holding one set and clusters that add nothing new leaves the
/// set untouched, so running this again on its own output is a no-op.
pub fn extend_sets(
    sets: &[DuplicateSet],
    clusters: &[Cluster],
) -> Result<(Vec<DuplicateSet>, MergeReport), MergeError> {
    check_disjoint(sets)?;

    let mut sets: Vec<&DuplicateSet> = sets.iter().collect();
    sets.sort_by(|a, b| a.id.cmp(&b.id));
    let mut clusters: Vec<&Cluster> = clusters.iter().collect();
    clusters.sort_by(|a, b| a.id.cmp(&b.id));

    let items: Vec<&BTreeSet<ProfileRef>> = sets
        .iter()
        .map(|s| &s.members)
        .chain(clusters.iter().map(|c| &c.members))
        .collect();

    let mut out = Vec::new();
    let mut events = Vec::new();
    for group in overlap_components(&items) {
        let (set_idx, cluster_idx): (Vec<usize>, Vec<usize>) =
            group.into_iter().partition(|&i| i < sets.len());
        let part_sets: Vec<&DuplicateSet> = set_idx.iter().map(|&i| sets[i]).collect();
        let part_clusters: Vec<&Cluster> = cluster_idx
            .iter()
            .map(|&i| clusters[i - sets.len()])
            .collect();

        let members: BTreeSet<ProfileRef> = part_sets
            .iter()
            .flat_map(|s| s.members.iter())
            .chain(part_clusters.iter().flat_map(|c| c.members.iter()))
            .cloned()
            .collect();
        let cluster_ids: Vec<String> = part_clusters.iter().map(|c| c.id.clone()).collect();

        match part_sets.as_slice() {
            [] => {
                let history = cluster_ids
                    .iter()
                    .map(|id| HistoryEvent::Cluster {
                        cluster: id.clone(),
                    })
                    .collect();
                let set = DuplicateSet::new(
                    members,
                    Provenance::DedupOnly,
                    SetStatus::NeedsReview,
                    history,
                );
                for id in &cluster_ids {
                    events.push(MergeEvent::Promotion {
                        cluster: id.clone(),
                        into: set.id.clone(),
                    });
                }
                out.push(set);
            }
            [only] if members.len() == only.members.len() => out.push((*only).clone()),
            _ => {
                let provenance = if part_sets
                    .iter()
                    .all(|s| s.provenance == Provenance::DedupOnly)
                {
                    Provenance::DedupOnly
                } else if part_sets.len() == 1 {
                    Provenance::Extended
                } else {
                    Provenance::Merged
                };
                let mut history: Vec<HistoryEvent> = part_sets
                    .iter()
                    .flat_map(|s| s.history.iter().cloned())
                    .collect();
                history.extend(
                    part_sets
                        .iter()
                        .map(|s| HistoryEvent::Set { set: s.id.clone() }),
                );
                history.extend(cluster_ids.iter().map(|id| HistoryEvent::Cluster {
                    cluster: id.clone(),
                }));
                let mut set =
                    DuplicateSet::new(members, provenance, SetStatus::NeedsReview, history);
                set.notes = join_notes(part_sets.iter().filter_map(|s| s.notes.as_deref()));

                for (i, s) in part_sets.iter().enumerate() {
                    let grew = part_clusters
                        .iter()
                        .any(|c| !c.members.is_subset(&s.members));
                    if grew {
                        events.push(MergeEvent::Extension {
                            set: s.id.clone(),
                            clusters: part_clusters
                                .iter()
                                .filter(|c| !c.members.is_disjoint(&s.members))
                                .map(|c| c.id.clone())
                                .collect(),
                            into: set.id.clone(),
                        });
                    }
                    if i > 0 {
                        events.push(MergeEvent::Fusion {
                            set: s.id.clone(),
                            into: set.id.clone(),
                        });
                    }
                }
                out.push(set);
            }
        }
    }

    let out = sorted_final(out);
    let counts = ProvenanceCounts::of(&out);
    let report = MergeReport {
        counts,
        total: out.len(),
        events,
        needs_review: out
            .iter()
            .filter(|s| s.status == SetStatus::NeedsReview)
            .map(|s| s.id.clone())
            .collect(),
    };
    Ok((out, report))
}

fn join_notes<'a>(notes: impl Iterator<Item = &'a str>) -> Option<String> {
    let notes: BTreeSet<&str> = notes.collect();
    (!notes.is_empty()).then(|| notes.into_iter().collect::<Vec<_>>().join("; "))
}

/// A curator's resolution of a problematic claim chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub problematic: String,
    pub verdict: Verdict,
    /// Members confirmed as one repository: the chain itself for an accept,
    /// the curator's list for an amend. Ignored for a reject.
    pub members: BTreeSet<ProfileRef>,
}

/// Folds resolved problematic chains into the claim-derived sets.
///
/// Accepted and amended chains become sets of their own, fused with any set
/// they overlap. The result keeps the curator's status when every member was
/// confirmed by a resolution, and goes back to review otherwise.
pub fn resolve_problematic(
    sets: &[DuplicateSet],
    resolutions: &[Resolution],
) -> Result<Vec<DuplicateSet>, MergeError> {
    check_disjoint(sets)?;
    let mut active: Vec<&Resolution> = resolutions
        .iter()
        .filter(|r| r.verdict != Verdict::Reject)
        .collect();
    active.sort_by(|a, b| a.problematic.cmp(&b.problematic));
    if let Some(r) = active.iter().find(|r| r.members.is_empty()) {
        return Err(MergeError::EmptyResolution(r.problematic.clone()));
    }
    if active.is_empty() {
        return Ok(sets.to_vec());
    }

    let mut sets: Vec<&DuplicateSet> = sets.iter().collect();
    sets.sort_by(|a, b| a.id.cmp(&b.id));
    let items: Vec<&BTreeSet<ProfileRef>> = sets
        .iter()
        .map(|s| &s.members)
        .chain(active.iter().map(|r| &r.members))
        .collect();

    let mut out = Vec::new();
    for group in overlap_components(&items) {
        let (set_idx, res_idx): (Vec<usize>, Vec<usize>) =
            group.into_iter().partition(|&i| i < sets.len());
        let part_sets: Vec<&DuplicateSet> = set_idx.iter().map(|&i| sets[i]).collect();
        let part_res: Vec<&Resolution> = res_idx.iter().map(|&i| active[i - sets.len()]).collect();
        if part_res.is_empty() {
            out.extend(part_sets.into_iter().cloned());
            continue;
        }

        let members: BTreeSet<ProfileRef> = part_sets
            .iter()
            .flat_map(|s| s.members.iter())
            .chain(part_res.iter().flat_map(|r| r.members.iter()))
            .cloned()
            .collect();
        let mut history: Vec<HistoryEvent> = part_sets
            .iter()
            .flat_map(|s| s.history.iter().cloned())
            .collect();
        history.extend(
            part_sets
                .iter()
                .map(|s| HistoryEvent::Set { set: s.id.clone() }),
        );
        history.extend(part_res.iter().map(|r| HistoryEvent::Resolution {
            problematic: r.problematic.clone(),
            verdict: r.verdict,
        }));
        let confirmed: BTreeSet<&ProfileRef> =
            part_res.iter().flat_map(|r| r.members.iter()).collect();
        let status = if confirmed.len() != members.len() {
            SetStatus::NeedsReview
        } else if part_res.iter().all(|r| r.verdict == Verdict::Accept) {
            SetStatus::Accepted
        } else {
            SetStatus::Amended
        };
        out.push(DuplicateSet::new(
            members,
            Provenance::ClaimsOnly,
            status,
            history,
        ));
    }
    Ok(sorted_final(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MatchEdge;

    fn refs(items: &[&str]) -> BTreeSet<ProfileRef> {
        items.iter().map(|s| s.parse().unwrap()).collect()
    }

    fn set(items: &[&str]) -> DuplicateSet {
        DuplicateSet::new(refs(items), Provenance::ClaimsOnly, SetStatus::Auto, vec![])
    }

    fn cluster(items: &[&str]) -> Cluster {
        let members = refs(items);
        let v: Vec<&ProfileRef> = members.iter().collect();
        let edges = v
            .windows(2)
            .map(|w| MatchEdge::new(w[0].clone(), w[1].clone(), 1.0).unwrap())
            .collect();
        Cluster::new(members, edges)
    }

    #[test]
    fn bridging_cluster_merges_two_sets() {
        let s1 = set(&["od:241", "rr:978"]);
        let s2 = set(&["od:239", "rr:2328", "rr:5221", "rr:976"]);
        let (out, report) =
            extend_sets(&[s1.clone(), s2.clone()], &[cluster(&["rr:976", "rr:978"])]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].members,
            refs(&["rr:978", "rr:976", "rr:5221", "rr:2328", "od:239", "od:241"])
        );
        assert_eq!(out[0].provenance, Provenance::Merged);
        assert_eq!(out[0].status, SetStatus::NeedsReview);
        assert!(out[0]
            .history
            .contains(&HistoryEvent::Set { set: s1.id.clone() }));
        assert!(out[0]
            .history
            .contains(&HistoryEvent::Set { set: s2.id.clone() }));
        assert_eq!(report.counts.merged, 1);
        assert_eq!(
            (
                report.extension_events(),
                report.fusion_events(),
                report.unique_extended()
            ),
            (2, 1, 1)
        );
    }

    #[test]
    fn cluster_extends_set() {
        let s = set(&["fs:2560", "rd:r3d100011201"]);
        let (out, report) = extend_sets(&[s], &[cluster(&["od:4194", "rd:r3d100011201"])]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].members,
            refs(&["od:4194", "rd:r3d100011201", "fs:2560"])
        );
        assert_eq!(out[0].provenance, Provenance::Extended);
        assert_eq!(report.needs_review, vec![out[0].id.clone()]);
    }

    #[test]
    fn disjoint_cluster_is_promoted() {
        let s = set(&["fs:1", "rd:r3d1"]);
        let (out, report) =
            extend_sets(std::slice::from_ref(&s), &[cluster(&["rr:1", "rr:2"])]).unwrap();
        assert_eq!(out.len(), 2);
        let promoted = out
            .iter()
            .find(|x| x.provenance == Provenance::DedupOnly)
            .unwrap();
        assert_eq!(promoted.status, SetStatus::NeedsReview);
        assert_eq!(promoted.members, refs(&["rr:1", "rr:2"]));
        assert!(out.contains(&s));
        assert_eq!(report.promotion_events(), 1);
        assert_eq!(
            report.counts,
            ProvenanceCounts {
                claims_only: 1,
                dedup_only: 1,
                extended: 0,
                merged: 0
            }
        );
    }

    #[test]
    fn zero_clusters_is_identity() {
        let sets = vec![set(&["fs:1", "rd:r3d1"]), set(&["od:1", "rr:1"])];
        let (out, report) = extend_sets(&sets, &[]).unwrap();
        assert_eq!(out.len(), 2);
        assert!(sets.iter().all(|s| out.contains(s)));
        assert_eq!(report.counts.claims_only, 2);
        assert!(report.events.is_empty());
    }

    #[test]
    fn contained_cluster_leaves_set_alone() {
        let s = set(&["fs:1", "rd:r3d1", "od:1"]);
        let (out, report) =
            extend_sets(std::slice::from_ref(&s), &[cluster(&["fs:1", "od:1"])]).unwrap();
        assert_eq!(out, vec![s]);
        assert!(report.events.is_empty());
    }

    #[test]
    fn overlapping_inputs_are_rejected() {
        let err =
            extend_sets(&[set(&["fs:1", "rd:r3d1"]), set(&["rd:r3d1", "od:1"])], &[]).unwrap_err();
        assert!(matches!(err, MergeError::OverlappingSets { .. }));
    }

    #[test]
    fn resolutions_become_sets() {
        let base = vec![
            set(&["fs:2163", "od:5"]),
            set(&["fs:9", "rd:r3d9"]),
            set(&["fs:2424", "rd:r3d100011538"]),
        ];
        let res = vec![
            Resolution {
                problematic: "ps-a".into(),
                verdict: Verdict::Amend,
                members: refs(&["fs:3652", "rd:r3d100012729"]),
            },
            Resolution {
                problematic: "ps-b".into(),
                verdict: Verdict::Amend,
                members: refs(&["fs:2163", "rd:r3d100000039"]),
            },
            Resolution {
                problematic: "ps-d".into(),
                verdict: Verdict::Accept,
                members: refs(&["rd:r3d100010412", "fs:2424", "rd:r3d100011538"]),
            },
            Resolution {
                problematic: "ps-c".into(),
                verdict: Verdict::Reject,
                members: refs(&["fs:9"]),
            },
        ];
        let out = resolve_problematic(&base, &res).unwrap();
        assert_eq!(out.len(), 4);
        let covered = out
            .iter()
            .find(|s| s.members.contains(&"fs:2424".parse().unwrap()))
            .unwrap();
        assert_eq!(covered.len(), 3);
        assert_eq!(covered.status, SetStatus::Accepted);
        let alone = out
            .iter()
            .find(|s| s.members.contains(&"fs:3652".parse().unwrap()))
            .unwrap();
        assert_eq!(alone.status, SetStatus::Amended);
        assert!(alone.history.contains(&HistoryEvent::Resolution {
            problematic: "ps-a".into(),
            verdict: Verdict::Amend
        }));
        let fused = out
            .iter()
            .find(|s| s.members.contains(&"od:5".parse().unwrap()))
            .unwrap();
        assert_eq!(fused.members, refs(&["fs:2163", "od:5", "rd:r3d100000039"]));
        assert_eq!(fused.status, SetStatus::NeedsReview);
        assert!(out.contains(&base[1]));

        let empty = vec![Resolution {
            problematic: "ps-x".into(),
            verdict: Verdict::Accept,
            members: BTreeSet::new(),
        }];
        assert!(resolve_problematic(&base, &empty).is_err());
    }

    mod props {
        use super::*;
        use crate::model::RegistryId;
        use proptest::prelude::*;

        fn member(i: u8) -> ProfileRef {
            let reg = RegistryId::ALL[(i % 4) as usize];
            ProfileRef::new(reg, format!("{}", i / 4)).unwrap()
        }

        /// Disjoint sets carved out of a shuffled universe plus arbitrary clusters.
        fn corpus() -> impl Strategy<Value = (Vec<DuplicateSet>, Vec<Cluster>)> {
            let sets = Just((0u8..60).collect::<Vec<_>>())
                .prop_shuffle()
                .prop_flat_map(|universe| {
                    prop::collection::vec(2usize..5, 0..8).prop_map(move |sizes| {
                        let mut out = Vec::new();
                        let mut at = 0;
                        for n in sizes {
                            if at + n > universe.len() {
                                break;
                            }
                            let members: BTreeSet<ProfileRef> =
                                universe[at..at + n].iter().map(|&i| member(i)).collect();
                            out.push(DuplicateSet::new(
                                members,
                                Provenance::ClaimsOnly,
                                SetStatus::Auto,
                                vec![],
                            ));
                            at += n;
                        }
                        out
                    })
                });
            let clusters = prop::collection::vec(prop::collection::btree_set(0u8..60, 2..4), 0..8)
                .prop_map(|cs| {
                    cs.into_iter()
                        .map(|c| Cluster::new(c.into_iter().map(member).collect(), vec![]))
                        .collect::<Vec<_>>()
                });
            (sets, clusters)
        }

        fn partition(sets: &[DuplicateSet]) -> BTreeSet<BTreeSet<ProfileRef>> {
            sets.iter().map(|s| s.members.clone()).collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn final_sets_are_disjoint_and_cover((sets, clusters) in corpus()) {
                let (out, report) = extend_sets(&sets, &clusters).unwrap();
                let mut seen = BTreeSet::new();
                for s in &out {
                    for m in &s.members {
                        prop_assert!(seen.insert(m.clone()), "{} in two final sets", m);
                    }
                }
                for members in sets.iter().map(|s| &s.members).chain(clusters.iter().map(|c| &c.members)) {
                    prop_assert_eq!(out.iter().filter(|f| members.is_subset(&f.members)).count(), 1);
                }
                let expected: BTreeSet<ProfileRef> = sets.iter().flat_map(|s| s.members.iter())
                    .chain(clusters.iter().flat_map(|c| c.members.iter())).cloned().collect();
                prop_assert_eq!(seen, expected);
                prop_assert_eq!(report.counts.total(), out.len());
                prop_assert_eq!(report.extension_events() - report.fusion_events(), report.unique_extended());
            }

            #[test]
            fn extension_is_idempotent((sets, clusters) in corpus()) {
                let (once, _) = extend_sets(&sets, &clusters).unwrap();
                let (twice, report) = extend_sets(&once, &clusters).unwrap();
                prop_assert_eq!(&once, &twice);
                prop_assert!(report.events.is_empty());
            }

            #[test]
            fn order_does_not_matter((sets, clusters) in corpus(), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let (a, ra) = extend_sets(&sets, &clusters).unwrap();
                let (mut s2, mut c2) = (sets.clone(), clusters.clone());
                s2.shuffle(&mut rng);
                c2.shuffle(&mut rng);
                let (b, rb) = extend_sets(&s2, &c2).unwrap();
                prop_assert_eq!(partition(&a), partition(&b));
                prop_assert_eq!(a, b);
                prop_assert_eq!(ra, rb);
            }
        }
    }
}
