//! Conflation of registry claims into duplicate sets.
//!
//! Phases run in a fixed order and visit profiles sorted by canonical ref:
//!
//! 1. every FAIRsharing → re3data claim seeds a set, unless the re3data
//!    profile claims a *different* FAIRsharing profile back (a back-claim
//!    mismatch, reported as a [`ProblematicSet`]);
//! 2. each seeded set follows its re3data member's claims to OpenDOAR, then
//!    to ROAR;
//! 3. a ROAR profile that joined brings along its OpenDOAR claim;
//! 4. re3data profiles with unprocessed claims seed new sets and expand the
//!    same way;
//! 5. remaining ROAR → OpenDOAR claims either extend the set already holding
//!    the OpenDOAR profile or seed a new pair.
//!
//! A profile joins a set only if no other set holds it. Otherwise the set
//! being built is withdrawn and reported as a membership conflict.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    short_digest, Cluster, DuplicateSet, HistoryEvent, ProfileRef, Provenance, RegistryId,
    RepositoryProfile, SetStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemReason {
    BackClaimMismatch,
    MembershipConflict,
}

impl fmt::Display for ProblemReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemReason::BackClaimMismatch => "back-claim-mismatch",
            ProblemReason::MembershipConflict => "membership-conflict",
        })
    }
}

/// A claim configuration that needs a curator.
///
/// For a back-claim mismatch `chain` is `[start, middle, other]` with
/// `start != other`. For a membership conflict `chain` is the claim
/// `[from, to]` whose target already sat in another set, and
/// `colliding_sets` holds the withdrawn set's id and the holder's id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblematicSet {
    pub id: String,
    pub members: Vec<ProfileRef>,
    pub chain: Vec<ProfileRef>,
    pub reason: ProblemReason,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colliding_sets: Vec<String>,
}

impl ProblematicSet {
    pub fn chain_id(reason: ProblemReason, chain: &[ProfileRef]) -> String {
        let parts =
            std::iter::once(reason.to_string()).chain(chain.iter().map(ProfileRef::to_string));
        format!("ps-{}", short_digest(parts))
    }

    pub fn chain_text(&self) -> String {
        self.chain
            .iter()
            .map(ProfileRef::to_string)
            .collect::<Vec<_>>()
            .join("→")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingClaim {
    pub from: ProfileRef,
    pub to: ProfileRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflationReport {
    pub profiles: usize,
    pub claims: usize,
    pub dangling: Vec<DanglingClaim>,
    pub sets: usize,
    pub problematic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflation {
    pub sets: Vec<DuplicateSet>,
    pub problematic: Vec<ProblematicSet>,
    pub report: ConflationReport,
}

/// Runs the five conflation phases. Pure and deterministic.
///
/// Claims pointing at refs that are not in `profiles` are ignored and listed
/// in the report as dangling.
pub fn conflate_claims(profiles: &[RepositoryProfile]) -> Conflation {
    let mut c = Conflator::new(profiles);
    c.run();
    c.finish()
}

struct Builder {
    members: Vec<ProfileRef>,
    history: Vec<HistoryEvent>,
    alive: bool,
    withdrawn_id: Option<String>,
}

struct PendingProblem {
    members: Vec<ProfileRef>,
    chain: Vec<ProfileRef>,
    reason: ProblemReason,
    /// (withdrawn builder, holder builder)
    colliding: Option<(usize, usize)>,
}

struct Conflator<'a> {
    index: BTreeMap<&'a ProfileRef, &'a RepositoryProfile>,
    processed: HashSet<(ProfileRef, ProfileRef)>,
    owner: HashMap<ProfileRef, usize>,
    builders: Vec<Builder>,
    problems: Vec<PendingProblem>,
    report: ConflationReport,
}

impl<'a> Conflator<'a> {
    fn new(profiles: &'a [RepositoryProfile]) -> Self {
        let index: BTreeMap<&ProfileRef, &RepositoryProfile> =
            profiles.iter().map(|p| (&p.id, p)).collect();
        let mut report = ConflationReport {
            profiles: index.len(),
            ..Default::default()
        };
        for p in index.values() {
            report.claims += p.claims.len();
            let mut targets: Vec<&ProfileRef> = p.claims.iter().collect();
            targets.sort();
            for t in targets {
                if !index.contains_key(t) {
                    log::warn!("dangling claim {} -> {}", p.id, t);
                    report.dangling.push(DanglingClaim {
                        from: p.id.clone(),
                        to: t.clone(),
                    });
                }
            }
        }
        Self {
            index,
            processed: HashSet::new(),
            owner: HashMap::new(),
            builders: Vec::new(),
            problems: Vec::new(),
            report,
        }
    }

    fn profiles_of(&self, registry: RegistryId) -> Vec<&'a RepositoryProfile> {
        self.index
            .values()
            .copied()
            .filter(|p| p.registry == registry)
            .collect()
    }

    /// Claims of `p` into `registry` that resolve to a known profile.
    fn claims(&self, p: &ProfileRef, registry: RegistryId) -> Vec<ProfileRef> {
        match self.index.get(p) {
            Some(profile) => profile
                .claims_to(registry)
                .into_iter()
                .filter(|t| self.index.contains_key(*t))
                .cloned()
                .collect(),
            None => Vec::new(),
        }
    }

    /// Marks a claim as processed; returns `false` if it already was.
    fn take(&mut self, from: &ProfileRef, to: &ProfileRef) -> bool {
        self.processed.insert((from.clone(), to.clone()))
    }

    fn new_builder(&mut self, first: &ProfileRef) -> usize {
        let idx = self.builders.len();
        self.builders.push(Builder {
            members: vec![first.clone()],
            history: Vec::new(),
            alive: true,
            withdrawn_id: None,
        });
        self.owner.insert(first.clone(), idx);
        idx
    }

    fn note_claim(&mut self, b: usize, from: &ProfileRef, to: &ProfileRef) {
        let event = HistoryEvent::Claim {
            from: from.clone(),
            to: to.clone(),
        };
        if !self.builders[b].history.contains(&event) {
            self.builders[b].history.push(event);
        }
    }

    /// Adds `to` to builder `b` under the membership rule. On conflict the
    /// builder is withdrawn and `false` is returned.
    fn join(&mut self, b: usize, from: &ProfileRef, to: &ProfileRef) -> bool {
        match self.owner.get(to).copied() {
            None => {
                self.builders[b].members.push(to.clone());
                self.owner.insert(to.clone(), b);
                self.note_claim(b, from, to);
                true
            }
            Some(holder) if holder == b => {
                self.note_claim(b, from, to);
                true
            }
            Some(holder) => {
                self.withdraw(b, holder, from, to);
                false
            }
        }
    }

    fn withdraw(&mut self, b: usize, holder: usize, from: &ProfileRef, to: &ProfileRef) {
        let mut members = self.builders[b].members.clone();
        members.push(to.clone());
        for m in &self.builders[holder].members {
            if !members.contains(m) {
                members.push(m.clone());
            }
        }
        let own: BTreeSet<ProfileRef> = self.builders[b].members.iter().cloned().collect();
        self.builders[b].withdrawn_id = Some(DuplicateSet::content_id(&own));
        self.builders[b].alive = false;
        for m in std::mem::take(&mut self.builders[b].members) {
            self.owner.remove(&m);
        }
        self.problems.push(PendingProblem {
            members,
            chain: vec![from.clone(), to.clone()],
            reason: ProblemReason::MembershipConflict,
            colliding: Some((b, holder)),
        });
    }

    fn back_claim_mismatch(&mut self, chain: [&ProfileRef; 3]) {
        self.problems.push(PendingProblem {
            members: chain.iter().map(|r| (*r).clone()).collect(),
            chain: chain.iter().map(|r| (*r).clone()).collect(),
            reason: ProblemReason::BackClaimMismatch,
            colliding: None,
        });
    }

    fn run(&mut self) {
        // Phase 1: FAIRsharing -> re3data seeds, with back-claim check.
        let mut seeded = Vec::new();
        for fs in self.profiles_of(RegistryId::Fairsharing) {
            for rd in self.claims(&fs.id, RegistryId::Re3data) {
                if !self.take(&fs.id, &rd) {
                    continue;
                }
                let back = self.claims(&rd, RegistryId::Fairsharing);
                if let Some(other) = back
                    .iter()
                    .find(|b| **b != fs.id)
                    .filter(|_| !back.contains(&fs.id))
                {
                    let other = other.clone();
                    self.take(&rd, &other);
                    self.back_claim_mismatch([&fs.id, &rd, &other]);
                    continue;
                }
                let b = match self.owner.get(&fs.id).copied() {
                    Some(b) => b,
                    None => {
                        let b = self.new_builder(&fs.id);
                        seeded.push(b);
                        b
                    }
                };
                if self.join(b, &fs.id, &rd) && back.contains(&fs.id) {
                    self.take(&rd, &fs.id);
                    self.note_claim(b, &rd, &fs.id);
                }
            }
        }

        // Phases 2 and 3 for the seeded sets, in seeding order.
        for b in seeded {
            self.extend_from_re3data(b);
        }

        // Phase 4: re3data claims not yet processed.
        for rd in self.profiles_of(RegistryId::Re3data) {
            if self.owner.contains_key(&rd.id) {
                continue;
            }
            let open: Vec<ProfileRef> = rd
                .claims
                .iter()
                .filter(|t| self.index.contains_key(*t))
                .filter(|t| !self.processed.contains(&(rd.id.clone(), (*t).clone())))
                .cloned()
                .collect();
            if open.is_empty() {
                continue;
            }

            let fs_targets = self.claims(&rd.id, RegistryId::Fairsharing);
            let mut mismatch = false;
            for fs in &fs_targets {
                if !self.take(&rd.id, fs) {
                    continue;
                }
                let back = self.claims(fs, RegistryId::Re3data);
                if !back.is_empty() && !back.contains(&rd.id) {
                    let other = back[0].clone();
                    self.back_claim_mismatch([&rd.id, fs, &other]);
                    mismatch = true;
                    break;
                }
            }
            if mismatch {
                for t in open {
                    self.take(&rd.id, &t);
                }
                continue;
            }

            let b = self.new_builder(&rd.id);
            let mut ok = true;
            for fs in &fs_targets {
                if !self.join(b, &rd.id, fs) {
                    ok = false;
                    break;
                }
                if self.claims(fs, RegistryId::Re3data).contains(&rd.id) {
                    self.take(fs, &rd.id);
                    self.note_claim(b, fs, &rd.id);
                }
            }
            if ok {
                self.extend_from_re3data(b);
            }
        }

        // Phase 5: ROAR -> OpenDOAR.
        for rr in self.profiles_of(RegistryId::Roar) {
            for od in self.claims(&rr.id, RegistryId::Opendoar) {
                if !self.take(&rr.id, &od) {
                    continue;
                }
                match (
                    self.owner.get(&rr.id).copied(),
                    self.owner.get(&od).copied(),
                ) {
                    (Some(b), _) => {
                        self.join(b, &rr.id, &od);
                    }
                    (None, Some(holder)) => {
                        self.builders[holder].members.push(rr.id.clone());
                        self.owner.insert(rr.id.clone(), holder);
                        self.note_claim(holder, &rr.id, &od);
                    }
                    (None, None) => {
                        let b = self.new_builder(&rr.id);
                        self.join(b, &rr.id, &od);
                    }
                }
            }
        }
    }

    /// Phases 2 and 3: OpenDOAR claims, then ROAR claims (and their OpenDOAR
    /// claims) of every re3data member of builder `b`.
    fn extend_from_re3data(&mut self, b: usize) {
        let rds: Vec<ProfileRef> = self.builders[b]
            .members
            .iter()
            .filter(|m| m.registry() == RegistryId::Re3data)
            .cloned()
            .collect();
        for rd in rds {
            for od in self.claims(&rd, RegistryId::Opendoar) {
                if self.take(&rd, &od) && !self.join(b, &rd, &od) {
                    return;
                }
            }
            for rr in self.claims(&rd, RegistryId::Roar) {
                if !self.take(&rd, &rr) {
                    continue;
                }
                if !self.join(b, &rd, &rr) {
                    return;
                }
                for od in self.claims(&rr, RegistryId::Opendoar) {
                    if self.take(&rr, &od) && !self.join(b, &rr, &od) {
                        return;
                    }
                }
            }
        }
    }

    fn finish(self) -> Conflation {
        let final_ids: Vec<Option<String>> = self
            .builders
            .iter()
            .map(|b| {
                (b.alive && b.members.len() >= 2)
                    .then(|| DuplicateSet::content_id(&b.members.iter().cloned().collect()))
            })
            .collect();
        let withdrawn_ids: Vec<Option<String>> = self
            .builders
            .iter()
            .map(|b| b.withdrawn_id.clone())
            .collect();
        let id_of = |i: usize| {
            final_ids[i]
                .clone()
                .or_else(|| withdrawn_ids[i].clone())
                .unwrap_or_else(|| DuplicateSet::content_id(&BTreeSet::new()))
        };

        let mut sets: Vec<DuplicateSet> = self
            .builders
            .into_iter()
            .zip(&final_ids)
            .filter_map(|(b, id)| {
                id.as_ref()?;
                let members: BTreeSet<ProfileRef> = b.members.into_iter().collect();
                Some(DuplicateSet::new(
                    members,
                    Provenance::ClaimsOnly,
                    SetStatus::Auto,
                    b.history,
                ))
            })
            .collect();
        sets.sort_by(|a, b| a.members.first().cmp(&b.members.first()));

        let problematic: Vec<ProblematicSet> = self
            .problems
            .into_iter()
            .map(|p| {
                let colliding_sets = match p.colliding {
                    Some((own, holder)) => vec![id_of(own), id_of(holder)],
                    None => Vec::new(),
                };
                ProblematicSet {
                    id: ProblematicSet::chain_id(p.reason, &p.chain),
                    members: p.members,
                    chain: p.chain,
                    reason: p.reason,
                    colliding_sets,
                }
            })
            .collect();

        let mut report = self.report;
        report.sets = sets.len();
        report.problematic = problematic.len();
        Conflation {
            sets,
            problematic,
            report,
        }
    }
}

/// One registry mix inside a cardinality level, e.g. `1x OpenDOAR + 2x ROAR`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub label: String,
    pub registries: BTreeMap<RegistryId, usize>,
    pub count: usize,
    /// Share of this level, in percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionLevel {
    pub size: usize,
    pub count: usize,
    /// Share of all groups, in percent.
    pub percent: f64,
    pub combinations: Vec<Combination>,
}

/// Cardinality histogram with per-level registry breakdown.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub total: usize,
    pub levels: Vec<CompositionLevel>,
}

impl CompositionReport {
    pub fn level(&self, size: usize) -> Option<&CompositionLevel> {
        self.levels.iter().find(|l| l.size == size)
    }

    /// Number of groups whose cardinality lies in `range`.
    pub fn count_sizes(&self, range: std::ops::RangeInclusive<usize>) -> usize {
        self.levels
            .iter()
            .filter(|l| range.contains(&l.size))
            .map(|l| l.count)
            .sum()
    }
}

pub fn composition(sets: &[DuplicateSet]) -> CompositionReport {
    composition_of(sets.iter().map(|s| &s.members))
}

pub fn cluster_composition(clusters: &[Cluster]) -> CompositionReport {
    composition_of(clusters.iter().map(|c| &c.members))
}

pub fn composition_of<'a, I>(groups: I) -> CompositionReport
where
    I: IntoIterator<Item = &'a BTreeSet<ProfileRef>>,
{
    let mut by_size: BTreeMap<usize, BTreeMap<Vec<(RegistryId, usize)>, usize>> = BTreeMap::new();
    let mut total = 0;
    for members in groups {
        let mut counts: BTreeMap<RegistryId, usize> = BTreeMap::new();
        for m in members {
            *counts.entry(m.registry()).or_default() += 1;
        }
        let key: Vec<(RegistryId, usize)> = counts.into_iter().collect();
        *by_size
            .entry(members.len())
            .or_default()
            .entry(key)
            .or_default() += 1;
        total += 1;
    }

    let pct = |part: usize, whole: usize| {
        if whole == 0 {
            0.0
        } else {
            part as f64 * 100.0 / whole as f64
        }
    };
    let levels = by_size
        .into_iter()
        .map(|(size, combos)| {
            let count: usize = combos.values().sum();
            let mut combinations: Vec<Combination> = combos
                .into_iter()
                .map(|(key, n)| Combination {
                    label: key
                        .iter()
                        .map(|(r, k)| format!("{k}x {}", r.display_name()))
                        .collect::<Vec<_>>()
                        .join(" + "),
                    registries: key.into_iter().collect(),
                    count: n,
                    percent: pct(n, count),
                })
                .collect();
            combinations.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
            CompositionLevel {
                size,
                count,
                percent: pct(count, total),
                combinations,
            }
        })
        .collect();
    CompositionReport { total, levels }
}

impl fmt::Display for CompositionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (100%)", self.total)?;
        for level in &self.levels {
            writeln!(
                f,
                "  N={:<3} {:>6} ({:.1}%)",
                level.size, level.count, level.percent
            )?;
            for c in &level.combinations {
                writeln!(
                    f,
                    "           {:>6} ({:.1}%)  {}",
                    c.count, c.percent, c.label
                )?;
            }
        }
        Ok(())
    }
}
