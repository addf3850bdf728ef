//! Curator view of a run: the review queue, decisions, export and stats.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    Result, RunDir, Stage, StoreError, CLAIM_SETS, CLUSTERS, CONFLATION_REPORT, FINAL_SETS,
    MERGE_REPORT, PROBLEMATIC, PROFILES,
};
use crate::claimgraph::{
    cluster_composition, composition, CompositionReport, ConflationReport, ProblematicSet,
};
use crate::merge::{MergeReport, Resolution};
use crate::model::{
    Cluster, DuplicateSet, HistoryEvent, ProfileRef, Provenance, RegistryId, RepositoryProfile,
    SetStatus, Verdict,
};

/// One curator decision. The log keeps every decision; the latest one per
/// set is the effective one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewDecision {
    pub set_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amended_members: Option<BTreeSet<ProfileRef>>,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub timestamp: String,
    /// Run the decision was made against. Filled in on record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl ReviewDecision {
    pub fn new(set_id: impl Into<String>, verdict: Verdict, reviewer: impl Into<String>) -> Self {
        Self {
            set_id: set_id.into(),
            verdict,
            amended_members: None,
            reviewer: reviewer.into(),
            note: None,
            timestamp: String::new(),
            run_id: None,
        }
    }

    pub fn amend(
        set_id: impl Into<String>,
        members: BTreeSet<ProfileRef>,
        reviewer: impl Into<String>,
    ) -> Self {
        Self {
            amended_members: Some(members),
            ..Self::new(set_id, Verdict::Amend, reviewer)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn for_run(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = Some(run_id.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    /// A duplicate set: claim-derived, promoted, extended or merged.
    Duplicate,
    /// A problematic claim chain. Resolved chains feed the next merge.
    Problematic,
}

impl FromStr for SetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "duplicate" => Ok(SetKind::Duplicate),
            "problematic" => Ok(SetKind::Problematic),
            other => Err(format!("unknown kind {other:?}")),
        }
    }
}

/// A reviewable item with the latest decision applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetView {
    #[serde(flatten)]
    pub set: DuplicateSet,
    pub kind: SetKind,
    /// Membership before an amend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_members: Option<BTreeSet<ProfileRef>>,
    /// Claim chain of a problematic item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Vec<ProfileRef>>,
}

impl SetView {
    fn problematic(p: &ProblematicSet) -> Self {
        let history = p
            .chain
            .windows(2)
            .map(|w| HistoryEvent::Claim {
                from: w[0].clone(),
                to: w[1].clone(),
            })
            .collect();
        let mut set = DuplicateSet::new(
            p.members.iter().cloned().collect(),
            Provenance::ClaimsOnly,
            SetStatus::NeedsReview,
            history,
        );
        set.id = p.id.clone();
        set.notes = Some(format!("{}: {}", p.reason, p.chain_text()));
        Self {
            set,
            kind: SetKind::Problematic,
            original_members: None,
            chain: Some(p.chain.clone()),
        }
    }

    fn duplicate(set: DuplicateSet) -> Self {
        Self {
            set,
            kind: SetKind::Duplicate,
            original_members: None,
            chain: None,
        }
    }

    fn with_decision(&self, d: Option<&ReviewDecision>) -> Self {
        let mut view = self.clone();
        if let Some(d) = d {
            view.set.status = d.verdict.resulting_status();
            if let (Verdict::Amend, Some(members)) = (d.verdict, &d.amended_members) {
                view.original_members =
                    Some(std::mem::replace(&mut view.set.members, members.clone()));
            }
        }
        view
    }

    fn active(&self) -> bool {
        self.kind == SetKind::Duplicate && self.set.status != SetStatus::Rejected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewFilter {
    pub status: Option<SetStatus>,
    pub provenance: Option<Provenance>,
    pub kind: Option<SetKind>,
    /// Only sets with at least one member from this registry.
    pub registry: Option<RegistryId>,
    pub min_size: Option<usize>,
    pub max_size: Option<usize>,
}

impl ReviewFilter {
    pub fn matches(&self, v: &SetView) -> bool {
        self.status.is_none_or(|s| v.set.status == s)
            && self.provenance.is_none_or(|p| v.set.provenance == p)
            && self.kind.is_none_or(|k| v.kind == k)
            && self
                .registry
                .is_none_or(|r| v.set.members.iter().any(|m| m.registry() == r))
            && self.min_size.is_none_or(|n| v.set.len() >= n)
            && self.max_size.is_none_or(|n| v.set.len() <= n)
    }
}

/// A member expanded to its profile. `missing` marks a ref with no profile
/// in the corpus; name and URL are then absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemberDetail {
    #[serde(rename = "ref")]
    pub id: ProfileRef,
    pub registry: RegistryId,
    pub name: Option<String>,
    pub url: Option<String>,
    pub homepage: Option<String>,
    pub claims: Vec<ProfileRef>,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetDetail {
    #[serde(flatten)]
    pub view: SetView,
    pub profiles: Vec<MemberDetail>,
    pub decisions: Vec<ReviewDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(ExportFormat::Jsonl),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(format!(
                "unknown export format {other:?} (expected jsonl or csv)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusCounts {
    pub auto: usize,
    pub needs_review: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub amended: usize,
    /// Problematic chains without a decision.
    pub open_problematic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub run_id: String,
    pub conflation: ConflationReport,
    pub claim_sets: CompositionReport,
    pub clusters: CompositionReport,
    pub final_sets: CompositionReport,
    pub merge: MergeReport,
    pub review: StatusCounts,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run {}", self.run_id)?;
        writeln!(
            f,
            "profiles {}  claims {}  dangling claims {}  problematic chains {}",
            self.conflation.profiles,
            self.conflation.claims,
            self.conflation.dangling.len(),
            self.conflation.problematic
        )?;
        writeln!(f, "\nDuplicate sets from registry claims")?;
        write!(f, "{}", self.claim_sets)?;
        writeln!(f, "\nClusters from automatic de-duplication")?;
        write!(f, "{}", self.clusters)?;
        writeln!(f, "\nFinal duplicate sets")?;
        write!(f, "{}", self.final_sets)?;
        let c = &self.merge.counts;
        writeln!(
            f,
            "\nprovenance: claims-only {}  dedup-only {}  extended {}  merged {}  (total {})",
            c.claims_only, c.dedup_only, c.extended, c.merged, self.merge.total
        )?;
        writeln!(
            f,
            "extension events {}  fusion events {}  unique extended sets {}",
            self.merge.extension_events(),
            self.merge.fusion_events(),
            self.merge.unique_extended()
        )?;
        let r = &self.review;
        writeln!(
            f,
            "review: auto {}  needs-review {}  accepted {}  amended {}  rejected {}  open problematic {}",
            r.auto, r.needs_review, r.accepted, r.amended, r.rejected, r.open_problematic
        )
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ExportMember<'a> {
    #[serde(rename = "ref")]
    id: &'a ProfileRef,
    registry: RegistryId,
    name: Option<&'a str>,
    url: Option<&'a str>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ExportRecord<'a> {
    set_id: &'a str,
    provenance: Provenance,
    status: SetStatus,
    members: Vec<ExportMember<'a>>,
    history: &'a [HistoryEvent],
    decisions: Vec<&'a ReviewDecision>,
}

/// Latest decision per set id.
pub fn effective_decisions(log: &[ReviewDecision]) -> HashMap<&str, &ReviewDecision> {
    let mut out = HashMap::new();
    for d in log {
        out.insert(d.set_id.as_str(), d);
    }
    out
}

/// Turns decisions on problematic chains into merge resolutions. An accept
/// confirms the chain's members, an amend substitutes the curator's list.
pub fn resolutions(problematic: &[ProblematicSet], log: &[ReviewDecision]) -> Vec<Resolution> {
    let latest = effective_decisions(log);
    problematic
        .iter()
        .filter_map(|p| {
            let d = latest.get(p.id.as_str())?;
            let members = match (d.verdict, &d.amended_members) {
                (Verdict::Amend, Some(m)) => m.clone(),
                _ => p.members.iter().cloned().collect(),
            };
            Some(Resolution {
                problematic: p.id.clone(),
                verdict: d.verdict,
                members,
            })
        })
        .collect()
}

/// A loaded run plus its decision log.
///
/// Reviewable items are the final sets once merge has run (the claim sets
/// before that) followed by the problematic chains.
#[derive(Debug)]
pub struct Store {
    run: RunDir,
    profiles: BTreeMap<ProfileRef, RepositoryProfile>,
    base: Vec<SetView>,
    index: HashMap<String, usize>,
    decisions: Vec<ReviewDecision>,
    effective: Vec<SetView>,
    merged: bool,
}

impl Store {
    /// Opens a run directory that has at least completed conflation.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let run = RunDir::open(root)?;
        run.require(Stage::Conflate, "review")?;
        let profiles: Vec<RepositoryProfile> = run.read_jsonl(Stage::Ingest, PROFILES)?;
        let merged = run.manifest().completed(Stage::Merge);
        let sets: Vec<DuplicateSet> = if merged {
            run.require(Stage::Merge, "review")?;
            run.read_jsonl(Stage::Merge, FINAL_SETS)?
        } else {
            run.read_jsonl(Stage::Conflate, CLAIM_SETS)?
        };
        let problematic: Vec<ProblematicSet> = run.read_jsonl(Stage::Conflate, PROBLEMATIC)?;

        let base: Vec<SetView> = sets
            .into_iter()
            .map(SetView::duplicate)
            .chain(problematic.iter().map(SetView::problematic))
            .collect();
        let index = base
            .iter()
            .enumerate()
            .map(|(i, v)| (v.set.id.clone(), i))
            .collect();
        let decisions = run.read_decisions()?;
        let mut store = Self {
            profiles: profiles.into_iter().map(|p| (p.id.clone(), p)).collect(),
            run,
            base,
            index,
            decisions,
            effective: Vec::new(),
            merged,
        };
        store.refresh();
        Ok(store)
    }

    fn refresh(&mut self) {
        let latest = effective_decisions(&self.decisions);
        self.effective = self
            .base
            .iter()
            .map(|v| v.with_decision(latest.get(v.set.id.as_str()).copied()))
            .collect();
    }

    pub fn run_id(&self) -> &str {
        self.run.run_id()
    }

    pub fn run(&self) -> &RunDir {
        &self.run
    }

    pub fn is_merged(&self) -> bool {
        self.merged
    }

    pub fn profile(&self, id: &ProfileRef) -> Option<&RepositoryProfile> {
        self.profiles.get(id)
    }

    pub fn profile_count(&self) -> usize {
        self.profiles.len()
    }

    /// All reviewable items in stable order, latest decisions applied.
    pub fn sets(&self) -> &[SetView] {
        &self.effective
    }

    pub fn get(&self, id: &str) -> Option<&SetView> {
        self.index.get(id).map(|&i| &self.effective[i])
    }

    pub fn query(&self, filter: &ReviewFilter) -> Vec<&SetView> {
        self.effective
            .iter()
            .filter(|v| filter.matches(v))
            .collect()
    }

    /// Items still waiting for a curator that match `filter`.
    pub fn pending_review(&self, filter: &ReviewFilter) -> Vec<&SetView> {
        let filter = ReviewFilter {
            status: Some(SetStatus::NeedsReview),
            ..filter.clone()
        };
        self.query(&filter)
    }

    pub fn decisions(&self) -> &[ReviewDecision] {
        &self.decisions
    }

    pub fn decisions_for(&self, id: &str) -> Vec<&ReviewDecision> {
        self.decisions.iter().filter(|d| d.set_id == id).collect()
    }

    fn member_detail(&self, id: &ProfileRef) -> MemberDetail {
        match self.profiles.get(id) {
            Some(p) => MemberDetail {
                id: id.clone(),
                registry: id.registry(),
                name: Some(p.name.clone()),
                url: p.url.clone(),
                homepage: p.homepage.clone(),
                claims: p.claims.clone(),
                missing: false,
            },
            None => MemberDetail {
                id: id.clone(),
                registry: id.registry(),
                name: None,
                url: None,
                homepage: None,
                claims: Vec::new(),
                missing: true,
            },
        }
    }

    pub fn detail(&self, id: &str) -> Result<SetDetail> {
        let view = self
            .get(id)
            .ok_or_else(|| StoreError::NotFound(format!("set {id}")))?;
        let mut refs: BTreeSet<&ProfileRef> = view.set.members.iter().collect();
        if let Some(original) = &view.original_members {
            refs.extend(original.iter());
        }
        Ok(SetDetail {
            view: view.clone(),
            profiles: refs.into_iter().map(|r| self.member_detail(r)).collect(),
            decisions: self.decisions_for(id).into_iter().cloned().collect(),
        })
    }

    /// Validates and appends a decision, returning the updated item.
    ///
    /// A decision made against an older run, or while the run directory has
    /// been rewritten underneath this store, is a conflict.
    pub fn record_decision(&mut self, mut d: ReviewDecision) -> Result<SetView> {
        let current = self.run.run_id().to_string();
        if let Some(run) = d.run_id.as_deref().filter(|r| *r != current) {
            return Err(StoreError::Conflict(format!(
                "decision was made against run {run}; the current run is {current}"
            )));
        }
        let on_disk = self.run.disk_run_id()?;
        if on_disk != current {
            return Err(StoreError::Conflict(format!(
                "run directory now holds run {on_disk}; reload before deciding"
            )));
        }
        let &idx = self
            .index
            .get(&d.set_id)
            .ok_or_else(|| StoreError::NotFound(format!("set {}", d.set_id)))?;
        if d.reviewer.trim().is_empty() {
            return Err(StoreError::Validation("reviewer is required".into()));
        }
        match (d.verdict, &d.amended_members) {
            (Verdict::Amend, None) => {
                return Err(StoreError::Validation(
                    "amend requires amendedMembers".into(),
                ))
            }
            (Verdict::Amend, Some(m)) if m.is_empty() => {
                return Err(StoreError::Validation(
                    "amendedMembers must not be empty".into(),
                ))
            }
            (Verdict::Amend, Some(m)) => {
                let base = &self.base[idx].set.members;
                if let Some(unknown) = m
                    .iter()
                    .find(|r| !self.profiles.contains_key(r) && !base.contains(r))
                {
                    return Err(StoreError::Validation(format!(
                        "{unknown} is not a profile in this run"
                    )));
                }
            }
            (_, Some(_)) => {
                return Err(StoreError::Validation(
                    "amendedMembers is only allowed with amend".into(),
                ));
            }
            _ => {}
        }

        let candidate = self.base[idx].with_decision(Some(&d));
        if candidate.active() {
            for (j, other) in self.effective.iter().enumerate() {
                if j == idx || !other.active() {
                    continue;
                }
                if let Some(shared) = candidate
                    .set
                    .members
                    .intersection(&other.set.members)
                    .next()
                {
                    return Err(StoreError::Conflict(format!(
                        "{shared} already belongs to set {}",
                        other.set.id
                    )));
                }
            }
        }

        if d.timestamp.is_empty() {
            d.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        }
        d.run_id = Some(current);
        self.run.append_decision(&d)?;
        self.decisions.push(d);
        self.effective[idx] = candidate;
        Ok(self.effective[idx].clone())
    }

    fn require_merge(&self, command: &str) -> Result<()> {
        if !self.merged {
            return Err(StoreError::StageOrder {
                command: command.to_string(),
                missing: Stage::Merge,
            });
        }
        self.run.require(Stage::Merge, command)?;
        Ok(())
    }

    /// Sets that make it into the final dataset: auto, accepted and amended
    /// duplicate sets.
    pub fn exported_sets(&self) -> Result<Vec<&SetView>> {
        self.require_merge("export")?;
        let out: Vec<&SetView> = self
            .effective
            .iter()
            .filter(|v| {
                v.kind == SetKind::Duplicate
                    && matches!(
                        v.set.status,
                        SetStatus::Auto | SetStatus::Accepted | SetStatus::Amended
                    )
            })
            .collect();
        let mut seen = BTreeSet::new();
        for v in &out {
            for m in &v.set.members {
                if !seen.insert(m) {
                    return Err(StoreError::Integrity(format!(
                        "{m} is exported in two sets"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Renders the final dataset. Output depends only on the run and the
    /// decision log.
    pub fn export(&self, format: ExportFormat) -> Result<Vec<u8>> {
        let sets = self.exported_sets()?;
        match format {
            ExportFormat::Jsonl => {
                let records: Vec<ExportRecord<'_>> = sets
                    .iter()
                    .map(|v| ExportRecord {
                        set_id: &v.set.id,
                        provenance: v.set.provenance,
                        status: v.set.status,
                        members: v
                            .set
                            .members
                            .iter()
                            .map(|m| self.export_member(m))
                            .collect(),
                        history: &v.set.history,
                        decisions: self.decisions_for(&v.set.id),
                    })
                    .collect();
                Ok(super::to_jsonl(&records))
            }
            ExportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let csv_err = |e: csv::Error| StoreError::Validation(format!("csv export: {e}"));
                w.write_record(["setId", "ref", "registry", "name", "url"])
                    .map_err(csv_err)?;
                for v in sets {
                    for m in &v.set.members {
                        let e = self.export_member(m);
                        w.write_record([
                            v.set.id.as_str(),
                            &m.to_string(),
                            e.registry.name(),
                            e.name.unwrap_or(""),
                            e.url.unwrap_or(""),
                        ])
                        .map_err(csv_err)?;
                    }
                }
                w.into_inner()
                    .map_err(|e| StoreError::Validation(format!("csv export: {}", e.error())))
            }
        }
    }

    fn export_member<'a>(&'a self, m: &'a ProfileRef) -> ExportMember<'a> {
        let p = self.profiles.get(m);
        ExportMember {
            id: m,
            registry: m.registry(),
            name: p.map(|p| p.name.as_str()),
            url: p.and_then(|p| p.url.as_deref()),
        }
    }

    pub fn status_counts(&self) -> StatusCounts {
        let mut c = StatusCounts::default();
        for v in &self.effective {
            if v.kind == SetKind::Problematic {
                if v.set.status == SetStatus::NeedsReview {
                    c.open_problematic += 1;
                }
                continue;
            }
            match v.set.status {
                SetStatus::Auto => c.auto += 1,
                SetStatus::NeedsReview => c.needs_review += 1,
                SetStatus::Accepted => c.accepted += 1,
                SetStatus::Rejected => c.rejected += 1,
                SetStatus::Amended => c.amended += 1,
            }
        }
        c
    }

    /// Composition tables and merge bookkeeping for a merged run.
    pub fn stats(&self) -> Result<Stats> {
        self.require_merge("stats")?;
        let claim_sets: Vec<DuplicateSet> = self.run.read_jsonl(Stage::Conflate, CLAIM_SETS)?;
        let clusters: Vec<Cluster> = self.run.read_jsonl(Stage::Dedup, CLUSTERS)?;
        let conflation: ConflationReport =
            self.run.read_json(Stage::Conflate, CONFLATION_REPORT)?;
        let merge: MergeReport = self.run.read_json(Stage::Merge, MERGE_REPORT)?;
        let final_sets: Vec<DuplicateSet> = self
            .base
            .iter()
            .filter(|v| v.kind == SetKind::Duplicate)
            .map(|v| v.set.clone())
            .collect();
        Ok(Stats {
            run_id: self.run_id().to_string(),
            conflation,
            claim_sets: composition(&claim_sets),
            clusters: cluster_composition(&clusters),
            final_sets: composition(&final_sets),
            merge,
            review: self.status_counts(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::stages::{self, run_pipeline};
    use crate::cli::RunConfig;
    use crate::store::DECISIONS;
    use crate::SimilarityConfig;
    use std::path::Path;

    fn r(s: &str) -> ProfileRef {
        s.parse().unwrap()
    }

    fn refs(items: &[&str]) -> BTreeSet<ProfileRef> {
        items.iter().map(|s| r(s)).collect()
    }

    fn fixture_run() -> tempfile::TempDir {
        let config = RunConfig::load(
            &Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples/run.toml"),
        )
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(tmp.path()).unwrap();
        run_pipeline(
            &mut run,
            &config.input_specs().unwrap(),
            &config.similarity,
            None,
        )
        .unwrap();
        tmp
    }

    fn set_with(store: &Store, member: &str) -> String {
        let m = r(member);
        store
            .sets()
            .iter()
            .find(|v| v.kind == SetKind::Duplicate && v.set.members.contains(&m))
            .map(|v| v.set.id.clone())
            .unwrap()
    }

    fn problematic_with(store: &Store, chain: &str) -> String {
        store
            .sets()
            .iter()
            .find(|v| v.set.notes.as_deref().is_some_and(|n| n.ends_with(chain)))
            .map(|v| v.set.id.clone())
            .unwrap()
    }

    #[test]
    fn accept_marks_set_accepted() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "rr:976");
        assert_eq!(store.get(&id).unwrap().set.status, SetStatus::NeedsReview);
        let view = store
            .record_decision(ReviewDecision::new(&id, Verdict::Accept, "ana"))
            .unwrap();
        assert_eq!(view.set.status, SetStatus::Accepted);
        let reopened = Store::open(tmp.path()).unwrap();
        assert_eq!(reopened.get(&id).unwrap().set.status, SetStatus::Accepted);
        assert_eq!(reopened.decisions().len(), 1);
    }

    #[test]
    fn amend_removes_a_member_from_the_export() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "rr:976");
        let before = store.get(&id).unwrap().set.members.clone();
        let mut kept = before.clone();
        kept.remove(&r("rr:5221"));
        let view = store
            .record_decision(ReviewDecision::amend(&id, kept.clone(), "ana"))
            .unwrap();
        assert_eq!(view.set.status, SetStatus::Amended);
        assert_eq!(view.set.members, kept);
        assert_eq!(view.original_members.as_ref(), Some(&before));
        let csv = String::from_utf8(store.export(ExportFormat::Csv).unwrap()).unwrap();
        assert!(!csv.contains("rr:5221"));
        assert!(csv.contains("rr:976"));
    }

    #[test]
    fn decision_validation() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "rr:976");
        let empty = ReviewDecision::amend(&id, BTreeSet::new(), "ana");
        assert!(matches!(
            store.record_decision(empty),
            Err(StoreError::Validation(_))
        ));
        let missing = ReviewDecision::new(&id, Verdict::Amend, "ana");
        assert!(matches!(
            store.record_decision(missing),
            Err(StoreError::Validation(_))
        ));
        let unknown = ReviewDecision::amend(&id, refs(&["rr:976", "rr:424242"]), "ana");
        assert!(matches!(
            store.record_decision(unknown),
            Err(StoreError::Validation(_))
        ));
        let anonymous = ReviewDecision::new(&id, Verdict::Accept, " ");
        assert!(matches!(
            store.record_decision(anonymous),
            Err(StoreError::Validation(_))
        ));
        let nope = ReviewDecision::new("ds-0000", Verdict::Accept, "ana");
        assert!(matches!(
            store.record_decision(nope),
            Err(StoreError::NotFound(_))
        ));
        assert!(store.decisions().is_empty());
        assert!(!store.run().path(DECISIONS).exists());
    }

    #[test]
    fn stale_runs_and_overlaps_conflict() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "rr:976");
        let stale =
            ReviewDecision::new(&id, Verdict::Accept, "ana").for_run("run-0000000000000000");
        assert!(matches!(
            store.record_decision(stale),
            Err(StoreError::Conflict(_))
        ));

        // amending a member of another active set into this one
        let mut grabbed = store.get(&id).unwrap().set.members.clone();
        grabbed.insert(r("rr:7001"));
        let overlap = ReviewDecision::amend(&id, grabbed, "ana");
        assert!(matches!(
            store.record_decision(overlap),
            Err(StoreError::Conflict(_))
        ));

        // once the other set is rejected the member is free
        let other = set_with(&store, "rr:7001");
        store
            .record_decision(ReviewDecision::new(&other, Verdict::Reject, "ana"))
            .unwrap();
        let mut grabbed = store.get(&id).unwrap().set.members.clone();
        grabbed.insert(r("rr:7001"));
        store
            .record_decision(ReviewDecision::amend(&id, grabbed, "ana"))
            .unwrap();
    }

    #[test]
    fn rerun_underneath_the_store_conflicts() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let mut run = RunDir::open(tmp.path()).unwrap();
        let config = SimilarityConfig::default().with_threshold(0.99);
        stages::dedup(&mut run, &config, None).unwrap();
        let id = set_with(&store, "rr:976");
        let err = store
            .record_decision(ReviewDecision::new(&id, Verdict::Accept, "ana"))
            .unwrap_err();
        assert!(matches!(err, StoreError::Conflict(_)));
    }

    #[test]
    fn rejected_sets_stay_in_the_log_only() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "fs:2114");
        assert_eq!(store.get(&id).unwrap().set.status, SetStatus::Auto);
        let before = String::from_utf8(store.export(ExportFormat::Jsonl).unwrap()).unwrap();
        assert!(before.contains(&id));
        store
            .record_decision(ReviewDecision::new(&id, Verdict::Reject, "ana"))
            .unwrap();
        let after = String::from_utf8(store.export(ExportFormat::Jsonl).unwrap()).unwrap();
        assert!(!after.contains(&id));
        assert_eq!(store.decisions_for(&id).len(), 1);
        assert_eq!(store.get(&id).unwrap().set.status, SetStatus::Rejected);
    }

    #[test]
    fn later_decisions_supersede_earlier_ones() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let ps = problematic_with(&store, "rd:r3d100011343→fs:2163→rd:r3d100000039");
        store
            .record_decision(ReviewDecision::new(&ps, Verdict::Reject, "ana"))
            .unwrap();
        let view = store
            .record_decision(ReviewDecision::amend(
                &ps,
                refs(&["fs:2163", "rd:r3d100000039"]),
                "ana",
            ))
            .unwrap();
        assert_eq!(view.set.status, SetStatus::Amended);
        assert_eq!(view.set.members, refs(&["fs:2163", "rd:r3d100000039"]));
        assert_eq!(store.decisions_for(&ps).len(), 2);
        let detail = store.detail(&ps).unwrap();
        assert_eq!(detail.decisions.len(), 2);
    }

    #[test]
    fn export_is_deterministic_and_disjoint() {
        let tmp = fixture_run();
        let store = Store::open(tmp.path()).unwrap();
        let a = store.export(ExportFormat::Csv).unwrap();
        let b = Store::open(tmp.path())
            .unwrap()
            .export(ExportFormat::Csv)
            .unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("setId,ref,registry,name,url"));
        let rows: Vec<&str> = lines.collect();
        let auto: usize = store
            .sets()
            .iter()
            .filter(|v| v.kind == SetKind::Duplicate && v.set.status == SetStatus::Auto)
            .map(|v| v.set.len())
            .sum();
        // the multi-line ROAR title is quoted, so count records not lines
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), auto);
        assert!(rows.len() >= auto);
        let refs: BTreeSet<&str> = records.iter().map(|r| r.get(1).unwrap()).collect();
        assert_eq!(refs.len(), records.len());
    }

    #[test]
    fn pending_review_filters() {
        let tmp = fixture_run();
        let store = Store::open(tmp.path()).unwrap();
        let merge: MergeReport = store.run().read_json(Stage::Merge, MERGE_REPORT).unwrap();
        let dedup_only = store.pending_review(&ReviewFilter {
            provenance: Some(Provenance::DedupOnly),
            kind: Some(SetKind::Duplicate),
            ..Default::default()
        });
        assert_eq!(dedup_only.len(), merge.counts.dedup_only);
        let big = store.pending_review(&ReviewFilter {
            min_size: Some(4),
            kind: Some(SetKind::Duplicate),
            ..Default::default()
        });
        assert!(big.iter().all(|v| v.set.len() >= 4));
        assert_eq!(big.len(), 1);
        let roar = store.pending_review(&ReviewFilter {
            registry: Some(RegistryId::Roar),
            ..Default::default()
        });
        assert!(roar.iter().all(|v| v
            .set
            .members
            .iter()
            .any(|m| m.registry() == RegistryId::Roar)));
        let problems = store.pending_review(&ReviewFilter {
            kind: Some(SetKind::Problematic),
            ..Default::default()
        });
        assert_eq!(problems.len(), 6);
    }

    #[test]
    fn empty_corpus() {
        let tmp = tempfile::tempdir().unwrap();
        let dump = tmp.path().join("empty.csv");
        std::fs::write(&dump, "eprintid,title,home_page,opendoar_id\n").unwrap();
        let mut run = RunDir::create(tmp.path().join("run")).unwrap();
        let inputs = [stages::InputSpec::new(RegistryId::Roar, &dump)];
        run_pipeline(&mut run, &inputs, &SimilarityConfig::default(), None).unwrap();
        let store = Store::open(tmp.path().join("run")).unwrap();
        assert!(store.pending_review(&ReviewFilter::default()).is_empty());
        let stats = store.stats().unwrap();
        assert_eq!(stats.final_sets.total, 0);
        assert_eq!(stats.merge.total, 0);
        assert!(store.export(ExportFormat::Jsonl).unwrap().is_empty());
    }

    #[test]
    fn export_needs_merge() {
        let tmp = fixture_run();
        let mut run = RunDir::open(tmp.path()).unwrap();
        stages::conflate(&mut run).unwrap();
        // rerunning ingest drops every later stage
        let config = RunConfig::load(
            &Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples/run.toml"),
        )
        .unwrap();
        let mut specs = config.input_specs().unwrap();
        specs.retain(|s| s.registry == RegistryId::Roar);
        let dump = tmp.path().join("roar.csv");
        std::fs::write(&dump, "eprintid,title,home_page,opendoar_id\n1,Only,,\n").unwrap();
        specs[0].path = dump;
        stages::ingest(&mut run, &specs).unwrap();
        stages::conflate(&mut run).unwrap();
        let store = Store::open(tmp.path()).unwrap();
        assert!(!store.is_merged());
        assert!(matches!(
            store.export(ExportFormat::Csv),
            Err(StoreError::StageOrder {
                missing: Stage::Merge,
                ..
            })
        ));
        assert!(matches!(store.stats(), Err(StoreError::StageOrder { .. })));
        // the other registries survive a single-registry ingest
        assert!(store.profile(&r("fs:2114")).is_some());
        assert!(store.profile(&r("rr:976")).is_none());
    }

    #[test]
    fn dangling_members_render_as_placeholders() {
        let tmp = fixture_run();
        let mut store = Store::open(tmp.path()).unwrap();
        let id = set_with(&store, "fs:2114");
        store.profiles.remove(&r("rd:r3d100010191"));
        let detail = store.detail(&id).unwrap();
        let gone = detail
            .profiles
            .iter()
            .find(|p| p.id == r("rd:r3d100010191"))
            .unwrap();
        assert!(gone.missing);
        assert_eq!(gone.name, None);
        assert!(detail.profiles.iter().any(|p| !p.missing));
    }
}
