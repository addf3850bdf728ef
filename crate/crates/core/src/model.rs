//! Domain types shared by every pipeline stage.
//!
//! The canonical text form of a [`ProfileRef`] (`fs:2114`, `rd:r3d100010191`)
//! is the join key across profile files, set files, reports and API payloads.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One of the four supported repository registries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistryId {
    Fairsharing,
    Re3data,
    Opendoar,
    Roar,
}

impl RegistryId {
    pub const ALL: [RegistryId; 4] = [
        RegistryId::Fairsharing,
        RegistryId::Re3data,
        RegistryId::Opendoar,
        RegistryId::Roar,
    ];

    /// Two-letter prefix used in the canonical ref form.
    pub fn prefix(self) -> &'static str {
        match self {
            RegistryId::Fairsharing => "fs",
            RegistryId::Re3data => "rd",
            RegistryId::Opendoar => "od",
            RegistryId::Roar => "rr",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix {
            "fs" => Some(RegistryId::Fairsharing),
            "rd" => Some(RegistryId::Re3data),
            "od" => Some(RegistryId::Opendoar),
            "rr" => Some(RegistryId::Roar),
            _ => None,
        }
    }

    /// Lowercase machine name (`fairsharing`, `re3data`, ...).
    pub fn name(self) -> &'static str {
        match self {
            RegistryId::Fairsharing => "fairsharing",
            RegistryId::Re3data => "re3data",
            RegistryId::Opendoar => "opendoar",
            RegistryId::Roar => "roar",
        }
    }

    /// Human-facing spelling used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            RegistryId::Fairsharing => "FAIRsharing",
            RegistryId::Re3data => "re3data",
            RegistryId::Opendoar => "OpenDOAR",
            RegistryId::Roar => "ROAR",
        }
    }

    /// Claim-direction matrix: which registries this registry may point to.
    ///
    /// OpenDOAR publishes no claims. Nobody claims inside its own registry.
    pub fn may_claim(self, target: RegistryId) -> bool {
        use RegistryId::*;
        matches!(
            (self, target),
            (Fairsharing, Re3data)
                | (Roar, Opendoar)
                | (Re3data, Fairsharing)
                | (Re3data, Opendoar)
                | (Re3data, Roar)
        )
    }
}

impl fmt::Display for RegistryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegistryId {
    type Err = ModelError;

    /// Accepts the machine name, the display name or the two-letter prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        RegistryId::ALL
            .into_iter()
            .find(|r| r.name() == lower || r.prefix() == lower)
            .ok_or_else(|| ModelError::UnknownRegistry(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed profile ref {text:?}: {reason}")]
    ParseRef { text: String, reason: &'static str },
    #[error("unknown registry {0:?}")]
    UnknownRegistry(String),
    #[error("{from} may not claim {to}: {} does not publish claims towards {}", from.registry.display_name(), to.registry.display_name())]
    IllegalClaim { from: ProfileRef, to: ProfileRef },
    #[error("invalid similarity configuration: {0}")]
    InvalidConfig(String),
}

/// Registry-qualified profile identifier.
///
/// Ordering follows the canonical text form, so sorted collections of refs
/// sort the same way as their serialized strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProfileRef {
    registry: RegistryId,
    local_id: String,
}

impl ProfileRef {
    pub fn new(registry: RegistryId, local_id: impl Into<String>) -> Result<Self, ModelError> {
        let local_id = local_id.into();
        validate_local_id(&local_id).map_err(|reason| ModelError::ParseRef {
            text: format!("{}:{}", registry.prefix(), local_id),
            reason,
        })?;
        Ok(Self { registry, local_id })
    }

    pub fn registry(&self) -> RegistryId {
        self.registry
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

fn validate_local_id(local: &str) -> Result<(), &'static str> {
    if local.is_empty() {
        return Err("empty local id");
    }
    if local.chars().any(char::is_whitespace) {
        return Err("local id contains whitespace");
    }
    Ok(())
}

/// Parses the canonical `<prefix>:<localId>` form.
pub fn parse_profile_ref(text: &str) -> Result<ProfileRef, ModelError> {
    let err = |reason| ModelError::ParseRef {
        text: text.to_string(),
        reason,
    };
    if text.is_empty() {
        return Err(err("empty input"));
    }
    let (prefix, local) = text
        .split_once(':')
        .ok_or_else(|| err("missing ':' separator"))?;
    let registry = RegistryId::from_prefix(prefix).ok_or_else(|| err("unknown registry prefix"))?;
    validate_local_id(local).map_err(err)?;
    Ok(ProfileRef {
        registry,
        local_id: local.to_string(),
    })
}

pub fn format_profile_ref(r: &ProfileRef) -> String {
    r.to_string()
}

impl fmt::Display for ProfileRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.registry.prefix(), self.local_id)
    }
}

impl FromStr for ProfileRef {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_profile_ref(s)
    }
}

impl Ord for ProfileRef {
    fn cmp(&self, other: &Self) -> Ordering {
        // All prefixes are two ASCII letters, so comparing (prefix, local)
        // is the same as comparing the canonical strings.
        (self.registry.prefix(), self.local_id.as_str())
            .cmp(&(other.registry.prefix(), other.local_id.as_str()))
    }
}

impl PartialOrd for ProfileRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for ProfileRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProfileRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_profile_ref(&text).map_err(serde::de::Error::custom)
    }
}

/// One registry's record of a repository.
///
/// `url` holds the normalized homepage; `homepage` keeps the text as it
/// appeared in the dump so curators see what the registry published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRecord")]
pub struct RepositoryProfile {
    pub id: ProfileRef,
    pub registry: RegistryId,
    pub name: String,
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homepage: Option<String>,
    pub claims: Vec<ProfileRef>,
    #[serde(skip)]
    pub raw: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct ProfileRecord {
    id: ProfileRef,
    registry: RegistryId,
    #[serde(default)]
    name: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    homepage: Option<String>,
    #[serde(default)]
    claims: Vec<ProfileRef>,
}

impl TryFrom<ProfileRecord> for RepositoryProfile {
    type Error = ModelError;

    fn try_from(r: ProfileRecord) -> Result<Self, Self::Error> {
        if r.registry != r.id.registry() {
            return Err(ModelError::InvalidConfig(format!(
                "profile {} declares registry {}",
                r.id, r.registry
            )));
        }
        let mut profile = RepositoryProfile::new(r.id, r.name, r.url, r.claims)?;
        profile.homepage = r.homepage;
        Ok(profile)
    }
}

impl RepositoryProfile {
    /// Builds a profile, rejecting claims that violate the direction matrix.
    /// Duplicate claims collapse; source order is kept otherwise.
    pub fn new(
        id: ProfileRef,
        name: impl Into<String>,
        url: Option<String>,
        claims: Vec<ProfileRef>,
    ) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::with_capacity(claims.len());
        for target in claims {
            if !id.registry().may_claim(target.registry()) {
                return Err(ModelError::IllegalClaim {
                    from: id,
                    to: target,
                });
            }
            if seen.insert(target.clone()) {
                kept.push(target);
            }
        }
        Ok(Self {
            registry: id.registry(),
            id,
            name: name.into(),
            url,
            homepage: None,
            claims: kept,
            raw: serde_json::Map::new(),
        })
    }

    pub fn with_homepage(mut self, homepage: Option<String>) -> Self {
        self.homepage = homepage;
        self
    }

    /// Claims pointing into `registry`, sorted canonically.
    pub fn claims_to(&self, registry: RegistryId) -> Vec<&ProfileRef> {
        let mut out: Vec<&ProfileRef> = self
            .claims
            .iter()
            .filter(|c| c.registry() == registry)
            .collect();
        out.sort();
        out
    }

    /// Profiles with an empty name are kept for claims but never matched.
    pub fn is_nameless(&self) -> bool {
        self.name.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClaimsOnly,
    DedupOnly,
    Extended,
    Merged,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::ClaimsOnly,
        Provenance::DedupOnly,
        Provenance::Extended,
        Provenance::Merged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ClaimsOnly => "claims-only",
            Provenance::DedupOnly => "dedup-only",
            Provenance::Extended => "extended",
            Provenance::Merged => "merged",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    /// Accepts both `dedup-only` and `dedup_only`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('_', "-");
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| format!("unknown provenance {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetStatus {
    Auto,
    NeedsReview,
    Accepted,
    Rejected,
    Amended,
}

impl SetStatus {
    pub const ALL: [SetStatus; 5] = [
        SetStatus::Auto,
        SetStatus::NeedsReview,
        SetStatus::Accepted,
        SetStatus::Rejected,
        SetStatus::Amended,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SetStatus::Auto => "auto",
            SetStatus::NeedsReview => "needs-review",
            SetStatus::Accepted => "accepted",
            SetStatus::Rejected => "rejected",
            SetStatus::Amended => "amended",
        }
    }
}

impl fmt::Display for SetStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('_', "-");
        SetStatus::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Amend,
}

impl Verdict {
    pub fn resulting_status(self) -> SetStatus {
        match self {
            Verdict::Accept => SetStatus::Accepted,
            Verdict::Reject => SetStatus::Rejected,
            Verdict::Amend => SetStatus::Amended,
        }
    }
}

/// What contributed to a duplicate set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum HistoryEvent {
    /// A registry claim `from -> to` that brought a member in.
    Claim { from: ProfileRef, to: ProfileRef },
    /// A de-duplication cluster fused into the set.
    Cluster { cluster: String },
    /// An earlier duplicate set absorbed into this one.
    Set { set: String },
    /// A curator resolution of a problematic claim chain.
    Resolution {
        problematic: String,
        verdict: Verdict,
    },
}

impl HistoryEvent {
    pub fn is_claim(&self) -> bool {
        matches!(self, HistoryEvent::Claim { .. })
    }

    pub fn is_cluster(&self) -> bool {
        matches!(self, HistoryEvent::Cluster { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateSet {
    pub id: String,
    pub members: BTreeSet<ProfileRef>,
    pub provenance: Provenance,
    pub status: SetStatus,
    pub history: Vec<HistoryEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl DuplicateSet {
    /// Content-addressed id: identical membership gives an identical id,
    /// which lets curator decisions survive pipeline reruns.
    pub fn content_id(members: &BTreeSet<ProfileRef>) -> String {
        format!(
            "ds-{}",
            short_digest(members.iter().map(ProfileRef::to_string))
        )
    }

    pub fn new(
        members: BTreeSet<ProfileRef>,
        provenance: Provenance,
        status: SetStatus,
        history: Vec<HistoryEvent>,
    ) -> Self {
        Self {
            id: Self::content_id(&members),
            members,
            provenance,
            status,
            history,
            notes: None,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn registries(&self) -> BTreeSet<RegistryId> {
        self.members.iter().map(ProfileRef::registry).collect()
    }
}

/// A scored similarity edge, `a < b` canonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEdge {
    pub a: ProfileRef,
    pub b: ProfileRef,
    pub score: f64,
}

impl MatchEdge {
    /// Orders the endpoints canonically. Returns `None` for self-loops.
    pub fn new(x: ProfileRef, y: ProfileRef, score: f64) -> Option<Self> {
        match x.cmp(&y) {
            Ordering::Less => Some(Self { a: x, b: y, score }),
            Ordering::Greater => Some(Self { a: y, b: x, score }),
            Ordering::Equal => None,
        }
    }
}

/// A connected component of the match graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub members: BTreeSet<ProfileRef>,
    pub edges: Vec<MatchEdge>,
}

impl Cluster {
    pub fn content_id(members: &BTreeSet<ProfileRef>) -> String {
        format!(
            "cl-{}",
            short_digest(members.iter().map(ProfileRef::to_string))
        )
    }

    pub fn new(members: BTreeSet<ProfileRef>, edges: Vec<MatchEdge>) -> Self {
        Self {
            id: Self::content_id(&members),
            members,
            edges,
        }
    }
}

/// First 16 hex chars of SHA-256 over newline-joined parts.
pub(crate) fn short_digest<I, S>(parts: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Which blocking keys a profile emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingKeyKind {
    /// First three characters of each of the first two name tokens, sorted
    /// and concatenated.
    NamePrefix,
    /// Host of the normalized homepage URL.
    UrlHost,
    /// One block holding every matchable profile (all-pairs comparison).
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockingConfig {
    pub keys: Vec<BlockingKeyKind>,
    /// Sliding window inside a block; `None` pairs every member with every other.
    pub window: Option<usize>,
    /// Blocks larger than this are truncated (with a warning).
    pub max_block: usize,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        Self {
            keys: vec![BlockingKeyKind::NamePrefix, BlockingKeyKind::UrlHost],
            window: None,
            max_block: 50,
        }
    }
}

impl BlockingConfig {
    /// Single block, full window, no truncation for corpora up to `max` profiles.
    pub fn exhaustive(max: usize) -> Self {
        Self {
            keys: vec![BlockingKeyKind::Exhaustive],
            window: None,
            max_block: max.max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationOptions {
    pub case_fold: bool,
    pub strip_diacritics: bool,
    pub sort_tokens: bool,
    /// Compare canonicalized URLs; when off, the raw homepage text is compared.
    pub canonicalize_urls: bool,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        Self {
            case_fold: true,
            strip_diacritics: true,
            sort_tokens: false,
            canonicalize_urls: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub threshold: f64,
    pub name_weight: f64,
    pub url_exact_override: bool,
    pub blocking: BlockingConfig,
    pub normalization: NormalizationOptions,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            name_weight: 0.8,
            url_exact_override: true,
            blocking: BlockingConfig::default(),
            normalization: NormalizationOptions::default(),
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.threshold) {
            return Err(ModelError::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !unit(self.name_weight) {
            return Err(ModelError::InvalidConfig(format!(
                "name_weight {} outside [0, 1]",
                self.name_weight
            )));
        }
        if matches!(self.blocking.window, Some(w) if w < 2) {
            return Err(ModelError::InvalidConfig("window size must be >= 2".into()));
        }
        if self.blocking.max_block < 2 {
            return Err(ModelError::InvalidConfig("max_block must be >= 2".into()));
        }
        if self.blocking.keys.is_empty() {
            return Err(ModelError::InvalidConfig(
                "at least one blocking key is required".into(),
            ));
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> ProfileRef {
        s.parse().unwrap()
    }

    #[test]
    fn parses_short_refs() {
        let fs = parse_profile_ref("fs:2114").unwrap();
        assert_eq!(fs.registry(), RegistryId::Fairsharing);
        assert_eq!(fs.local_id(), "2114");
        let rd = parse_profile_ref("rd:r3d100010191").unwrap();
        assert_eq!(rd.registry(), RegistryId::Re3data);
        assert_eq!(rd.local_id(), "r3d100010191");
    }

    #[test]
    fn rejects_malformed_refs() {
        for bad in ["xx:123", "fs:", "fs", "", "fs: 12", ":12", "FS:12"] {
            let err = parse_profile_ref(bad).unwrap_err();
            assert!(err.to_string().contains(&format!("{bad:?}")), "{err}");
        }
    }

    #[test]
    fn formats_canonically() {
        let rr = ProfileRef::new(RegistryId::Roar, "919").unwrap();
        assert_eq!(format_profile_ref(&rr), "rr:919");
        let od = ProfileRef::new(RegistryId::Opendoar, "1047").unwrap();
        assert_eq!(format_profile_ref(&od), "od:1047");
    }

    #[test]
    fn local_ids_keep_case() {
        let a = r("rd:R3D100010191");
        assert_eq!(a.local_id(), "R3D100010191");
        assert_ne!(a, r("rd:r3d100010191"));
    }

    #[test]
    fn ordering_matches_text() {
        let mut refs = [r("rd:1"), r("fs:9"), r("rr:1"), r("od:2"), r("fs:10")];
        let mut texts: Vec<String> = refs.iter().map(|x| x.to_string()).collect();
        refs.sort();
        texts.sort();
        assert_eq!(
            refs.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            texts
        );
    }

    #[test]
    fn claim_matrix() {
        use RegistryId::*;
        let allowed: Vec<(RegistryId, RegistryId)> = RegistryId::ALL
            .into_iter()
            .flat_map(|a| RegistryId::ALL.into_iter().map(move |b| (a, b)))
            .filter(|(a, b)| a.may_claim(*b))
            .collect();
        assert_eq!(
            allowed,
            vec![
                (Fairsharing, Re3data),
                (Re3data, Fairsharing),
                (Re3data, Opendoar),
                (Re3data, Roar),
                (Roar, Opendoar),
            ]
        );
    }

    #[test]
    fn profile_rejects_illegal_direction() {
        let err = RepositoryProfile::new(r("od:1"), "x", None, vec![r("rr:2")]).unwrap_err();
        assert!(matches!(err, ModelError::IllegalClaim { .. }));
        let err = RepositoryProfile::new(r("fs:1"), "x", None, vec![r("od:2")]).unwrap_err();
        assert!(matches!(err, ModelError::IllegalClaim { .. }));
        let err = RepositoryProfile::new(r("rr:1"), "x", None, vec![r("rr:2")]).unwrap_err();
        assert!(matches!(err, ModelError::IllegalClaim { .. }));
        let ok = RepositoryProfile::new(
            r("rd:r3d1"),
            "x",
            None,
            vec![r("fs:1"), r("od:2"), r("rr:3"), r("fs:1")],
        )
        .unwrap();
        assert_eq!(ok.claims.len(), 3);
    }

    #[test]
    fn profile_deserialization_enforces_matrix() {
        let line =
            r#"{"id":"fs:1","registry":"fairsharing","name":"A","url":null,"claims":["od:1"]}"#;
        assert!(serde_json::from_str::<RepositoryProfile>(line).is_err());
        let line =
            r#"{"id":"fs:1","registry":"fairsharing","name":"A","url":null,"claims":["rd:r3d1"]}"#;
        let p: RepositoryProfile = serde_json::from_str(line).unwrap();
        assert_eq!(p.claims, vec![r("rd:r3d1")]);
    }

    #[test]
    fn status_and_provenance_accept_underscores() {
        assert_eq!(
            "needs_review".parse::<SetStatus>().unwrap(),
            SetStatus::NeedsReview
        );
        assert_eq!(
            "dedup-only".parse::<Provenance>().unwrap(),
            Provenance::DedupOnly
        );
        assert!("bogus".parse::<Provenance>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimilarityConfig::default().validate().is_ok());
        assert!(SimilarityConfig::default()
            .with_threshold(1.1)
            .validate()
            .is_err());
        let mut c = SimilarityConfig::default();
        c.blocking.window = Some(1);
        assert!(c.validate().is_err());
        c.blocking.window = Some(2);
        assert!(c.validate().is_ok());
        c.name_weight = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn set_ids_are_content_addressed() {
        let a: BTreeSet<_> = [r("fs:1"), r("rd:r3d1")].into_iter().collect();
        let b: BTreeSet<_> = [r("rd:r3d1"), r("fs:1")].into_iter().collect();
        assert_eq!(DuplicateSet::content_id(&a), DuplicateSet::content_id(&b));
        assert!(DuplicateSet::content_id(&a).starts_with("ds-"));
        assert_ne!(DuplicateSet::content_id(&a), Cluster::content_id(&a));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_ref() -> impl Strategy<Value = ProfileRef> {
            (0usize..4, "[A-Za-z0-9._:/-]{1,16}")
                .prop_map(|(i, local)| ProfileRef::new(RegistryId::ALL[i], local).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn ref_round_trip(r in arb_ref()) {
                let text = format_profile_ref(&r);
                prop_assert_eq!(parse_profile_ref(&text).unwrap(), r);
            }
        }
    }
}
