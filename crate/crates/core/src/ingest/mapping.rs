//! Per-registry field mappings.
//!
//! A mapping is a small TOML document that says where the local id, name,
//! homepage and claim targets live inside one registry's dump records.
//! Default mappings for the four registries ship with the crate under
//! `mappings/`; any of them can be replaced with a file on disk.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::model::{parse_profile_ref, ProfileRef, RegistryId};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("cannot read mapping {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid mapping document: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid claim pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("mapping for {registry} is invalid: {message}")]
    Invalid {
        registry: RegistryId,
        message: String,
    },
}

/// How the records of a dump are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    /// One JSON document: an array of records, or an object holding one
    /// under `records`.
    Json,
    /// One JSON record per line.
    Jsonl,
    /// CSV with a header row; quoted cells may span lines.
    Csv,
}

impl std::str::FromStr for DumpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(DumpFormat::Json),
            "jsonl" | "ndjson" => Ok(DumpFormat::Jsonl),
            "csv" => Ok(DumpFormat::Csv),
            other => Err(format!(
                "unknown dump format {other:?} (expected json, jsonl or csv)"
            )),
        }
    }
}

/// Dotted path into a JSON record. A `[]` suffix iterates an array:
/// `attributes.identifiers[].value`. For CSV dumps the path is a column name.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    raw: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    key: String,
    iterate: bool,
}

impl FieldPath {
    pub fn parse(raw: &str) -> Self {
        let segments = raw
            .split('.')
            .filter(|s| !s.is_empty())
            .map(|s| match s.strip_suffix("[]") {
                Some(key) => Segment {
                    key: key.to_string(),
                    iterate: true,
                },
                None => Segment {
                    key: s.to_string(),
                    iterate: false,
                },
            })
            .collect();
        Self {
            raw: raw.to_string(),
            segments,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Scalar values reachable through the path, stringified.
    pub fn extract(&self, record: &Value) -> Vec<String> {
        let mut hits = Vec::new();
        collect(record, &self.segments, &mut hits);
        let mut out = Vec::new();
        for v in hits {
            push_scalars(v, &mut out);
        }
        out
    }
}

// A key that itself contains dots (`re3data.orgIdentifier`) is matched by
// joining segments when the nested lookup finds nothing.
fn collect<'a>(v: &'a Value, segments: &[Segment], out: &mut Vec<&'a Value>) {
    if segments.is_empty() {
        out.push(v);
        return;
    }
    let mut key = String::new();
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            if segments[i - 1].iterate {
                return;
            }
            key.push('.');
        }
        key.push_str(&seg.key);
        if let Some(child) = v.get(&key) {
            let rest = &segments[i + 1..];
            match (seg.iterate, child.as_array()) {
                (true, Some(items)) => items.iter().for_each(|item| collect(item, rest, out)),
                _ => collect(child, rest, out),
            }
            return;
        }
    }
}

fn push_scalars(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Number(n) => out.push(n.to_string()),
        Value::Array(items) => items.iter().for_each(|i| push_scalars(i, out)),
        Value::Null | Value::Bool(_) | Value::Object(_) => {}
    }
}

/// How to turn values found at `path` into claim targets.
#[derive(Debug, Clone)]
pub struct ClaimRule {
    pub path: FieldPath,
    /// Registry the claimed ids belong to. Without it, values must already be
    /// canonical refs (`od:1047`).
    pub target: Option<RegistryId>,
    /// Optional regex; capture group 1 (or the whole match) is the local id.
    pub pattern: Option<Regex>,
    /// Split a single cell into several values (CSV multi-valued columns).
    pub split: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimValue {
    Target(ProfileRef),
    /// Blank value, nothing to report.
    Empty,
    Unrecognized(String),
}

impl ClaimRule {
    pub fn interpret(&self, raw: &str) -> ClaimValue {
        let value = raw.trim();
        if value.is_empty() {
            return ClaimValue::Empty;
        }
        if let Some(pattern) = &self.pattern {
            let Some(caps) = pattern.captures(value) else {
                return ClaimValue::Unrecognized(value.to_string());
            };
            let local = caps
                .get(1)
                .or_else(|| caps.get(0))
                .map(|m| m.as_str())
                .unwrap_or("");
            // Validated at load time: a pattern always comes with a target.
            let target = self.target.expect("pattern rules carry a target");
            return match ProfileRef::new(target, local) {
                Ok(r) => ClaimValue::Target(r),
                Err(_) => ClaimValue::Unrecognized(value.to_string()),
            };
        }
        if let Ok(r) = parse_profile_ref(value) {
            return ClaimValue::Target(r);
        }
        match self.target.map(|t| ProfileRef::new(t, value)) {
            Some(Ok(r)) => ClaimValue::Target(r),
            _ => ClaimValue::Unrecognized(value.to_string()),
        }
    }

    pub fn split_values<'a>(&self, cell: &'a str) -> Vec<&'a str> {
        match self.split.as_deref() {
            Some(sep) if !sep.is_empty() => cell.split(sep).collect(),
            _ => vec![cell],
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldMapping {
    pub registry: RegistryId,
    pub format: DumpFormat,
    /// JSON only: path to the record array inside the document.
    pub records: Option<FieldPath>,
    pub id: FieldPath,
    pub name: Option<FieldPath>,
    pub homepage: Option<FieldPath>,
    pub claims: Vec<ClaimRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingDoc {
    registry: RegistryId,
    format: DumpFormat,
    records: Option<String>,
    id: String,
    name: Option<String>,
    homepage: Option<String>,
    #[serde(default)]
    claims: Vec<ClaimDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimDoc {
    path: String,
    target: Option<RegistryId>,
    pattern: Option<String>,
    split: Option<String>,
}

impl FieldMapping {
    pub fn from_toml_str(text: &str) -> Result<Self, MappingError> {
        let doc: MappingDoc = toml::from_str(text)?;
        let invalid = |message: String| MappingError::Invalid {
            registry: doc.registry,
            message,
        };
        if doc.id.trim().is_empty() {
            return Err(invalid("the id path is mandatory".into()));
        }
        let mut claims = Vec::with_capacity(doc.claims.len());
        for c in &doc.claims {
            if let Some(target) = c.target {
                if !doc.registry.may_claim(target) {
                    return Err(invalid(format!(
                        "{} does not publish claims towards {}",
                        doc.registry.display_name(),
                        target.display_name()
                    )));
                }
            }
            let pattern = match &c.pattern {
                Some(p) => {
                    if c.target.is_none() {
                        return Err(invalid(format!(
                            "claim pattern {p:?} needs a target registry"
                        )));
                    }
                    Some(Regex::new(p).map_err(|source| MappingError::Pattern {
                        pattern: p.clone(),
                        source,
                    })?)
                }
                None => None,
            };
            claims.push(ClaimRule {
                path: FieldPath::parse(&c.path),
                target: c.target,
                pattern,
                split: c.split.clone(),
            });
        }
        Ok(Self {
            registry: doc.registry,
            format: doc.format,
            records: doc.records.as_deref().map(FieldPath::parse),
            id: FieldPath::parse(&doc.id),
            name: doc.name.as_deref().map(FieldPath::parse),
            homepage: doc.homepage.as_deref().map(FieldPath::parse),
            claims,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let text = std::fs::read_to_string(path).map_err(|source| MappingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The mapping shipped with the crate for `registry`.
    pub fn default_for(registry: RegistryId) -> Self {
        Self::from_toml_str(default_mapping_text(registry)).expect("bundled mappings are valid")
    }
}

pub fn default_mapping_text(registry: RegistryId) -> &'static str {
    match registry {
        RegistryId::Fairsharing => include_str!("../../mappings/fairsharing.toml"),
        RegistryId::Re3data => include_str!("../../mappings/re3data.toml"),
        RegistryId::Opendoar => include_str!("../../mappings/opendoar.toml"),
        RegistryId::Roar => include_str!("../../mappings/roar.toml"),
    }
}
