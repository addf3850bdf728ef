//! Registry dump ingestion.
//!
//! Each dump is read sequentially into [`RepositoryProfile`]s in source
//! order. Bad records never abort a run: they are skipped and listed in the
//! [`IngestReport`]. Only an unreadable stream (I/O failure, a JSON document
//! that does not parse, a CSV quoting error) is fatal.

mod csv_dump;
mod json_dump;
pub mod mapping;
pub mod normalize;

use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProfileRef, RegistryId, RepositoryProfile};

pub use csv_dump::ingest_multiline_csv;
pub use json_dump::ingest_json_dump;
pub use mapping::{DumpFormat, FieldMapping, FieldPath, MappingError};
pub use normalize::{normalize_name, normalize_url, registrable_domain, url_host};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read dump: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable {registry} dump: {message}")]
    Unreadable {
        registry: RegistryId,
        message: String,
    },
    #[error("CSV quoting error at line {line}: {message}")]
    Quoting { line: usize, message: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("mapping is for {mapping} but the dump was declared as {declared}")]
    RegistryMismatch {
        mapping: RegistryId,
        declared: RegistryId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordWarning {
    /// `None` for stream-level warnings.
    pub index: Option<usize>,
    pub message: String,
}

/// Per-dump bookkeeping. `profiles_emitted + skipped.len() == records_read`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub registry: RegistryId,
    pub records_read: usize,
    pub profiles_emitted: usize,
    pub claims_emitted: usize,
    pub claims_dropped: usize,
    pub nameless: usize,
    pub unparseable_urls: usize,
    pub skipped: Vec<SkippedRecord>,
    pub warnings: Vec<RecordWarning>,
}

impl IngestReport {
    pub fn new(registry: RegistryId) -> Self {
        Self {
            registry,
            records_read: 0,
            profiles_emitted: 0,
            claims_emitted: 0,
            claims_dropped: 0,
            nameless: 0,
            unparseable_urls: 0,
            skipped: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.profiles_emitted + self.skipped.len() == self.records_read
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub profiles: Vec<RepositoryProfile>,
    pub report: IngestReport,
}

/// Reads a dump in whatever format its mapping declares.
pub fn ingest_dump<R: Read>(reader: R, mapping: &FieldMapping) -> Result<Ingested, IngestError> {
    match mapping.format {
        DumpFormat::Json | DumpFormat::Jsonl => ingest_json_dump(reader, mapping),
        DumpFormat::Csv => ingest_multiline_csv(reader, mapping),
    }
}

/// Field values of one source record, as seen through a mapping.
pub(crate) trait RecordView {
    fn values(&self, path: &FieldPath) -> Vec<String>;
    fn raw(&self) -> serde_json::Map<String, serde_json::Value>;
}

/// Shared record-to-profile logic for every dump format.
pub(crate) struct ProfileBuilder<'m> {
    mapping: &'m FieldMapping,
    first_seen: HashMap<String, usize>,
    profiles: Vec<RepositoryProfile>,
    report: IngestReport,
}

impl<'m> ProfileBuilder<'m> {
    pub(crate) fn new(mapping: &'m FieldMapping) -> Self {
        Self {
            mapping,
            first_seen: HashMap::new(),
            profiles: Vec::new(),
            report: IngestReport::new(mapping.registry),
        }
    }

    pub(crate) fn skip(&mut self, index: usize, reason: impl Into<String>) {
        self.report.records_read += 1;
        let reason = reason.into();
        log::debug!(
            "{}: record {index} skipped: {reason}",
            self.mapping.registry
        );
        self.report.skipped.push(SkippedRecord { index, reason });
    }

    pub(crate) fn warn(&mut self, index: Option<usize>, message: impl Into<String>) {
        self.report.warnings.push(RecordWarning {
            index,
            message: message.into(),
        });
    }

    pub(crate) fn accept(&mut self, index: usize, record: &dyn RecordView) {
        let registry = self.mapping.registry;
        let local = record
            .values(&self.mapping.id)
            .into_iter()
            .map(|v| v.trim().to_string())
            .find(|v| !v.is_empty());
        let Some(local) = local else {
            self.skip(
                index,
                format!("missing local id at {:?}", self.mapping.id.as_str()),
            );
            return;
        };
        let id = match ProfileRef::new(registry, local.clone()) {
            Ok(id) => id,
            Err(e) => {
                self.skip(index, e.to_string());
                return;
            }
        };
        if let Some(first) = self.first_seen.get(&local) {
            let reason = format!("duplicate local id {local:?} (first seen at record {first})");
            self.skip(index, reason);
            return;
        }

        let name = self
            .mapping
            .name
            .as_ref()
            .and_then(|p| record.values(p).into_iter().find(|v| !v.trim().is_empty()))
            .unwrap_or_default();
        if name.trim().is_empty() {
            self.report.nameless += 1;
            self.warn(
                Some(index),
                format!("{id} has no name; excluded from similarity matching"),
            );
        }

        let homepage = self.mapping.homepage.as_ref().and_then(|p| {
            record
                .values(p)
                .into_iter()
                .map(|v| v.trim().to_string())
                .find(|v| !v.is_empty())
        });
        let url = homepage.as_deref().and_then(normalize_url);
        if let (Some(raw), None) = (&homepage, &url) {
            self.report.unparseable_urls += 1;
            self.warn(
                Some(index),
                format!("{id}: unparseable homepage URL {raw:?}"),
            );
        }

        let mut claims = Vec::new();
        let mut seen = BTreeSet::new();
        for rule in &self.mapping.claims {
            for cell in record.values(&rule.path) {
                for value in rule.split_values(&cell) {
                    match rule.interpret(value) {
                        mapping::ClaimValue::Empty => {}
                        mapping::ClaimValue::Unrecognized(v) => {
                            // Pattern rules share fields with unrelated
                            // identifiers (DOIs, other registries); a miss there is not a claim.
                            if rule.pattern.is_none() {
                                self.report.claims_dropped += 1;
                                self.warn(
                                    Some(index),
                                    format!("{id}: unrecognized claim value {v:?}"),
                                );
                            }
                        }
                        mapping::ClaimValue::Target(target) => {
                            if !registry.may_claim(target.registry()) {
                                self.report.claims_dropped += 1;
                                self.warn(
                                    Some(index),
                                    format!("{id}: illegal claim direction towards {target}; claim dropped"),
                                );
                            } else if seen.insert(target.clone()) {
                                claims.push(target);
                            }
                        }
                    }
                }
            }
        }

        let mut profile = RepositoryProfile::new(id, name, url, claims)
            .expect("claims were filtered by the direction matrix")
            .with_homepage(homepage);
        profile.raw = record.raw();

        self.first_seen.insert(local, index);
        self.report.records_read += 1;
        self.report.profiles_emitted += 1;
        self.report.claims_emitted += profile.claims.len();
        self.profiles.push(profile);
    }

    pub(crate) fn finish(self) -> Ingested {
        debug_assert!(self.report.is_consistent());
        Ingested {
            profiles: self.profiles,
            report: self.report,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatches_on_format() {
        let mapping = FieldMapping::default_for(RegistryId::Roar);
        let out = ingest_dump(
            "eprintid,title,home_page,opendoar_id\n1,A,,\n".as_bytes(),
            &mapping,
        )
        .unwrap();
        assert_eq!(out.profiles.len(), 1);
        let mapping = FieldMapping::default_for(RegistryId::Opendoar);
        let out = ingest_dump("".as_bytes(), &mapping).unwrap();
        assert!(out.profiles.is_empty());
    }
}
