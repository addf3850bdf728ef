//! Reads the four bundled fixture dumps with the default field mappings and
//! prints what each one produced.
//!
//! ```text
//! cargo run --example ingest_dumps [-- <dump-dir>]
//! ```

use std::fs::File;
use std::path::PathBuf;

use anyhow::Context;
use registry_dedup::ingest::{ingest_dump, FieldMapping};
use registry_dedup::RegistryId;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples")
        });

    for (registry, file) in [
        (RegistryId::Fairsharing, "fairsharing.json"),
        (RegistryId::Re3data, "re3data.jsonl"),
        (RegistryId::Opendoar, "opendoar.jsonl"),
        (RegistryId::Roar, "roar.csv"),
    ] {
        let path = dir.join(file);
        let reader = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let out = ingest_dump(reader, &FieldMapping::default_for(registry))?;
        let r = &out.report;
        println!(
            "{:<12} read {:>3}  profiles {:>3}  claims {:>3} (dropped {})  nameless {}",
            registry.display_name(),
            r.records_read,
            r.profiles_emitted,
            r.claims_emitted,
            r.claims_dropped,
            r.nameless
        );
        for s in &r.skipped {
            println!("    skipped record {}: {}", s.index, s.reason);
        }
        for w in &r.warnings {
            println!("    warning: {}", w.message);
        }
        if let Some(p) = out.profiles.iter().find(|p| !p.claims.is_empty()) {
            let claims: Vec<String> = p.claims.iter().map(|c| c.to_string()).collect();
            println!(
                "    e.g. {} {:?} claims {}",
                p.id,
                p.name,
                claims.join(", ")
            );
        }
    }
    Ok(())
}
