//! Blocking, matching and clustering over the fixture corpus.
//!
//! Runs once with the default blocking keys and once exhaustively, so the
//! cost of blocking (candidate pairs) and its recall can be compared.

use std::fs::File;
use std::path::Path;

use registry_dedup::dedup::{build_blocks, run_dedup};
use registry_dedup::ingest::{ingest_dump, FieldMapping};
use registry_dedup::{BlockingConfig, RegistryId, RepositoryProfile, SimilarityConfig};

fn fixture_profiles() -> anyhow::Result<Vec<RepositoryProfile>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples");
    let mut all = Vec::new();
    for (registry, file) in [
        (RegistryId::Fairsharing, "fairsharing.json"),
        (RegistryId::Re3data, "re3data.jsonl"),
        (RegistryId::Opendoar, "opendoar.jsonl"),
        (RegistryId::Roar, "roar.csv"),
    ] {
        all.extend(
            ingest_dump(
                File::open(dir.join(file))?,
                &FieldMapping::default_for(registry),
            )?
            .profiles,
        );
    }
    Ok(all)
}

fn main() -> anyhow::Result<()> {
    let profiles = fixture_profiles()?;
    let blocked = SimilarityConfig::default();
    let exhaustive = SimilarityConfig {
        blocking: BlockingConfig::exhaustive(profiles.len()),
        ..SimilarityConfig::default()
    };

    let blocks = build_blocks(&profiles, &blocked);
    println!(
        "{} profiles, {} blocks, largest:",
        profiles.len(),
        blocks.len()
    );
    let mut by_size = blocks.iter().collect::<Vec<_>>();
    by_size.sort_by_key(|b| std::cmp::Reverse(b.members.len()));
    for b in by_size.iter().take(3) {
        println!("  {:<24} {}", b.key, b.members.len());
    }

    for (label, config) in [("blocked", &blocked), ("exhaustive", &exhaustive)] {
        let out = run_dedup(&profiles, config)?;
        let r = &out.report;
        println!(
            "{label:>10}: {} candidate pairs, {} edges, {} clusters",
            r.candidate_pairs, r.edges, r.clusters
        );
    }

    let out = run_dedup(&profiles, &blocked)?;
    for c in &out.clusters {
        let edges: Vec<String> = c
            .edges
            .iter()
            .map(|e| format!("{}~{} {:.3}", e.a, e.b, e.score))
            .collect();
        println!("{}  {}", c.id, edges.join(", "));
    }
    Ok(())
}
