//! Curating a finished run: list what needs review, record decisions,
//! export the result.
//!
//! Decisions go to an append-only log next to the run; the latest one per
//! set wins. Decisions on problematic sets are picked up by the next merge.

use registry_dedup::cli::stages::{self, run_pipeline};
use registry_dedup::cli::RunConfig;
use registry_dedup::store::{
    ExportFormat, ReviewDecision, ReviewFilter, RunDir, SetKind, Store, StoreError,
};
use registry_dedup::{ProfileRef, Provenance, Verdict};

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    let config = RunConfig::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples/run.toml"),
    )?;
    let mut run = RunDir::create(tmp.path())?;
    run_pipeline(&mut run, &config.input_specs()?, &config.similarity, None)?;

    let mut store = Store::open(tmp.path())?;
    let pending: Vec<_> = store
        .pending_review(&ReviewFilter::default())
        .into_iter()
        .map(|v| {
            (
                v.set.id.clone(),
                v.kind,
                v.set.provenance,
                v.set.members.clone(),
                v.set.notes.clone(),
            )
        })
        .collect();
    println!("{} sets need review", pending.len());

    for (id, kind, provenance, members, notes) in pending {
        let decision = match kind {
            // keep the two profiles that claim each other
            SetKind::Problematic => {
                let chain = notes.unwrap_or_default();
                let first: ProfileRef = members.iter().next().cloned().unwrap();
                let kept = members
                    .iter()
                    .filter(|m| m.registry() != first.registry() || **m == first)
                    .cloned()
                    .collect();
                println!("  amend {id} ({chain})");
                ReviewDecision::amend(&id, kept, "example")
                    .with_note("kept one profile per registry")
            }
            SetKind::Duplicate if provenance == Provenance::DedupOnly && members.len() > 2 => {
                println!("  reject {id}");
                ReviewDecision::new(&id, Verdict::Reject, "example")
            }
            SetKind::Duplicate => ReviewDecision::new(&id, Verdict::Accept, "example"),
        };
        match store.record_decision(decision) {
            Ok(_) => {}
            // two amended chains may keep the same profile; the first one wins
            Err(e @ StoreError::Conflict(_)) => println!("  skipped: {e}"),
            Err(e) => return Err(e.into()),
        }
    }

    // amended problematic sets become duplicate sets at the next merge
    let mut run = RunDir::open(tmp.path())?;
    stages::merge(&mut run)?;
    let store = Store::open(tmp.path())?;
    println!("{}", serde_json::to_string(&store.status_counts())?);
    let csv = String::from_utf8(store.export(ExportFormat::Csv)?)?;
    for line in csv.lines().take(8) {
        println!("{line}");
    }
    println!("... {} lines", csv.lines().count());
    Ok(())
}
