//! Every stage against a run directory, driven from a run config.
//!
//! ```text
//! cargo run --example full_pipeline [-- <run.toml> [<run-dir>]]
//! ```
//!
//! A second invocation against the same run directory reuses every stage
//! whose inputs did not change.

use std::path::PathBuf;

use registry_dedup::cli::stages::run_pipeline;
use registry_dedup::cli::RunConfig;
use registry_dedup::store::{RunDir, Store};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let config_path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples/run.toml")
    });
    let scratch = tempfile::tempdir()?;
    let run_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| scratch.path().join("run"));

    let config = RunConfig::load(&config_path)?;
    let mut run = RunDir::create(&run_dir)?;
    let summary = run_pipeline(&mut run, &config.input_specs()?, &config.similarity, None)?;
    println!(
        "{} profiles -> {} claim sets ({} problematic) + {} clusters -> {} final sets",
        summary
            .ingest
            .iter()
            .map(|r| r.profiles_emitted)
            .sum::<usize>(),
        summary.conflation.sets,
        summary.conflation.problematic,
        summary.dedup.clusters,
        summary.merge.total
    );

    let store = Store::open(&run_dir)?;
    print!("{}", store.stats()?);
    println!("run {} in {}", store.run_id(), run_dir.display());
    Ok(())
}
