//! Claim conflation on a handful of hand-written profiles.
//!
//! Covers a round trip (fs <-> rd), a ROAR fan-in onto one OpenDOAR
//! profile, and a back-claim mismatch that ends up as a problematic set.

use registry_dedup::claimgraph::{composition, conflate_claims};
use registry_dedup::{ProfileRef, RepositoryProfile};

fn profile(id: &str, name: &str, claims: &[&str]) -> anyhow::Result<RepositoryProfile> {
    let claims = claims
        .iter()
        .map(|c| c.parse())
        .collect::<Result<Vec<ProfileRef>, _>>()?;
    Ok(RepositoryProfile::new(id.parse()?, name, None, claims)?)
}

fn main() -> anyhow::Result<()> {
    let profiles = vec![
        profile("fs:2114", "Protein Data Bank", &["rd:r3d100010191"])?,
        profile("rd:r3d100010191", "PDB", &["fs:2114"])?,
        profile("od:1047", "Lisbon Open Repository", &[])?,
        profile("rr:919", "Repositorio Aberto Lisboa", &["od:1047"])?,
        profile("rr:5425", "Lisbon Open Repository", &["od:1047"])?,
        // fs:3652 claims rd:729, which claims back an older record
        profile("fs:3652", "GlyTouCan", &["rd:r3d100012729"])?,
        profile("rd:r3d100012729", "GlyTouCan", &["fs:1724"])?,
        profile("fs:1724", "GlyTouCan (deprecated)", &[])?,
        profile("rr:6000", "Dangling Archive", &["od:99999"])?,
    ];

    let out = conflate_claims(&profiles);
    println!("{} duplicate sets", out.sets.len());
    for s in &out.sets {
        let members: Vec<String> = s.members.iter().map(ToString::to_string).collect();
        println!("  {}  {}", s.id, members.join(" "));
    }
    println!("{} problematic", out.problematic.len());
    for p in &out.problematic {
        println!("  {}  {}  ({})", p.id, p.chain_text(), p.reason);
    }
    for d in &out.report.dangling {
        println!("dangling claim {} -> {}", d.from, d.to);
    }

    let comp = composition(&out.sets);
    for level in &comp.levels {
        println!("N={}: {} ({:.1}%)", level.size, level.count, level.percent);
        for c in &level.combinations {
            println!("    {:<28} {}", c.label, c.count);
        }
    }
    Ok(())
}
