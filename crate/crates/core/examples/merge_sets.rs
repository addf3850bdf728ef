//! Merging claim sets with dedup clusters.
//!
//! Two ROAR/OpenDOAR sets bridged by a cluster fuse into one; a FAIRsharing
//! round trip is extended by a cluster reaching into OpenDOAR; a cluster
//! touching no set is promoted on its own.

use std::collections::BTreeSet;

use registry_dedup::claimgraph::conflate_claims;
use registry_dedup::merge::extend_sets;
use registry_dedup::{Cluster, ProfileRef, RepositoryProfile};

fn refs(items: &[&str]) -> BTreeSet<ProfileRef> {
    items.iter().map(|s| s.parse().unwrap()).collect()
}

fn main() -> anyhow::Result<()> {
    let claims: &[(&str, &[&str])] = &[
        ("od:241", &[]),
        ("rr:978", &["od:241"]),
        ("od:239", &[]),
        ("rr:2328", &["od:239"]),
        ("rr:5221", &["od:239"]),
        ("rr:976", &["od:239"]),
        ("fs:2560", &["rd:r3d100011201"]),
        ("rd:r3d100011201", &["fs:2560"]),
    ];
    let profiles = claims
        .iter()
        .map(|(id, to)| {
            RepositoryProfile::new(
                id.parse()?,
                *id,
                None,
                to.iter().map(|t| t.parse()).collect::<Result<_, _>>()?,
            )
        })
        .collect::<Result<Vec<_>, registry_dedup::model::ModelError>>()?;
    let sets = conflate_claims(&profiles).sets;

    let clusters = [
        Cluster::new(refs(&["rr:976", "rr:978"]), vec![]),
        Cluster::new(refs(&["od:4194", "rd:r3d100011201"]), vec![]),
        Cluster::new(refs(&["rr:7001", "rr:7002"]), vec![]),
    ];

    let (finals, report) = extend_sets(&sets, &clusters)?;
    for s in &finals {
        let members: Vec<String> = s.members.iter().map(ToString::to_string).collect();
        println!(
            "{:<11} {}  {}",
            s.provenance.as_str(),
            s.id,
            members.join(" ")
        );
    }
    println!();
    for e in &report.events {
        println!("{}", serde_json::to_string(e)?);
    }
    println!(
        "\nextension {} - fusion {} = {} extended sets",
        report.extension_events(),
        report.fusion_events(),
        report.unique_extended()
    );

    // a second pass over the output changes nothing
    let (again, _) = extend_sets(&finals, &clusters)?;
    assert_eq!(again, finals);
    Ok(())
}
