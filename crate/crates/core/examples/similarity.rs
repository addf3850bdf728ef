//! Pairwise scores: Jaro-Winkler on normalized names blended with a URL
//! component. Pass two names (and optionally two URLs) to score your own.
//!
//! ```text
//! cargo run --example similarity -- "Univ. of Padova" "University of Padova" padua.it www.padua.it
//! ```

use registry_dedup::dedup::{jaro, jaro_winkler, pair_similarity};
use registry_dedup::ingest::{normalize_name, normalize_url};
use registry_dedup::{RepositoryProfile, SimilarityConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: Vec<[&str; 4]> = if args.len() >= 2 {
        vec![[
            &args[0],
            &args[1],
            args.get(2).map(String::as_str).unwrap_or(""),
            args.get(3).map(String::as_str).unwrap_or(""),
        ]]
    } else {
        vec![
            ["MARTHA", "MARHTA", "", ""],
            ["Università di Padova", "UNIVERSITA DI PADOVA", "", ""],
            [
                "Marine Data Archive",
                "Marine Data Archiv",
                "https://mda.example.org/",
                "http://mda.example.org",
            ],
            [
                "Open Research",
                "Open Research Data",
                "https://a.example.org",
                "https://b.example.org",
            ],
            [
                "Open Research",
                "Digital Theses",
                "https://data.example.org/x",
                "data.example.org/x",
            ],
        ]
    };

    let config = SimilarityConfig::default();
    let profile = |id: &str, name: &str, url: &str| {
        RepositoryProfile::new(id.parse().unwrap(), name, normalize_url(url), vec![]).unwrap()
    };
    println!(
        "{:<24} {:<24} {:>6} {:>6} {:>6}",
        "a", "b", "jaro", "jw", "score"
    );
    for [a, b, ua, ub] in pairs {
        let (na, nb) = (
            normalize_name(a, &config.normalization),
            normalize_name(b, &config.normalization),
        );
        let score = pair_similarity(&profile("rr:1", a, ua), &profile("od:1", b, ub), &config)?;
        let verdict = if score >= config.threshold {
            "match"
        } else {
            ""
        };
        println!(
            "{:<24} {:<24} {:>6.3} {:>6.3} {:>6.3} {verdict}",
            a,
            b,
            jaro(&na, &nb),
            jaro_winkler(&na, &nb),
            score
        );
    }
    Ok(())
}
