//! Pairwise profile similarity.

use thiserror::Error;

use crate::ingest::{normalize_name, normalize_url, registrable_domain, url_host};
use crate::model::{ProfileRef, RepositoryProfile, SimilarityConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} has an empty name and cannot be compared")]
pub struct NotComparable(pub ProfileRef);

/// Jaro similarity over Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }

    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }

    let mut half_transpositions = 0usize;
    let mut j = 0;
    for (i, ca) in a.iter().enumerate() {
        if !a_matched[i] {
            continue;
        }
        while !b_matched[j] {
            j += 1;
        }
        if *ca != b[j] {
            half_transpositions += 1;
        }
        j += 1;
    }

    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler with prefix scale 0.1 over at most four leading characters.
/// The prefix boost only applies above a Jaro score of 0.7.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j <= 0.7 {
        return j;
    }
    let prefix = a
        .chars()
        .zip(b.chars())
        .take(4)
        .take_while(|(x, y)| x == y)
        .count();
    (j + 0.1 * prefix as f64 * (1.0 - j)).min(1.0)
}

/// Matching view of a profile: normalized name and URL parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedProfile {
    pub id: ProfileRef,
    pub name: String,
    pub url: Option<String>,
    pub host: Option<String>,
    pub domain: Option<String>,
}

impl PreparedProfile {
    pub fn new(p: &RepositoryProfile, config: &SimilarityConfig) -> Self {
        let name = normalize_name(&p.name, &config.normalization);
        let url = if config.normalization.canonicalize_urls {
            p.url
                .clone()
                .or_else(|| p.homepage.as_deref().and_then(normalize_url))
        } else {
            p.homepage
                .as_ref()
                .map(|h| h.trim().to_string())
                .filter(|h| !h.is_empty())
        };
        let host = url.as_deref().and_then(url_host);
        let domain = host.as_deref().map(registrable_domain);
        Self {
            id: p.id.clone(),
            name,
            url,
            host,
            domain,
        }
    }

    pub fn comparable(&self) -> bool {
        !self.name.is_empty()
    }
}

/// Scores two prepared profiles.
///
/// Exact URL agreement short-circuits to 1.0 when `url_exact_override` is on.
/// Otherwise the score is `w * JW(names) + (1 - w) * url` where the URL
/// component is 1.0 for equal hosts, 0.5 for equal registrable domains and
/// 0.0 otherwise. If either side lacks a URL the score is the name term alone.
pub fn score(
    p: &PreparedProfile,
    q: &PreparedProfile,
    config: &SimilarityConfig,
) -> Result<f64, NotComparable> {
    if !p.comparable() {
        return Err(NotComparable(p.id.clone()));
    }
    if !q.comparable() {
        return Err(NotComparable(q.id.clone()));
    }
    // Order the operands so the result is bit-identical under swapping.
    let (p, q) = if p.id <= q.id { (p, q) } else { (q, p) };
    let name = jaro_winkler(&p.name, &q.name);
    let (Some(pu), Some(qu)) = (&p.url, &q.url) else {
        return Ok(name);
    };
    if config.url_exact_override && pu == qu {
        return Ok(1.0);
    }
    let url = if p.host.is_some() && p.host == q.host {
        1.0
    } else if p.domain.is_some() && p.domain == q.domain {
        0.5
    } else {
        0.0
    };
    let w = config.name_weight;
    Ok((w * name + (1.0 - w) * url).clamp(0.0, 1.0))
}

pub fn pair_similarity(
    p: &RepositoryProfile,
    q: &RepositoryProfile,
    config: &SimilarityConfig,
) -> Result<f64, NotComparable> {
    score(
        &PreparedProfile::new(p, config),
        &PreparedProfile::new(q, config),
        config,
    )
}
