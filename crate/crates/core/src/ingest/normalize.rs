//! Name and URL normalization used by matching and by the profile file.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;
use url::Url;

use crate::model::NormalizationOptions;

/// Folds a repository name into a comparable token string.
///
/// Compatibility decomposition, optional case folding and diacritic
/// stripping, then every run of non-alphanumeric characters becomes a single
/// space. The result is idempotent.
pub fn normalize_name(text: &str, opts: &NormalizationOptions) -> String {
    let decomposed: String = text.nfkd().collect();
    let folded = if opts.case_fold {
        // Lowercasing can itself produce decomposable sequences ('İ').
        decomposed.to_lowercase().nfkd().collect()
    } else {
        decomposed
    };

    let mut tokens: Vec<String> = Vec::new();
    let mut current = String::new();
    for c in folded.chars() {
        if is_combining_mark(c) {
            if !opts.strip_diacritics {
                current.push(c);
            }
        } else if c.is_alphanumeric() {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    if opts.sort_tokens {
        tokens.sort();
    }
    tokens.join(" ")
}

/// Canonicalizes a homepage URL, or returns `None` when it cannot be parsed.
///
/// Scheme and host are lowercased, leading `www.` labels dropped, default
/// ports, fragments and trailing slashes removed. Bare hosts such as
/// `example.org/repo` are read as `http://`.
pub fn normalize_url(text: &str) -> Option<String> {
    let url = parse_loose(text)?;
    let mut host = url.host_str()?;
    while let Some(rest) = host.strip_prefix("www.") {
        host = rest;
    }
    if host.is_empty() {
        return None;
    }

    let mut out = format!("{}://{}", url.scheme(), host);
    if let Some(port) = url.port() {
        out.push_str(&format!(":{port}"));
    }
    out.push_str(url.path().trim_end_matches('/'));
    if let Some(query) = url.query() {
        out.push('?');
        out.push_str(query);
    }
    Some(out)
}

/// Host of a URL after normalization (`roar.eprints.org`).
pub fn url_host(text: &str) -> Option<String> {
    normalize_url(text).and_then(|u| Url::parse(&u).ok()?.host_str().map(str::to_string))
}

/// Approximate registrable domain: the last two host labels, or three when
/// the second-level label is a common academic/commercial suffix under a
/// two-letter country code (`ac.uk`, `edu.au`, `co.jp`, ...).
pub fn registrable_domain(host: &str) -> String {
    const SECOND_LEVEL: [&str; 8] = ["ac", "co", "com", "edu", "gov", "net", "org", "or"];
    let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    if labels.len() <= 2 {
        return labels.join(".");
    }
    let n = labels.len();
    let take = if labels[n - 1].len() == 2 && SECOND_LEVEL.contains(&labels[n - 2]) {
        3
    } else {
        2
    };
    labels[n - take..].join(".")
}

fn parse_loose(text: &str) -> Option<Url> {
    let t = text.trim();
    if t.is_empty() || t.chars().any(char::is_whitespace) {
        return None;
    }
    let url = if t.contains("://") {
        Url::parse(t).ok()?
    } else if looks_like_host(t) {
        Url::parse(&format!("http://{t}")).ok()?
    } else {
        return None;
    };
    matches!(url.scheme(), "http" | "https").then_some(url)
}

fn looks_like_host(t: &str) -> bool {
    let host = t.split(['/', '?', '#']).next().unwrap_or("");
    let host = host.split(':').next().unwrap_or("");
    host.contains('.')
        && !host.starts_with('.')
        && host
            .chars()
            .all(|c| c.is_alphanumeric() || c == '.' || c == '-')
}
