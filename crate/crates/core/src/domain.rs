//! Hostname helpers: normalization, validation and registrable-domain lookup.

use std::net::IpAddr;

/// Lowercases a hostname and strips a single trailing dot.
pub fn normalize_host(host: &str) -> String {
    host.trim_end_matches('.').to_ascii_lowercase()
}

/// Returns true for syntactically valid DNS hostnames with at least two labels.
pub fn is_valid_hostname(host: &str) -> bool {
    if host.is_empty() || host.len() > 253 || !host.contains('.') {
        return false;
    }
    host.split('.').all(|label| {
        !label.is_empty()
            && label.len() <= 63
            && !label.starts_with('-')
            && !label.ends_with('-')
            && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
    }) && !host
        .rsplit('.')
        .next()
        .is_some_and(|tld| tld.bytes().all(|b| b.is_ascii_digit()))
}

/// Public-suffix-plus-one for a hostname, e.g. `cdn.pagefair.com` -> `pagefair.com`.
///
/// IP literals and single-label hosts are returned unchanged. A host that is
/// itself a public suffix maps to itself.
pub fn registrable_domain(host: &str) -> String {
    let host = normalize_host(host);
    let bare = host.trim_start_matches('[').trim_end_matches(']');
    if bare.parse::<IpAddr>().is_ok() || !host.contains('.') {
        return host;
    }
    match psl::domain_str(&host) {
        Some(d) => d.to_string(),
        None => host,
    }
}

/// Registrable domain of the host of `url`, if it has one.
pub fn site_of_url(url: &url::Url) -> Option<String> {
    url.host_str().map(registrable_domain)
}
