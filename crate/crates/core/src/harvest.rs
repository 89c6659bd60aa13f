//! Static HTTP harvester: fetches listed pages, pulls out their script tags and
//! downloads external scripts into a corpus directory. Nothing is executed.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};
use ureq::{Agent, ResponseExt};
use url::Url;

use crate::corpus::{
    page_html_path, script_content_path, sha256_hex, validate_manifest, write_file, write_manifest, CorpusManifest,
    FetchStatus, PageSnapshot, ScriptKind, ScriptRecord,
};
use crate::domain::site_of_url;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;
pub const DEFAULT_MAX_PARALLEL_SITES: usize = 8;
pub const DEFAULT_MAX_SCRIPT_BYTES: u64 = 5_242_880;
pub const DEFAULT_FOLLOW_REDIRECTS: u32 = 5;
pub const DEFAULT_USER_AGENT: &str = concat!("scriptclique/", env!("CARGO_PKG_VERSION"));

/// Page bodies larger than this are cut off before script extraction.
pub const MAX_PAGE_BYTES: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestConfig {
    pub url_list_path: PathBuf,
    pub out_dir: PathBuf,
    pub timeout_secs: u64,
    pub max_parallel_sites: usize,
    pub max_script_bytes: u64,
    pub user_agent: String,
    pub follow_redirects: u32,
}

impl HarvestConfig {
    pub fn new(url_list_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        HarvestConfig {
            url_list_path: url_list_path.into(),
            out_dir: out_dir.into(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            max_parallel_sites: DEFAULT_MAX_PARALLEL_SITES,
            max_script_bytes: DEFAULT_MAX_SCRIPT_BYTES,
            user_agent: DEFAULT_USER_AGENT.to_string(),
            follow_redirects: DEFAULT_FOLLOW_REDIRECTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs < 1 {
            return Err(Error::InvalidArgument("timeout_secs must be at least 1".into()));
        }
        if self.max_parallel_sites < 1 {
            return Err(Error::InvalidArgument("max_parallel_sites must be at least 1".into()));
        }
        if self.max_script_bytes < 1 {
            return Err(Error::InvalidArgument("max_script_bytes must be positive".into()));
        }
        Ok(())
    }
}

/// Script elements found in one HTML document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractedScripts {
    /// Inline bodies, in document order. Bodies that are blank are omitted.
    pub embedded: Vec<Vec<u8>>,
    /// Resolved `src` URLs, deduplicated, in order of first appearance.
    pub external: Vec<Url>,
}

fn starts_with_ci(hay: &[u8], at: usize, needle: &[u8]) -> bool {
    hay.len() >= at + needle.len() && hay[at..at + needle.len()].eq_ignore_ascii_case(needle)
}

fn find_ci(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    (from..hay.len().saturating_sub(needle.len() - 1)).find(|&i| starts_with_ci(hay, i, needle))
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from >= hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

/// Parses the attributes of an opening tag starting at `i` (just past the tag
/// name). Returns the attributes and the index just past the closing `>`.
fn parse_attributes(h: &[u8], mut i: usize) -> (Vec<(String, String)>, usize) {
    let mut attrs = Vec::new();
    loop {
        while i < h.len() && (h[i].is_ascii_whitespace() || h[i] == b'/') {
            i += 1;
        }
        if i >= h.len() {
            return (attrs, i);
        }
        if h[i] == b'>' {
            return (attrs, i + 1);
        }
        let start = i;
        while i < h.len() && !h[i].is_ascii_whitespace() && !matches!(h[i], b'=' | b'>' | b'/') {
            i += 1;
        }
        let name = String::from_utf8_lossy(&h[start..i]).to_ascii_lowercase();
        let mut j = i;
        while j < h.len() && h[j].is_ascii_whitespace() {
            j += 1;
        }
        let mut value = String::new();
        if j < h.len() && h[j] == b'=' {
            j += 1;
            while j < h.len() && h[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < h.len() && (h[j] == b'"' || h[j] == b'\'') {
                let q = h[j];
                let vstart = j + 1;
                let vend = h[vstart..].iter().position(|&b| b == q).map_or(h.len(), |p| p + vstart);
                value = String::from_utf8_lossy(&h[vstart..vend]).into_owned();
                j = (vend + 1).min(h.len());
            } else {
                let vstart = j;
                while j < h.len() && !h[j].is_ascii_whitespace() && h[j] != b'>' {
                    j += 1;
                }
                value = String::from_utf8_lossy(&h[vstart..j]).into_owned();
            }
            i = j;
        }
        if !name.is_empty() {
            attrs.push((name, value));
        }
    }
}

fn decode_entities(s: &str) -> String {
    s.replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

/// Extracts inline script bodies and external script URLs from `html`.
///
/// Markup is scanned leniently: comments are skipped, attribute values may be
/// quoted or bare, and an unterminated script runs to the end of the input. A
/// script element with a `src` attribute contributes only its URL.
pub fn extract_script_tags(html: &[u8], base_url: &Url) -> ExtractedScripts {
    let h = html;
    let mut out = ExtractedScripts::default();
    let mut seen: HashSet<Url> = HashSet::new();
    let mut i = 0;
    while let Some(p) = find(h, i, b"<") {
        if h[p..].starts_with(b"<!--") {
            i = find(h, p + 4, b"-->").map_or(h.len(), |e| e + 3);
            continue;
        }
        let after = p + b"<script".len();
        let is_script = starts_with_ci(h, p, b"<script")
            && (after == h.len() || h[after].is_ascii_whitespace() || h[after] == b'>' || h[after] == b'/');
        if !is_script {
            i = p + 1;
            continue;
        }
        let (attrs, body_start) = parse_attributes(h, after);
        let (body_end, next) = match find_ci(h, body_start, b"</script") {
            Some(e) => (e, find(h, e, b">").map_or(h.len(), |g| g + 1)),
            None => (h.len(), h.len()),
        };
        i = next;
        match attrs.iter().find(|(n, _)| n == "src") {
            Some((_, raw)) => {
                let src = decode_entities(raw.trim());
                if src.is_empty() {
                    continue;
                }
                match base_url.join(&src) {
                    Ok(u) if matches!(u.scheme(), "http" | "https") => {
                        if seen.insert(u.clone()) {
                            out.external.push(u);
                        }
                    }
                    Ok(u) => debug!(url = %u, "ignoring non-http script src"),
                    Err(e) => debug!(src = %src, error = %e, "unresolvable script src"),
                }
            }
            None => {
                let body = &h[body_start..body_end];
                if body.iter().any(|b| !b.is_ascii_whitespace()) {
                    out.embedded.push(body.to_vec());
                }
            }
        }
    }
    out
}

/// Reads a URL list: one URL per line, blank lines and `#` comments ignored.
pub fn read_url_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

struct FetchedScript {
    kind: ScriptKind,
    source_url: Option<String>,
    hash: String,
    byte_len: u64,
    truncated: bool,
}

struct SiteResult {
    index: usize,
    site_id: String,
    page_url: String,
    fetched_at: DateTime<Utc>,
    status: FetchStatus,
    html: Option<Vec<u8>>,
    scripts: Vec<(FetchedScript, Vec<u8>)>,
}

fn status_of(err: &ureq::Error) -> FetchStatus {
    match err {
        ureq::Error::HostNotFound => FetchStatus::DnsFailure,
        ureq::Error::Timeout(_) => FetchStatus::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => FetchStatus::Timeout,
        // std's resolver reports lookup failures as an uncategorized io error
        ureq::Error::Io(e) if e.to_string().contains("failed to lookup address") => FetchStatus::DnsFailure,
        ureq::Error::StatusCode(code) => FetchStatus::HttpError(*code),
        _ => FetchStatus::ConnectionFailed,
    }
}

/// GETs `url`, returning the status code, the final URL and at most `limit`
/// bytes of body plus a truncation flag.
fn get(agent: &Agent, url: &Url, limit: u64) -> std::result::Result<(u16, Url, Vec<u8>, bool), ureq::Error> {
    let resp = agent.get(url.as_str()).call()?;
    let code = resp.status().as_u16();
    let final_url = Url::parse(&resp.get_uri().to_string()).unwrap_or_else(|_| url.clone());
    let mut body = Vec::new();
    if (200..300).contains(&code) {
        resp.into_body().into_reader().take(limit + 1).read_to_end(&mut body)?;
    }
    let truncated = body.len() as u64 > limit;
    body.truncate(limit as usize);
    Ok((code, final_url, body, truncated))
}

fn harvest_site(agent: &Agent, config: &HarvestConfig, index: usize, url: Url, site_id: String) -> SiteResult {
    let fetched_at = Utc::now();
    let mut result = SiteResult {
        index,
        site_id,
        page_url: url.to_string(),
        fetched_at,
        status: FetchStatus::Ok,
        html: None,
        scripts: Vec::new(),
    };
    let (final_url, html) = match get(agent, &url, MAX_PAGE_BYTES) {
        Ok((code, final_url, body, _)) if (200..300).contains(&code) => (final_url, body),
        Ok((code, ..)) => {
            warn!(url = %url, code, "page fetch returned an error status");
            result.status = FetchStatus::HttpError(code);
            return result;
        }
        Err(e) => {
            warn!(url = %url, error = %e, "page fetch failed");
            result.status = status_of(&e);
            return result;
        }
    };
    let found = extract_script_tags(&html, &final_url);
    result.html = Some(html);
    for body in found.embedded {
        let meta = FetchedScript {
            kind: ScriptKind::Embedded,
            source_url: None,
            hash: sha256_hex(&body),
            byte_len: body.len() as u64,
            truncated: false,
        };
        result.scripts.push((meta, body));
    }
    for src in found.external {
        match get(agent, &src, config.max_script_bytes) {
            Ok((code, _, body, truncated)) if (200..300).contains(&code) => {
                if truncated {
                    warn!(url = %src, limit = config.max_script_bytes, "script truncated");
                }
                let meta = FetchedScript {
                    kind: ScriptKind::Downloaded,
                    source_url: Some(src.to_string()),
                    hash: sha256_hex(&body),
                    byte_len: body.len() as u64,
                    truncated,
                };
                result.scripts.push((meta, body));
            }
            Ok((code, ..)) => warn!(url = %src, code, "script fetch returned an error status; no record kept"),
            Err(e) => warn!(url = %src, error = %e, "script fetch failed; no record kept"),
        }
    }
    result
}

/// Harvests every URL in the list into `config.out_dir` and returns the written
/// manifest.
///
/// Sites are fetched by up to `max_parallel_sites` workers; a single writer
/// stores page and script bodies. Per-site failures are recorded in the page's
/// `fetch_status`. List entries that are not absolute http(s) URLs are skipped
/// with a warning since they have no page URL to record.
pub fn harvest(config: &HarvestConfig) -> Result<CorpusManifest> {
    config.validate()?;
    let lines = read_url_list(&config.url_list_path)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let mut jobs: Vec<(usize, Url, String)> = Vec::new();
    for (index, line) in lines.iter().enumerate() {
        match Url::parse(line) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => match site_of_url(&u) {
                Some(site) if !site.is_empty() => jobs.push((index, u, site)),
                _ => warn!(url = %line, "URL has no host; skipped"),
            },
            _ => warn!(url = %line, "not an absolute http(s) URL; skipped"),
        }
    }

    let agent: Agent = Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
        .max_redirects(config.follow_redirects)
        .user_agent(config.user_agent.as_str())
        .http_status_as_error(false)
        .build()
        .into();

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<SiteResult>();
    let workers = config.max_parallel_sites.min(jobs.len()).max(1);
    let out_dir = config.out_dir.as_path();

    let collected = std::thread::scope(|scope| -> Result<Vec<SiteResult>> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (agent, jobs, next) = (&agent, &jobs, &next);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((index, url, site)) = jobs.get(k) else { break };
                let r = harvest_site(agent, config, *index, url.clone(), site.clone());
                if tx.send(r).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut collected = Vec::with_capacity(jobs.len());
        for mut r in rx {
            if let Some(html) = &r.html {
                write_file(&out_dir.join(page_html_path(&r.site_id, r.index)), html)?;
            }
            for (meta, body) in r.scripts.iter_mut() {
                let path = out_dir.join(script_content_path(&meta.hash));
                if !path.is_file() {
                    write_file(&path, body)?;
                }
                *body = Vec::new();
            }
            info!(site = %r.site_id, status = ?r.status, scripts = r.scripts.len(), "harvested");
            collected.push(r);
        }
        Ok(collected)
    })?;

    let mut collected = collected;
    collected.sort_by_key(|r| r.index);
    let mut manifest = CorpusManifest::empty();
    for r in collected {
        let mut script_ids = Vec::with_capacity(r.scripts.len());
        for (meta, _) in r.scripts {
            let id = format!("s{:06}", manifest.scripts.len() + 1);
            manifest.scripts.push(ScriptRecord {
                id: id.clone(),
                site_id: r.site_id.clone(),
                kind: meta.kind,
                source_url: meta.source_url,
                content_path: script_content_path(&meta.hash),
                content_hash: meta.hash,
                byte_len: meta.byte_len,
                truncated: meta.truncated,
            });
            script_ids.push(id);
        }
        manifest.pages.push(PageSnapshot {
            html_path: r.html.as_ref().map(|_| page_html_path(&r.site_id, r.index)),
            site_id: r.site_id,
            page_url: r.page_url,
            fetched_at: r.fetched_at,
            script_ids,
            fetch_status: r.status,
        });
    }
    validate_manifest(&manifest)?;
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}
