//! On-disk corpus layout and the in-memory model of harvested pages and scripts.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/pages/<site_id>/<n>.html
//! <root>/scripts/<content_hash>.js
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CORPUS_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Scripts shorter than this many bytes are kept in the corpus but never analyzed.
pub const MIN_ANALYZABLE_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Embedded,
    Downloaded,
}

impl ScriptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScriptKind::Embedded => "embedded",
            ScriptKind::Downloaded => "downloaded",
        }
    }
}

impl std::fmt::Display for ScriptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    HttpError(u16),
    Timeout,
    DnsFailure,
    /// TCP/TLS level failure after the name resolved.
    ConnectionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSnapshot {
    pub site_id: String,
    pub page_url: String,
    pub fetched_at: DateTime<Utc>,
    /// Absent when the page body could not be fetched.
    pub html_path: Option<String>,
    pub script_ids: Vec<String>,
    pub fetch_status: FetchStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub id: String,
    pub site_id: String,
    pub kind: ScriptKind,
    pub source_url: Option<String>,
    pub content_path: String,
    pub content_hash: String,
    pub byte_len: u64,
    /// Set when the download hit the size cap and the stored body is a prefix.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl ScriptRecord {
    pub fn too_small(&self) -> bool {
        self.byte_len < MIN_ANALYZABLE_BYTES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_version: u32,
    pub pages: Vec<PageSnapshot>,
    pub scripts: Vec<ScriptRecord>,
    pub created_by: String,
}

impl CorpusManifest {
    pub fn empty() -> Self {
        CorpusManifest {
            corpus_version: CORPUS_VERSION,
            pages: Vec::new(),
            scripts: Vec::new(),
            created_by: crate::TOOL_VERSION.to_string(),
        }
    }

    pub fn script(&self, id: &str) -> Option<&ScriptRecord> {
        self.scripts.iter().find(|s| s.id == id)
    }

    /// Distinct site ids across pages and scripts.
    pub fn site_ids(&self) -> std::collections::BTreeSet<&str> {
        self.pages
            .iter()
            .map(|p| p.site_id.as_str())
            .chain(self.scripts.iter().map(|s| s.site_id.as_str()))
            .collect()
    }
}

/// A manifest together with the script bodies it references, keyed by script id.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusData {
    pub manifest: CorpusManifest,
    pub contents: HashMap<String, Vec<u8>>,
    /// Page HTML keyed by `html_path`. Written by [`write_corpus`]; not loaded back.
    pub html: BTreeMap<String, Vec<u8>>,
}

impl CorpusData {
    pub fn content(&self, script_id: &str) -> &[u8] {
        self.contents.get(script_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn script_content_path(hash: &str) -> String {
    format!("scripts/{hash}.js")
}

pub fn page_html_path(site_id: &str, n: usize) -> String {
    format!("pages/{site_id}/{n}.html")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn checked_relative(root: &Path, rel: &str, what: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Schema(format!(
            "{what} path {rel:?} is not a plain relative path"
        )));
    }
    Ok(root.join(p))
}

pub(crate) fn validate_site_id(site_id: &str) -> Result<()> {
    let ok = !site_id.is_empty()
        && site_id == site_id.to_ascii_lowercase()
        && !site_id.contains("://")
        && !site_id.contains('/')
        && !site_id.contains(char::is_whitespace);
    if ok {
        Ok(())
    } else {
        Err(Error::Schema(format!("invalid site_id {site_id:?}")))
    }
}

fn validate_absolute_url(raw: &str, what: &str) -> Result<()> {
    match url::Url::parse(raw) {
        Ok(u) if u.has_host() => Ok(()),
        _ => Err(Error::Schema(format!("{what} {raw:?} is not an absolute URL"))),
    }
}

/// Checks every manifest invariant that does not need the filesystem.
pub fn validate_manifest(m: &CorpusManifest) -> Result<()> {
    if m.corpus_version != CORPUS_VERSION {
        return Err(Error::Schema(format!(
            "unsupported corpus_version {} (expected {CORPUS_VERSION})",
            m.corpus_version
        )));
    }
    let mut ids = HashSet::new();
    for s in &m.scripts {
        if s.id.is_empty() || !ids.insert(s.id.as_str()) {
            return Err(Error::Schema(format!("duplicate or empty script id {:?}", s.id)));
        }
        validate_site_id(&s.site_id)?;
        match (s.kind, &s.source_url) {
            (ScriptKind::Downloaded, Some(u)) => validate_absolute_url(u, "source_url")?,
            (ScriptKind::Embedded, None) => {}
            (ScriptKind::Downloaded, None) => {
                return Err(Error::Schema(format!("downloaded script {} has no source_url", s.id)))
            }
            (ScriptKind::Embedded, Some(_)) => {
                return Err(Error::Schema(format!("embedded script {} has a source_url", s.id)))
            }
        }
        let hash_ok = s.content_hash.len() == 64
            && s.content_hash
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !hash_ok {
            return Err(Error::Schema(format!("script {} has a malformed content_hash", s.id)));
        }
    }
    for p in &m.pages {
        validate_site_id(&p.site_id)?;
        validate_absolute_url(&p.page_url, "page_url")?;
        if let Some(id) = p.script_ids.iter().find(|id| !ids.contains(id.as_str())) {
            return Err(Error::Schema(format!(
                "page {} references unknown script id {id:?}",
                p.page_url
            )));
        }
    }
    Ok(())
}

/// Loads and validates the corpus rooted at `root`, reading every script body.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<CorpusData> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::CorpusNotFound(manifest_path));
    }
    let manifest: CorpusManifest = serde_json::from_slice(&read(&manifest_path)?)
        .map_err(|e| Error::Schema(format!("{}: {e}", manifest_path.display())))?;
    validate_manifest(&manifest)?;

    for p in &manifest.pages {
        if let Some(rel) = &p.html_path {
            let path = checked_relative(root, rel, "html")?;
            if !path.is_file() {
                return Err(Error::Schema(format!("missing page html {}", path.display())));
            }
        }
    }

    let mut contents = HashMap::with_capacity(manifest.scripts.len());
    for s in &manifest.scripts {
        let path = checked_relative(root, &s.content_path, "content")?;
        let bytes = fs::read(&path).map_err(|e| Error::Integrity {
            script_id: s.id.clone(),
            detail: format!("cannot read {}: {e}", path.display()),
        })?;
        let digest = sha256_hex(&bytes);
        if digest != s.content_hash {
            return Err(Error::Integrity {
                script_id: s.id.clone(),
                detail: format!("digest {digest} does not match recorded {}", s.content_hash),
            });
        }
        if bytes.len() as u64 != s.byte_len {
            return Err(Error::Integrity {
                script_id: s.id.clone(),
                detail: format!("length {} does not match recorded {}", bytes.len(), s.byte_len),
            });
        }
        contents.insert(s.id.clone(), bytes);
    }

    Ok(CorpusData {
        manifest,
        contents,
        html: BTreeMap::new(),
    })
}

/// Writes `data` under `root` in the standard layout. Content files are keyed by
/// hash, so identical bodies are written once.
pub fn write_corpus(root: impl AsRef<Path>, data: &CorpusData) -> Result<()> {
    let root = root.as_ref();
    validate_manifest(&data.manifest)?;
    for s in &data.manifest.scripts {
        let bytes = data.contents.get(&s.id).ok_or_else(|| Error::Integrity {
            script_id: s.id.clone(),
            detail: "no content supplied".into(),
        })?;
        let path = checked_relative(root, &s.content_path, "content")?;
        if !path.is_file() {
            write_file(&path, bytes)?;
        }
    }
    for (rel, bytes) in &data.html {
        write_file(&checked_relative(root, rel, "html")?, bytes)?;
    }
    write_manifest(root, &data.manifest)
}

pub fn write_manifest(root: &Path, manifest: &CorpusManifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest)?;
    write_file(&root.join(MANIFEST_FILE), &json)
}

/// Collapses scripts with the same `(site_id, content_hash, kind)` to the first
/// record in manifest order and rewrites page references to the survivor.
///
/// Cross-site copies are untouched; same-URL grouping across sites happens when
/// graph nodes are built.
pub fn dedup_scripts(manifest: &CorpusManifest) -> CorpusManifest {
    let mut survivor_of: HashMap<(&str, &str, ScriptKind), &str> = HashMap::new();
    let mut remap: HashMap<&str, &str> = HashMap::new();
    let mut scripts = Vec::with_capacity(manifest.scripts.len());
    for s in &manifest.scripts {
        let key = (s.site_id.as_str(), s.content_hash.as_str(), s.kind);
        let keep = *survivor_of.entry(key).or_insert(s.id.as_str());
        remap.insert(s.id.as_str(), keep);
        if keep == s.id {
            scripts.push(s.clone());
        }
    }
    let pages = manifest
        .pages
        .iter()
        .map(|p| {
            let mut seen = HashSet::new();
            let script_ids = p
                .script_ids
                .iter()
                .map(|id| remap.get(id.as_str()).copied().unwrap_or(id.as_str()))
                .filter(|id| seen.insert(*id))
                .map(str::to_string)
                .collect();
            PageSnapshot {
                script_ids,
                ..p.clone()
            }
        })
        .collect();
    CorpusManifest {
        corpus_version: manifest.corpus_version,
        pages,
        scripts,
        created_by: manifest.created_by.clone(),
    }
}

/// Incrementally assembles a corpus in memory. Script ids are assigned
/// sequentially (`s000001`, ...) in insertion order.
#[derive(Debug)]
pub struct CorpusBuilder {
    data: CorpusData,
    pages_per_site: HashMap<String, usize>,
}

impl Default for CorpusBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CorpusBuilder {
    pub fn new() -> Self {
        CorpusBuilder {
            data: CorpusData {
                manifest: CorpusManifest::empty(),
                contents: HashMap::new(),
                html: BTreeMap::new(),
            },
            pages_per_site: HashMap::new(),
        }
    }

    /// Adds a page and returns its index. `html` of `None` records no body.
    pub fn add_page(
        &mut self,
        site_id: &str,
        page_url: &str,
        fetched_at: DateTime<Utc>,
        html: Option<Vec<u8>>,
        fetch_status: FetchStatus,
    ) -> usize {
        let html_path = html.map(|bytes| {
            let n = self.pages_per_site.entry(site_id.to_string()).or_insert(0);
            let rel = page_html_path(site_id, *n);
            *n += 1;
            self.data.html.insert(rel.clone(), bytes);
            rel
        });
        self.data.manifest.pages.push(PageSnapshot {
            site_id: site_id.to_string(),
            page_url: page_url.to_string(),
            fetched_at,
            html_path,
            script_ids: Vec::new(),
            fetch_status,
        });
        self.data.manifest.pages.len() - 1
    }

    /// Adds a script observed on page `page` and returns its id.
    pub fn add_script(
        &mut self,
        page: usize,
        kind: ScriptKind,
        source_url: Option<&str>,
        content: Vec<u8>,
        truncated: bool,
    ) -> String {
        let id = format!("s{:06}", self.data.manifest.scripts.len() + 1);
        let hash = sha256_hex(&content);
        let site_id = self.data.manifest.pages[page].site_id.clone();
        self.data.manifest.scripts.push(ScriptRecord {
            id: id.clone(),
            site_id,
            kind,
            source_url: source_url.map(str::to_string),
            content_path: script_content_path(&hash),
            content_hash: hash,
            byte_len: content.len() as u64,
            truncated,
        });
        self.data.manifest.pages[page].script_ids.push(id.clone());
        self.data.contents.insert(id.clone(), content);
        id
    }

    pub fn finish(self) -> CorpusData {
        self.data
    }
}
