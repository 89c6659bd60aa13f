//! Per-clique provenance features and signature-based functionality tagging.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clique::Clique;
use crate::corpus::{CorpusData, ScriptKind};
use crate::domain::{is_valid_hostname, normalize_host, registrable_domain};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::lexical::is_token_byte;
use crate::pipeline::PreparedCorpus;
use crate::report::ReportClique;
use crate::scan::{host_at, url_hits};

pub const TOP_KEYWORDS: usize = 25;
pub const UNATTRIBUTED: &str = "unattributed";

const DEFAULT_RULES_JSON: &str = include_str!("../rules/default_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    AntiAdblocker,
    Tracker,
    Other,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::AntiAdblocker => "anti_adblocker",
            Tag::Tracker => "tracker",
            Tag::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub signature_name: String,
    pub matched_term: String,
    pub script_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TagScores {
    pub anti_adblocker: f64,
    pub tracker: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueProfile {
    pub clique_id: String,
    pub source_fqdns: BTreeSet<String>,
    pub external_fqdns: BTreeSet<String>,
    pub top_keywords: Vec<(String, f64)>,
    pub tag: Tag,
    pub tag_evidence: Vec<Evidence>,
    /// Highest per-member signature total for each tagged class.
    pub tag_scores: TagScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub anti_adblocker: f64,
    pub tracker: f64,
}

/// Weighted signature terms. A term matches case-insensitively where it starts
/// at an identifier boundary (start of text, after a non-identifier byte, or at
/// a lower-to-upper camel-case transition); it may run into a longer word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureRuleSet {
    pub version: String,
    pub anti_adblock_terms: BTreeMap<String, f64>,
    pub tracker_terms: BTreeMap<String, f64>,
    pub thresholds: Thresholds,
}

impl Default for SignatureRuleSet {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RULES_JSON).expect("built-in ruleset parses")
    }
}

impl SignatureRuleSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let rules: SignatureRuleSet =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("signature ruleset: {e}")))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        let terms = self.anti_adblock_terms.iter().chain(self.tracker_terms.iter());
        for (term, &w) in terms {
            if term.is_empty() || !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "signature term {term:?} needs a positive weight"
                )));
            }
        }
        let t = self.thresholds;
        if !(t.anti_adblocker > 0.0 && t.tracker > 0.0) {
            return Err(Error::InvalidArgument("signature thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// First boundary-anchored, case-insensitive occurrence of `term`, returned as the
/// literal slice of `content`.
pub fn find_term<'c>(content: &'c [u8], term: &str) -> Option<&'c str> {
    let needle = term.as_bytes();
    if needle.is_empty() || needle.len() > content.len() {
        return None;
    }
    let first = needle[0].to_ascii_lowercase();
    (0..=content.len() - needle.len()).find_map(|i| {
        if content[i].to_ascii_lowercase() != first || !content[i..i + needle.len()].eq_ignore_ascii_case(needle) {
            return None;
        }
        let boundary = i == 0
            || !is_token_byte(content[i - 1])
            || (content[i - 1].is_ascii_lowercase() && content[i].is_ascii_uppercase());
        if !boundary {
            return None;
        }
        std::str::from_utf8(&content[i..i + needle.len()]).ok()
    })
}

/// Lowercased hostnames of every absolute or quoted scheme-relative URL in `content`.
pub fn extract_fqdns(content: &[u8]) -> BTreeSet<String> {
    url_hits(content)
        .map(|hit| normalize_host(host_at(content, hit.authority_start)))
        .filter(|h| is_valid_hostname(h))
        .collect()
}

/// Script indices (into the prepared corpus) of every member of `clique`, ascending.
pub fn clique_members(clique: &Clique, graph: &SimilarityGraph) -> Vec<usize> {
    let mut m: Vec<usize> = clique
        .nodes
        .iter()
        .flat_map(|&n| graph.nodes[n].members.iter().copied())
        .collect();
    m.sort_unstable();
    m
}

/// Source, external-resource and keyword features of a clique; the tag is left at `Other`.
pub fn profile_clique(
    clique: &Clique,
    graph: &SimilarityGraph,
    prepared: &PreparedCorpus,
    data: &CorpusData,
) -> CliqueProfile {
    let members = clique_members(clique, graph);
    let mut source_fqdns = BTreeSet::new();
    let mut external_fqdns = BTreeSet::new();
    let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
    for &m in &members {
        let script = &prepared.scripts[m];
        if script.record.kind == ScriptKind::Downloaded {
            if let Some(host) = script
                .record
                .source_url
                .as_deref()
                .and_then(|u| url::Url::parse(u).ok())
                .and_then(|u| u.host_str().map(normalize_host))
            {
                source_fqdns.insert(host);
            }
        }
        external_fqdns.extend(extract_fqdns(data.content(&script.record.id)));
        for &(t, w) in script.vector.entries() {
            *sums.entry(t).or_insert(0.0) += w;
        }
    }

    let n = members.len().max(1) as f64;
    let mut top_keywords: Vec<(String, f64)> = match &prepared.stats {
        Some(stats) => sums
            .into_iter()
            .map(|(t, s)| (stats.term(t).to_string(), s / n))
            .collect(),
        None => Vec::new(),
    };
    top_keywords.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top_keywords.truncate(TOP_KEYWORDS);

    CliqueProfile {
        clique_id: clique.clique_id.clone(),
        source_fqdns,
        external_fqdns,
        top_keywords,
        tag: Tag::Other,
        tag_evidence: Vec::new(),
        tag_scores: TagScores::default(),
    }
}

fn match_terms(
    terms: &BTreeMap<String, f64>,
    class: &str,
    script_id: &str,
    content: &[u8],
    evidence: &mut Vec<Evidence>,
) -> f64 {
    let mut total = 0.0;
    for (term, &weight) in terms {
        if let Some(found) = find_term(content, term) {
            total += weight;
            evidence.push(Evidence {
                signature_name: format!("{class}:{term}"),
                matched_term: found.to_string(),
                script_id: script_id.to_string(),
            });
        }
    }
    total
}

/// Scores each member against the ruleset and tags the clique by its best member:
/// anti-adblocker first, then tracker, else other.
pub fn classify_clique<'a, I>(profile: CliqueProfile, members: I, rules: &SignatureRuleSet) -> CliqueProfile
where
    I: IntoIterator<Item = (&'a str, &'a [u8])>,
{
    let mut evidence = Vec::new();
    let mut scores = TagScores::default();
    for (script_id, content) in members {
        let anti = match_terms(
            &rules.anti_adblock_terms,
            "anti_adblock",
            script_id,
            content,
            &mut evidence,
        );
        let tracker = match_terms(&rules.tracker_terms, "tracker", script_id, content, &mut evidence);
        scores.anti_adblocker = scores.anti_adblocker.max(anti);
        scores.tracker = scores.tracker.max(tracker);
    }
    let tag = if scores.anti_adblocker >= rules.thresholds.anti_adblocker {
        Tag::AntiAdblocker
    } else if scores.tracker >= rules.thresholds.tracker {
        Tag::Tracker
    } else {
        Tag::Other
    };
    CliqueProfile {
        tag,
        tag_evidence: evidence,
        tag_scores: scores,
        ..profile
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorRow {
    pub domain: String,
    pub n_sites: usize,
    pub clique_ids: Vec<String>,
}

/// Registrable domains an anti-adblock clique is attributed to.
///
/// Downloaded cliques go to the registrable domains of their sources. Embedded
/// cliques go to the single registrable domain their external references point
/// at, if there is exactly one.
pub fn vendor_domains(clique: &ReportClique) -> Vec<String> {
    let domains: BTreeSet<String> = match clique.kind {
        ScriptKind::Downloaded => clique.source_fqdns.iter().map(|h| registrable_domain(h)).collect(),
        ScriptKind::Embedded => {
            let ext: BTreeSet<String> = clique.external_fqdns.iter().map(|h| registrable_domain(h)).collect();
            if ext.len() == 1 {
                ext
            } else {
                BTreeSet::new()
            }
        }
    };
    if domains.is_empty() {
        vec![UNATTRIBUTED.to_string()]
    } else {
        domains.into_iter().collect()
    }
}

/// Vendor table over anti-adblock cliques, largest site count first.
pub fn attribute_vendors(cliques: &[ReportClique]) -> Vec<VendorRow> {
    let mut by_domain: BTreeMap<String, (BTreeSet<&str>, Vec<String>)> = BTreeMap::new();
    for c in cliques.iter().filter(|c| c.tag == Tag::AntiAdblocker) {
        for d in vendor_domains(c) {
            let entry = by_domain.entry(d).or_default();
            entry.0.extend(c.sites.iter().map(String::as_str));
            entry.1.push(c.clique_id.clone());
        }
    }
    let mut rows: Vec<VendorRow> = by_domain
        .into_iter()
        .map(|(domain, (sites, mut ids))| {
            ids.sort();
            VendorRow {
                domain,
                n_sites: sites.len(),
                clique_ids: ids,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.n_sites.cmp(&a.n_sites).then_with(|| a.domain.cmp(&b.domain)));
    rows
}
