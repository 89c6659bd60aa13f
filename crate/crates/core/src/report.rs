//! End-to-end analysis and the machine-readable clique report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clique::{clique_stats, enumerate_maximal_cliques, filter_by_sites, Clique, CliqueStats};
use crate::config::AnalysisConfig;
use crate::corpus::{load_corpus, CorpusData, ScriptKind};
use crate::error::{Error, Result};
use crate::graph::{build_graph, build_nodes, FilterAudit, SimilarityGraph};
use crate::pipeline::{prepare, PreparedCorpus};
use crate::profile::{
    attribute_vendors, classify_clique, clique_members, profile_clique, Evidence, SignatureRuleSet, Tag, TagScores,
    VendorRow,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberScript {
    pub script_id: String,
    pub site_id: String,
    pub source_url: Option<String>,
    pub content_hash: String,
}

/// A retained clique merged with its profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportClique {
    pub clique_id: String,
    pub kind: ScriptKind,
    pub node_ids: Vec<String>,
    pub sites: BTreeSet<String>,
    pub n_sites: usize,
    pub min_internal_score: f64,
    pub members: Vec<MemberScript>,
    pub source_fqdns: BTreeSet<String>,
    pub external_fqdns: BTreeSet<String>,
    pub top_keywords: Vec<(String, f64)>,
    pub tag: Tag,
    pub tag_evidence: Vec<Evidence>,
    pub tag_scores: TagScores,
    /// Other retained cliques sharing at least one node with this one.
    pub overlaps_with: Vec<String>,
}

impl ReportClique {
    /// Sorted content hashes of all member scripts.
    pub fn fingerprint(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.members.iter().map(|m| m.content_hash.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSummary {
    pub n_cliques: usize,
    pub n_sites: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_pages: usize,
    pub n_sites: usize,
    pub n_scripts: usize,
    pub n_scripts_after_dedup: usize,
    pub n_analyzed: usize,
    pub excluded_too_small: usize,
    pub excluded_few_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueReport {
    pub tool_version: String,
    pub config: AnalysisConfig,
    pub rules_version: String,
    pub corpus: CorpusSummary,
    pub filter_audit: FilterAudit,
    pub cliques: Vec<ReportClique>,
    pub stats_by_kind: BTreeMap<ScriptKind, CliqueStats>,
    pub tag_summary: BTreeMap<Tag, TagSummary>,
    pub vendors: Vec<VendorRow>,
}

impl CliqueReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Everything an analysis run produces, for callers that need more than the report.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub prepared: PreparedCorpus,
    pub graph: SimilarityGraph,
    pub report: CliqueReport,
}

/// Graph and retained cliques for one configuration; ids are assigned in order.
pub fn retained_cliques(prepared: &PreparedCorpus, config: &AnalysisConfig) -> Result<(SimilarityGraph, Vec<Clique>)> {
    let nodes = build_nodes(&prepared.scripts);
    let graph = build_graph(nodes, &prepared.scripts, config);
    let cliques = cliques_of(&graph, config)?;
    Ok((graph, cliques))
}

pub(crate) fn cliques_of(graph: &SimilarityGraph, config: &AnalysisConfig) -> Result<Vec<Clique>> {
    let mut cliques = filter_by_sites(enumerate_maximal_cliques(graph, config)?, config);
    for (i, c) in cliques.iter_mut().enumerate() {
        c.clique_id = format!("c{:05}", i + 1);
    }
    Ok(cliques)
}

/// dedup → tokenize → vectorize → graph → cliques → site filter → profile → classify.
pub fn analyze_data(data: &CorpusData, config: &AnalysisConfig, rules: &SignatureRuleSet) -> Result<Analysis> {
    config.validate()?;
    rules.validate()?;
    let prepared = prepare(data, config)?;
    let (graph, cliques) = retained_cliques(&prepared, config)?;

    let mut by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (ci, c) in cliques.iter().enumerate() {
        for &n in &c.nodes {
            by_node.entry(n).or_default().push(ci);
        }
    }

    let entries: Vec<ReportClique> = cliques
        .iter()
        .map(|clique| {
            let members = clique_members(clique, &graph);
            let profile = profile_clique(clique, &graph, &prepared, data);
            let contents = members.iter().map(|&m| {
                let id = prepared.scripts[m].record.id.as_str();
                (id, data.content(id))
            });
            let profile = classify_clique(profile, contents, rules);
            let overlaps: BTreeSet<&str> = clique
                .nodes
                .iter()
                .flat_map(|n| by_node[n].iter())
                .map(|&ci| cliques[ci].clique_id.as_str())
                .filter(|id| *id != clique.clique_id)
                .collect();
            ReportClique {
                clique_id: clique.clique_id.clone(),
                kind: clique.kind,
                node_ids: clique.node_ids.clone(),
                sites: clique.sites.clone(),
                n_sites: clique.n_sites(),
                min_internal_score: clique.min_internal_score,
                members: members
                    .iter()
                    .map(|&m| {
                        let r = &prepared.scripts[m].record;
                        MemberScript {
                            script_id: r.id.clone(),
                            site_id: r.site_id.clone(),
                            source_url: r.source_url.clone(),
                            content_hash: r.content_hash.clone(),
                        }
                    })
                    .collect(),
                source_fqdns: profile.source_fqdns,
                external_fqdns: profile.external_fqdns,
                top_keywords: profile.top_keywords,
                tag: profile.tag,
                tag_evidence: profile.tag_evidence,
                tag_scores: profile.tag_scores,
                overlaps_with: overlaps.into_iter().map(str::to_string).collect(),
            }
        })
        .collect();

    let stats_by_kind = [ScriptKind::Embedded, ScriptKind::Downloaded]
        .into_iter()
        .map(|k| (k, clique_stats(cliques.iter().filter(|c| c.kind == k))))
        .collect();
    let tag_summary = [Tag::AntiAdblocker, Tag::Tracker, Tag::Other]
        .into_iter()
        .map(|t| {
            let tagged: Vec<&ReportClique> = entries.iter().filter(|c| c.tag == t).collect();
            let sites: BTreeSet<&str> = tagged.iter().flat_map(|c| c.sites.iter().map(String::as_str)).collect();
            (
                t,
                TagSummary {
                    n_cliques: tagged.len(),
                    n_sites: sites.len(),
                },
            )
        })
        .collect();

    let corpus = CorpusSummary {
        n_pages: data.manifest.pages.len(),
        n_sites: data.manifest.site_ids().len(),
        n_scripts: data.manifest.scripts.len(),
        n_scripts_after_dedup: prepared.manifest.scripts.len(),
        n_analyzed: prepared.scripts.len(),
        excluded_too_small: prepared.excluded_too_small,
        excluded_few_tokens: prepared.excluded_few_tokens,
    };
    let vendors = attribute_vendors(&entries);
    let report = CliqueReport {
        tool_version: crate::TOOL_VERSION.to_string(),
        config: config.clone(),
        rules_version: rules.version.clone(),
        corpus,
        filter_audit: graph.audit.clone(),
        cliques: entries,
        stats_by_kind,
        tag_summary,
        vendors,
    };
    Ok(Analysis {
        prepared,
        graph,
        report,
    })
}

/// Loads the corpus at `corpus_dir` and analyzes it. `rules_path` of `None`
/// uses the built-in signature ruleset.
pub fn analyze(corpus_dir: impl AsRef<Path>, config: &AnalysisConfig, rules_path: Option<&Path>) -> Result<Analysis> {
    let rules = match rules_path {
        Some(p) => SignatureRuleSet::from_file(p)?,
        None => SignatureRuleSet::default(),
    };
    let data = load_corpus(corpus_dir)?;
    analyze_data(&data, config, &rules)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryBasis {
    AntiAdblockSites,
    AllSites,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    pub rows: Vec<CategoryRow>,
    pub basis: CategoryBasis,
    pub categorized_sites: usize,
    /// Sites in the basis with no category mapping; excluded from the percentages.
    pub uncategorized_sites: usize,
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

/// Parses `site_id,category` rows. A `site_id,category` header line is skipped;
/// the first mapping for a site wins.
pub fn parse_category_map(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (site, category) = line.split_once(',').ok_or_else(|| Error::Csv {
            line: i + 1,
            detail: "expected site_id,category".into(),
        })?;
        let (site, category) = (unquote(site).to_ascii_lowercase(), unquote(category));
        if i == 0 && site == "site_id" {
            continue;
        }
        if site.is_empty() || category.is_empty() {
            return Err(Error::Csv {
                line: i + 1,
                detail: "empty site_id or category".into(),
            });
        }
        map.entry(site).or_insert_with(|| category.to_string());
    }
    Ok(map)
}

/// Category distribution over anti-adblocker sites, largest share first.
pub fn categorize(report: &CliqueReport, categories: &BTreeMap<String, String>) -> CategoryTable {
    let sites: BTreeSet<&str> = report
        .cliques
        .iter()
        .filter(|c| c.tag == Tag::AntiAdblocker)
        .flat_map(|c| c.sites.iter().map(String::as_str))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut uncategorized = 0;
    for s in &sites {
        match categories.get(*s) {
            Some(c) => *counts.entry(c.as_str()).or_default() += 1,
            None => uncategorized += 1,
        }
    }
    let categorized: usize = counts.values().sum();
    let mut rows: Vec<CategoryRow> = counts
        .into_iter()
        .map(|(c, n)| CategoryRow {
            category: c.to_string(),
            percent: 100.0 * n as f64 / categorized as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.percent
            .total_cmp(&a.percent)
            .then_with(|| a.category.cmp(&b.category))
    });
    CategoryTable {
        rows,
        basis: CategoryBasis::AntiAdblockSites,
        categorized_sites: categorized,
        uncategorized_sites: uncategorized,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopClique {
    pub clique_id: String,
    pub n_sites: usize,
    pub kind: ScriptKind,
    pub tag: Tag,
    pub source_fqdns: BTreeSet<String>,
    pub top_keywords: Vec<String>,
}

/// The `k` cliques spanning the most sites, with their sources and five leading keywords.
pub fn top_cliques(report: &CliqueReport, k: usize) -> Vec<TopClique> {
    let mut all: Vec<&ReportClique> = report.cliques.iter().collect();
    all.sort_by(|a, b| b.n_sites.cmp(&a.n_sites).then_with(|| a.clique_id.cmp(&b.clique_id)));
    all.into_iter()
        .take(k)
        .map(|c| TopClique {
            clique_id: c.clique_id.clone(),
            n_sites: c.n_sites,
            kind: c.kind,
            tag: c.tag,
            source_fqdns: c.source_fqdns.clone(),
            top_keywords: c.top_keywords.iter().take(5).map(|(t, _)| t.clone()).collect(),
        })
        .collect()
}
