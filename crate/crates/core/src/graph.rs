//! The script-similarity graph.
//!
//! Nodes are scripts after same-source merging. A pair of nodes is compared only
//! when it survives every pruning filter:
//!
//! 1. both nodes have the same kind (embedded scripts never meet downloaded ones),
//! 2. both or neither reference external URLs,
//! 3. their token counts are within `wordcount_ratio_max` of each other,
//! 4. they were not already merged into one node.
//!
//! Surviving pairs get an edge when their cosine similarity reaches the threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::corpus::ScriptKind;
use crate::lexical::{clear_dense, cosine_dense, scatter_dense};
use crate::pipeline::PreparedScript;
use crate::scan::url_hits;

/// True iff `content` lexically contains an `http://`/`https://` URL or a quoted
/// scheme-relative `//host` reference.
pub fn external_ref_scan(content: &[u8]) -> bool {
    url_hits(content).next().is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: String,
    /// Member script ids in manifest order. The first one is the representative.
    pub member_scripts: Vec<String>,
    pub kind: ScriptKind,
    pub sites: BTreeSet<String>,
    pub has_external_refs: bool,
    /// Post-filter token count of the representative.
    pub total_terms: u32,
    /// Index of the representative in the prepared script list.
    #[serde(skip)]
    pub representative: usize,
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Edge between `nodes[a]` and `nodes[b]`, `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEdge {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// How many node pairs each filter removed, in the order the filters apply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterAudit {
    pub scripts: usize,
    pub nodes: usize,
    /// Scripts folded into another node by same URL or same content.
    pub merged_by_source: usize,
    pub total_pairs: u64,
    pub eliminated_by_kind: u64,
    pub eliminated_by_external_refs: u64,
    pub eliminated_by_empty: u64,
    pub eliminated_by_wordcount: u64,
    pub compared: u64,
    pub edges: u64,
    pub wordcount_basis: String,
    pub wordcount_bound_inclusive: bool,
    pub threshold_inclusive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<SimilarityEdge>,
    pub threshold: f64,
    pub audit: FilterAudit,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the lower index as root so representatives follow manifest order
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

/// Groups scripts into nodes. Downloaded scripts sharing a source URL merge, and
/// scripts of the same kind with identical content merge regardless of URL.
pub fn build_nodes(scripts: &[PreparedScript]) -> Vec<GraphNode> {
    let mut uf = UnionFind::new(scripts.len());
    let mut by_url: HashMap<&str, usize> = HashMap::new();
    let mut by_hash: HashMap<(ScriptKind, &str), usize> = HashMap::new();
    for (i, s) in scripts.iter().enumerate() {
        if let (ScriptKind::Downloaded, Some(url)) = (s.record.kind, s.record.source_url.as_deref()) {
            match by_url.get(url) {
                Some(&j) => uf.union(i, j),
                None => {
                    by_url.insert(url, i);
                }
            }
        }
        match by_hash.get(&(s.record.kind, s.record.content_hash.as_str())) {
            Some(&j) => uf.union(i, j),
            None => {
                by_hash.insert((s.record.kind, s.record.content_hash.as_str()), i);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..scripts.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups
        .into_values()
        .enumerate()
        .map(|(n, members)| {
            let rep = &scripts[members[0]];
            GraphNode {
                node_id: format!("n{n:06}"),
                member_scripts: members.iter().map(|&m| scripts[m].record.id.clone()).collect(),
                kind: rep.record.kind,
                sites: members.iter().map(|&m| scripts[m].record.site_id.clone()).collect(),
                has_external_refs: members.iter().any(|&m| scripts[m].has_external_refs),
                total_terms: rep.bag.total_terms,
                representative: members[0],
                members,
            }
        })
        .collect()
}

/// Nodes bucketed by (kind, external refs) and sorted by token count, so every
/// node's word-count window is a contiguous run after it.
pub struct CandidateIndex {
    groups: Vec<Vec<(u32, usize)>>,
    ratio_max: f64,
    audit: FilterAudit,
}

impl CandidateIndex {
    pub fn new(nodes: &[GraphNode], config: &AnalysisConfig) -> Self {
        let mut buckets: BTreeMap<(ScriptKind, bool), Vec<(u32, usize)>> = BTreeMap::new();
        let mut empty: BTreeMap<(ScriptKind, bool), u64> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            let key = (n.kind, n.has_external_refs);
            if n.total_terms == 0 {
                *empty.entry(key).or_default() += 1;
            } else {
                buckets.entry(key).or_default().push((n.total_terms, i));
            }
        }
        for g in buckets.values_mut() {
            g.sort_unstable();
        }

        let pairs = |n: u64| n * n.saturating_sub(1) / 2;
        let count = |kind: ScriptKind, ext: bool| {
            buckets.get(&(kind, ext)).map_or(0, |g| g.len() as u64) + empty.get(&(kind, ext)).copied().unwrap_or(0)
        };
        let mut audit = FilterAudit {
            nodes: nodes.len(),
            total_pairs: pairs(nodes.len() as u64),
            wordcount_basis: "post_filter_tokens".into(),
            wordcount_bound_inclusive: true,
            threshold_inclusive: true,
            ..FilterAudit::default()
        };
        let per_kind = |k| count(k, true) + count(k, false);
        audit.eliminated_by_kind = per_kind(ScriptKind::Embedded) * per_kind(ScriptKind::Downloaded);
        for kind in [ScriptKind::Embedded, ScriptKind::Downloaded] {
            audit.eliminated_by_external_refs += count(kind, true) * count(kind, false);
            for ext in [true, false] {
                let e = empty.get(&(kind, ext)).copied().unwrap_or(0);
                audit.eliminated_by_empty += pairs(count(kind, ext)) - pairs(count(kind, ext) - e);
            }
        }

        let mut index = CandidateIndex {
            groups: buckets.into_values().collect(),
            ratio_max: config.wordcount_ratio_max,
            audit,
        };
        let compared: u64 = index.window_sizes().sum();
        let nonempty_pairs: u64 = index.groups.iter().map(|g| pairs(g.len() as u64)).sum();
        index.audit.compared = compared;
        index.audit.eliminated_by_wordcount = nonempty_pairs - compared;
        index
    }

    fn window_end(&self, group: &[(u32, usize)], p: usize) -> usize {
        let base = f64::from(group[p].0);
        let ratio_max = self.ratio_max;
        p + 1 + group[p + 1..].partition_point(|&(t, _)| f64::from(t) / base <= ratio_max)
    }

    fn window_sizes(&self) -> impl Iterator<Item = u64> + '_ {
        self.groups
            .iter()
            .flat_map(move |g| (0..g.len()).map(move |p| (self.window_end(g, p) - p - 1) as u64))
    }

    /// Partner node indices of the node at position `p` in `group`.
    fn window(&self, group: usize, p: usize) -> impl Iterator<Item = usize> + '_ {
        let g = &self.groups[group];
        let end = self.window_end(g, p);
        g[p + 1..end].iter().map(|&(_, j)| j)
    }

    /// Every surviving unordered pair as `(low, high)` node indices. Order follows
    /// the internal buckets, not node order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.groups.iter().enumerate().flat_map(move |(gi, g)| {
            (0..g.len()).flat_map(move |p| {
                let i = g[p].1;
                self.window(gi, p).map(move |j| (i.min(j), i.max(j)))
            })
        })
    }

    pub fn audit(&self) -> &FilterAudit {
        &self.audit
    }
}

/// Surviving node pairs, sorted.
pub fn candidate_pairs(nodes: &[GraphNode], config: &AnalysisConfig) -> Vec<(usize, usize)> {
    let mut v: Vec<_> = CandidateIndex::new(nodes, config).pairs().collect();
    v.sort_unstable();
    v
}

/// Scores every candidate pair in parallel and keeps those at or above the
/// threshold. Edges are sorted by `(a, b)`.
pub fn build_graph(nodes: Vec<GraphNode>, scripts: &[PreparedScript], config: &AnalysisConfig) -> SimilarityGraph {
    let index = CandidateIndex::new(&nodes, config);
    let threshold = config.similarity_threshold;
    let work: Vec<(usize, usize)> = index
        .groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| (0..g.len()).map(move |p| (gi, p)))
        .collect();
    let dims = scripts
        .iter()
        .filter_map(|s| s.vector.entries().last().map(|&(t, _)| t as usize + 1))
        .max()
        .unwrap_or(0);
    let mut edges: Vec<SimilarityEdge> = work
        .par_iter()
        .map_init(
            || vec![0.0; dims],
            |dense, &(gi, p)| {
                let i = index.groups[gi][p].1;
                let vi = &scripts[nodes[i].representative].vector;
                scatter_dense(vi, dense);
                let found: Vec<SimilarityEdge> = index
                    .window(gi, p)
                    .filter_map(|j| {
                        let score = cosine_dense(dense, vi, &scripts[nodes[j].representative].vector);
                        (score >= threshold).then(|| SimilarityEdge {
                            a: i.min(j),
                            b: i.max(j),
                            score,
                        })
                    })
                    .collect();
                clear_dense(vi, dense);
                found
            },
        )
        .flatten_iter()
        .collect();
    edges.sort_unstable_by_key(|e| (e.a, e.b));

    let mut audit = index.audit.clone();
    audit.scripts = scripts.len();
    audit.merged_by_source = scripts.len() - nodes.len();
    audit.edges = edges.len() as u64;
    SimilarityGraph {
        nodes,
        edges,
        threshold,
        audit,
    }
}

impl SimilarityGraph {
    /// The subgraph of edges scoring at least `threshold` (which must not be
    /// below the threshold this graph was built with).
    pub fn at_threshold(&self, threshold: f64) -> SimilarityGraph {
        debug_assert!(threshold >= self.threshold);
        let edges: Vec<_> = self.edges.iter().copied().filter(|e| e.score >= threshold).collect();
        let mut audit = self.audit.clone();
        audit.edges = edges.len() as u64;
        SimilarityGraph {
            nodes: self.nodes.clone(),
            edges,
            threshold,
            audit,
        }
    }

    /// Writes `node_a,node_b,score` rows sorted lexicographically.
    pub fn write_edge_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<(&str, &str, f64)> = self
            .edges
            .iter()
            .map(|e| {
                let (x, y) = (self.nodes[e.a].node_id.as_str(), self.nodes[e.b].node_id.as_str());
                (x.min(y), x.max(y), e.score)
            })
            .collect();
        rows.sort_by(|l, r| (l.0, l.1).cmp(&(r.0, r.1)));
        writeln!(out, "node_a,node_b,score")?;
        for (a, b, s) in rows {
            writeln!(out, "{a},{b},{s}")?;
        }
        Ok(())
    }
}
