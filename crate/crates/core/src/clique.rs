//! Maximal clique enumeration over the similarity graph.
//!
//! Bron–Kerbosch with Tomita pivoting, driven by a degeneracy ordering of the
//! outer loop (Eppstein, Löffler and Strash). Connected components are
//! enumerated independently in parallel and the results re-sorted.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::corpus::ScriptKind;
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clique {
    pub clique_id: String,
    pub node_ids: Vec<String>,
    pub sites: BTreeSet<String>,
    pub kind: ScriptKind,
    pub min_internal_score: f64,
    /// Indices into the graph's node list, parallel to `node_ids`.
    #[serde(skip)]
    pub nodes: Vec<usize>,
}

impl Clique {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CliqueStats {
    pub n_cliques: usize,
    pub mean_sites: f64,
    pub std_sites: f64,
    pub max_sites: usize,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn intersect_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

struct Enumerator<'a> {
    adj: &'a [Vec<usize>],
    steps: &'a AtomicU64,
    budget: u64,
    out: Vec<Vec<usize>>,
}

impl Enumerator<'_> {
    fn tick(&self) -> Result<()> {
        if self.steps.fetch_add(1, Ordering::Relaxed) >= self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    fn expand(&mut self, r: &mut Vec<usize>, p: Vec<usize>, x: Vec<usize>) -> Result<()> {
        self.tick()?;
        if p.is_empty() {
            if x.is_empty() {
                self.out.push(r.clone());
            }
            return Ok(());
        }
        // pivot: vertex of P ∪ X with the most neighbours in P
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| (intersect_len(&self.adj[u], &p), std::cmp::Reverse(u)))
            .expect("P is non-empty");
        let candidates: Vec<usize> = p
            .iter()
            .copied()
            .filter(|v| self.adj[pivot].binary_search(v).is_err())
            .collect();
        let (mut p, mut x) = (p, x);
        for v in candidates {
            let nv = &self.adj[v];
            let next_p = intersect(&p, nv);
            let next_x = intersect(&x, nv);
            r.push(v);
            self.expand(r, next_p, next_x)?;
            r.pop();
            let pos = p.binary_search(&v).expect("v in P");
            p.remove(pos);
            let pos = x.binary_search(&v).unwrap_err();
            x.insert(pos, v);
        }
        Ok(())
    }
}

/// Vertex order produced by repeatedly removing a minimum-degree vertex.
fn degeneracy_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_deg + 1];
    for v in (0..n).rev() {
        buckets[degree[v]].push(v);
    }
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut d = 0;
    while order.len() < n {
        d = d.min(max_deg);
        while buckets[d].is_empty() {
            d += 1;
        }
        let v = buckets[d].pop().expect("non-empty bucket");
        if removed[v] || degree[v] != d {
            continue;
        }
        removed[v] = true;
        order.push(v);
        for &u in &adj[v] {
            if !removed[u] {
                degree[u] -= 1;
                buckets[degree[u]].push(u);
                d = d.min(degree[u]);
            }
        }
    }
    order
}

fn component_cliques(adj: &[Vec<usize>], steps: &AtomicU64, budget: u64) -> Result<Vec<Vec<usize>>> {
    let order = degeneracy_order(adj);
    let mut rank = vec![0; adj.len()];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }
    let mut e = Enumerator {
        adj,
        steps,
        budget,
        out: Vec::new(),
    };
    for &v in &order {
        let (p, x): (Vec<usize>, Vec<usize>) = adj[v].iter().partition(|&&u| rank[u] > rank[v]);
        e.expand(&mut vec![v], p, x)?;
    }
    Ok(e.out)
}

/// All maximal cliques with at least two vertices of the simple undirected graph
/// on `n` vertices, each sorted ascending, listed by size descending then
/// lexicographically. Fails once more than `budget` recursion steps are spent.
pub fn maximal_cliques(n: usize, edges: &[(usize, usize)], budget: u64) -> Result<Vec<Vec<usize>>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }

    // connected components over non-isolated vertices
    let mut comp = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX || adj[s].is_empty() {
            continue;
        }
        let id = components.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            k += 1;
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = id;
                    members.push(u);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let steps = AtomicU64::new(0);
    let per_component: Vec<Vec<Vec<usize>>> = components
        .par_iter()
        .map(|members| {
            let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let sub: Vec<Vec<usize>> = members
                .iter()
                .map(|v| adj[*v].iter().map(|u| local[u]).collect())
                .collect();
            let cliques = component_cliques(&sub, &steps, budget)?;
            Ok(cliques
                .into_iter()
                .map(|c| {
                    let mut g: Vec<usize> = c.into_iter().map(|i| members[i]).collect();
                    g.sort_unstable();
                    g
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut all: Vec<Vec<usize>> = per_component.into_iter().flatten().collect();
    all.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    Ok(all)
}

/// Maximal cliques of the similarity graph.
///
/// A merged node already stands for several mutually identical scripts, so an
/// isolated node with two or more member scripts is reported as a one-node
/// clique. Clique ids are assigned in output order.
pub fn enumerate_maximal_cliques(graph: &SimilarityGraph, config: &AnalysisConfig) -> Result<Vec<Clique>> {
    let pairs: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.a, e.b)).collect();
    let mut sets = maximal_cliques(graph.nodes.len(), &pairs, config.max_clique_steps)?;

    let mut has_edge = vec![false; graph.nodes.len()];
    for &(a, b) in &pairs {
        has_edge[a] = true;
        has_edge[b] = true;
    }
    sets.extend(
        (0..graph.nodes.len())
            .filter(|&i| !has_edge[i] && graph.nodes[i].member_scripts.len() >= 2)
            .map(|i| vec![i]),
    );
    sets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let score: HashMap<(usize, usize), f64> = graph.edges.iter().map(|e| ((e.a, e.b), e.score)).collect();
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(k, nodes)| {
            let mut min_score = 1.0f64;
            for (i, &a) in nodes.iter().enumerate() {
                for &b in &nodes[i + 1..] {
                    min_score = min_score.min(score[&(a.min(b), a.max(b))]);
                }
            }
            Clique {
                clique_id: format!("c{:05}", k + 1),
                node_ids: nodes.iter().map(|&i| graph.nodes[i].node_id.clone()).collect(),
                sites: nodes
                    .iter()
                    .flat_map(|&i| graph.nodes[i].sites.iter().cloned())
                    .collect(),
                kind: graph.nodes[nodes[0]].kind,
                min_internal_score: min_score,
                nodes,
            }
        })
        .collect())
}

/// Keeps cliques whose distinct-site count reaches `min_clique_sites`.
pub fn filter_by_sites(cliques: Vec<Clique>, config: &AnalysisConfig) -> Vec<Clique> {
    cliques
        .into_iter()
        .filter(|c| c.n_sites() >= config.min_clique_sites)
        .collect()
}

/// Population mean, population standard deviation and maximum of distinct-site counts.
pub fn clique_stats<'a, I>(cliques: I) -> CliqueStats
where
    I: IntoIterator<Item = &'a Clique>,
{
    site_count_stats(cliques.into_iter().map(Clique::n_sites))
}

pub fn site_count_stats(counts: impl IntoIterator<Item = usize>) -> CliqueStats {
    let counts: Vec<usize> = counts.into_iter().collect();
    if counts.is_empty() {
        return CliqueStats::default();
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    CliqueStats {
        n_cliques: counts.len(),
        mean_sites: mean,
        std_sites: var.sqrt(),
        max_sites: counts.iter().copied().max().unwrap_or(0),
    }
}
