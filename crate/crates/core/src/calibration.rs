//! Threshold sweep: clique counts and true-positive rate against labeled cliques.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::corpus::CorpusData;
use crate::error::{Error, Result};
use crate::graph::{build_graph, build_nodes, SimilarityGraph};
use crate::pipeline::{prepare, PreparedCorpus};
use crate::profile::clique_members;
use crate::report::cliques_of;

pub const DEFAULT_T_MIN: f64 = 0.40;
pub const DEFAULT_T_MAX: f64 = 1.00;
pub const DEFAULT_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    SameSource,
    Mixed,
}

/// A hand label for one clique, identified by the sorted set of its members'
/// content hashes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub fingerprint: BTreeSet<String>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub threshold: f64,
    pub n_cliques: usize,
    pub n_labeled: usize,
    pub tpr: Option<f64>,
    /// Graph edges at this threshold.
    pub n_edges: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            step: DEFAULT_STEP,
        }
    }
}

impl ThresholdGrid {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |t: f64| (0.0..=1.0).contains(&t);
        if !(in_unit(self.t_min) && in_unit(self.t_max) && self.t_min < self.t_max) {
            return Err(Error::InvalidArgument(format!(
                "threshold range must satisfy 0 <= min < max <= 1, got {}..{}",
                self.t_min, self.t_max
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Grid points from `t_min` to `t_max` inclusive, rounded to 1e-9 so that
    /// accumulated float error never drops or duplicates an endpoint.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.t_max - self.t_min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.t_min + i as f64 * self.step) * 1e9).round() / 1e9)
            .filter(|&t| t <= self.t_max + 1e-12)
            .collect()
    }
}

/// Reads labels from a JSON array of `{"fingerprint": [...], "label": ...}`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<GroundTruthLabel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels: Vec<GroundTruthLabel> = serde_json::from_str(&text)?;
    if labels.iter().any(|l| l.fingerprint.is_empty()) {
        return Err(Error::Schema("label with an empty fingerprint".into()));
    }
    Ok(labels)
}

fn clique_fingerprints(
    graph: &SimilarityGraph,
    prepared: &PreparedCorpus,
    config: &AnalysisConfig,
) -> Result<Vec<BTreeSet<String>>> {
    Ok(cliques_of(graph, config)?
        .iter()
        .map(|c| {
            clique_members(c, graph)
                .into_iter()
                .map(|m| prepared.scripts[m].record.content_hash.clone())
                .collect()
        })
        .collect())
}

/// Runs the graph and clique stages at every grid threshold.
///
/// The graph is built once at the lowest threshold; higher thresholds keep the
/// subset of its edges that clear them, which is exactly the graph a full
/// rebuild would produce. A retained clique counts as labeled only when its
/// fingerprint equals a label's fingerprint exactly.
pub fn sweep(
    data: &CorpusData,
    config: &AnalysisConfig,
    labels: &[GroundTruthLabel],
    grid: &ThresholdGrid,
) -> Result<Vec<CalibrationRow>> {
    grid.validate()?;
    config.validate()?;
    let points = grid.points();
    let base_config = config.with_threshold(grid.t_min);
    let prepared = prepare(data, &base_config)?;
    let base = build_graph(build_nodes(&prepared.scripts), &prepared.scripts, &base_config);

    let by_print: HashMap<&BTreeSet<String>, Label> = labels.iter().map(|l| (&l.fingerprint, l.label)).collect();

    let rows = points
        .par_iter()
        .map(|&t| -> Result<CalibrationRow> {
            let cfg = config.with_threshold(t);
            let graph = base.at_threshold(t);
            let prints = clique_fingerprints(&graph, &prepared, &cfg)?;
            let found: Vec<Label> = prints.iter().filter_map(|p| by_print.get(p).copied()).collect();
            let same = found.iter().filter(|&&l| l == Label::SameSource).count();
            Ok(CalibrationRow {
                threshold: t,
                n_cliques: prints.len(),
                n_labeled: found.len(),
                tpr: (!found.is_empty()).then(|| same as f64 / found.len() as f64),
                n_edges: graph.edges.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for w in rows.windows(2) {
        assert!(
            w[1].n_edges <= w[0].n_edges,
            "edge count increased from {} at {} to {} at {}",
            w[0].n_edges,
            w[0].threshold,
            w[1].n_edges,
            w[1].threshold
        );
    }
    Ok(rows)
}

/// Writes `threshold,n_cliques,n_labeled,tpr`; `tpr` is blank when no retained
/// clique was labeled.
pub fn write_calibration_csv<W: Write>(rows: &[CalibrationRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "threshold,n_cliques,n_labeled,tpr")?;
    for r in rows {
        let tpr = r.tpr.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{:.2},{},{},{}", r.threshold, r.n_cliques, r.n_labeled, tpr)?;
    }
    Ok(())
}
