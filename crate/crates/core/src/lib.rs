//! Detects third-party scripts shared across many websites by grouping similar
//! script files into maximal cliques of a TF-IDF similarity graph, then profiles
//! each clique's source and functionality and checks whether adblock filter
//! lists would block it.
//!
//! Pipeline: [`corpus`] → [`pipeline`] (dedup, [`lexical`]) → [`graph`] →
//! [`clique`] → [`profile`] → [`report`]. [`filter`] and [`calibration`] consume
//! reports and corpora respectively; [`harvest`] produces corpora.

pub mod calibration;
pub mod clique;
pub mod config;
pub mod corpus;
pub mod domain;
pub mod error;
pub mod filter;
pub mod graph;
pub mod harvest;
pub mod lexical;
pub mod pipeline;
pub mod profile;
pub mod report;
mod scan;
pub mod synth;

/// Tool name and version recorded in manifests and reports.
pub const TOOL_VERSION: &str = concat!("scriptclique ", env!("CARGO_PKG_VERSION"));

pub use calibration::{sweep, CalibrationRow, GroundTruthLabel, Label, ThresholdGrid};
pub use clique::{clique_stats, enumerate_maximal_cliques, filter_by_sites, Clique, CliqueStats};
pub use config::AnalysisConfig;
pub use corpus::{
    dedup_scripts, load_corpus, write_corpus, CorpusBuilder, CorpusData, CorpusManifest, FetchStatus, PageSnapshot,
    ScriptKind, ScriptRecord,
};
pub use error::{Error, Result};
pub use filter::{
    decide, matches, parse_filter_list, parse_rule, Decision, FilterRule, FilterSet, RequestContext, ResourceType,
    Verdict,
};
pub use graph::{
    build_graph, build_nodes, candidate_pairs, external_ref_scan, GraphNode, SimilarityEdge, SimilarityGraph,
};
pub use harvest::{extract_script_tags, harvest, HarvestConfig};
pub use lexical::{
    build_vocabulary, cosine_similarity, tfidf_vector, tokenize, KeywordVector, TokenBag, VocabularyStats,
};
pub use pipeline::{prepare, PreparedCorpus, PreparedScript};
pub use profile::{classify_clique, extract_fqdns, profile_clique, CliqueProfile, SignatureRuleSet, Tag};
pub use report::{analyze, analyze_data, categorize, top_cliques, CategoryTable, CliqueReport};
