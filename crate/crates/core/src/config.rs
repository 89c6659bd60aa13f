use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.80;
pub const DEFAULT_WORDCOUNT_RATIO_MAX: f64 = 1.50;
/// Cliques must span more than five distinct sites.
pub const DEFAULT_MIN_CLIQUE_SITES: usize = 6;
pub const DEFAULT_MIN_TOKENS: usize = 10;
pub const DEFAULT_MAX_CLIQUE_STEPS: u64 = 100_000_000;

/// Knobs for graph construction and clique retention.
///
/// Edges exist iff `similarity >= similarity_threshold`; a pair is compared only if
/// `max(t1, t2) / min(t1, t2) <= wordcount_ratio_max` over post-filter token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub similarity_threshold: f64,
    pub wordcount_ratio_max: f64,
    pub min_clique_sites: usize,
    pub min_tokens: usize,
    /// Recursion steps allowed for one clique enumeration before it aborts.
    pub max_clique_steps: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            wordcount_ratio_max: DEFAULT_WORDCOUNT_RATIO_MAX,
            min_clique_sites: DEFAULT_MIN_CLIQUE_SITES,
            min_tokens: DEFAULT_MIN_TOKENS,
            max_clique_steps: DEFAULT_MAX_CLIQUE_STEPS,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidArgument(format!(
                "similarity_threshold {} is outside [0, 1]",
                self.similarity_threshold
            )));
        }
        if self.wordcount_ratio_max.is_nan() || self.wordcount_ratio_max <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "wordcount_ratio_max {} must be greater than 1",
                self.wordcount_ratio_max
            )));
        }
        if self.min_clique_sites == 0 {
            return Err(Error::InvalidArgument("min_clique_sites must be positive".into()));
        }
        if self.max_clique_steps == 0 {
            return Err(Error::InvalidArgument("max_clique_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        AnalysisConfig {
            similarity_threshold: threshold,
            ..self.clone()
        }
    }

    /// Reads a config file; `.toml` files are parsed as TOML, anything else as JSON.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: AnalysisConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
