//! Turning a loaded corpus into analyzable scripts: dedup, tokenization and vectorization.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::config::AnalysisConfig;
use crate::corpus::{dedup_scripts, CorpusData, CorpusManifest, ScriptRecord};
use crate::error::Result;
use crate::graph::external_ref_scan;
use crate::lexical::{tokenize, vectorize_all, KeywordVector, TokenBag, VocabularyStats};

/// One script that passed the size and token floors, with its lexical features.
#[derive(Debug, Clone)]
pub struct PreparedScript {
    pub record: ScriptRecord,
    pub bag: TokenBag,
    pub vector: KeywordVector,
    pub has_external_refs: bool,
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    /// The deduplicated manifest.
    pub manifest: CorpusManifest,
    pub stats: Option<VocabularyStats>,
    /// Analyzable scripts in manifest order.
    pub scripts: Vec<PreparedScript>,
    /// Scripts kept in the corpus but excluded from analysis.
    pub excluded_too_small: usize,
    pub excluded_few_tokens: usize,
    index: HashMap<String, usize>,
}

impl PreparedCorpus {
    pub fn get(&self, script_id: &str) -> Option<&PreparedScript> {
        self.index.get(script_id).map(|&i| &self.scripts[i])
    }

    pub fn position(&self, script_id: &str) -> Option<usize> {
        self.index.get(script_id).copied()
    }
}

/// Dedups, drops too-small and token-poor scripts, then builds TF-IDF vectors over
/// the survivors. The vocabulary is built sequentially; everything else runs in parallel.
pub fn prepare(data: &CorpusData, config: &AnalysisConfig) -> Result<PreparedCorpus> {
    let manifest = dedup_scripts(&data.manifest);
    let sized: Vec<&ScriptRecord> = manifest.scripts.iter().filter(|s| !s.too_small()).collect();
    let excluded_too_small = manifest.scripts.len() - sized.len();

    let tokenized: Vec<(TokenBag, bool)> = sized
        .par_iter()
        .map(|s| {
            let content = data.content(&s.id);
            (
                tokenize(content).with_script_id(s.id.clone()),
                external_ref_scan(content),
            )
        })
        .collect();

    let mut records = Vec::new();
    let mut bags = Vec::new();
    let mut ext = Vec::new();
    for (record, (bag, has_ext)) in sized.into_iter().zip(tokenized) {
        if bag.total_terms as usize >= config.min_tokens && !bag.is_empty() {
            records.push(record.clone());
            bags.push(bag);
            ext.push(has_ext);
        }
    }
    let excluded_few_tokens = manifest.scripts.len() - excluded_too_small - records.len();

    let (stats, vectors) = if bags.is_empty() {
        (None, Vec::new())
    } else {
        let (s, v) = vectorize_all(&bags)?;
        (Some(s), v)
    };

    let scripts: Vec<PreparedScript> = records
        .into_iter()
        .zip(bags)
        .zip(vectors)
        .zip(ext)
        .map(|(((record, bag), vector), has_external_refs)| PreparedScript {
            record,
            bag,
            vector,
            has_external_refs,
        })
        .collect();
    let index = scripts
        .iter()
        .enumerate()
        .map(|(i, s)| (s.record.id.clone(), i))
        .collect();
    Ok(PreparedCorpus {
        manifest,
        stats,
        scripts,
        excluded_too_small,
        excluded_few_tokens,
        index,
    })
}
