//! Script tokenization and TF-IDF keyword vectors.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// ECMAScript 2015 keywords plus the literal names. Dropped before counting.
pub const RESERVED_WORDS: &[&str] = &[
    "break",
    "case",
    "catch",
    "class",
    "const",
    "continue",
    "debugger",
    "default",
    "delete",
    "do",
    "else",
    "export",
    "extends",
    "finally",
    "for",
    "function",
    "if",
    "import",
    "in",
    "instanceof",
    "let",
    "new",
    "return",
    "static",
    "super",
    "switch",
    "this",
    "throw",
    "try",
    "typeof",
    "var",
    "void",
    "while",
    "with",
    "yield",
    "true",
    "false",
    "null",
    "undefined",
];

pub fn is_reserved(term: &str) -> bool {
    RESERVED_WORDS.contains(&term)
}

#[inline]
pub(crate) fn is_token_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

/// Term counts for one script.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenBag {
    pub script_id: String,
    pub counts: BTreeMap<String, u32>,
    pub total_terms: u32,
}

impl TokenBag {
    pub fn with_script_id(mut self, id: impl Into<String>) -> Self {
        self.script_id = id.into();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.total_terms == 0
    }
}

/// Splits `content` into maximal `[A-Za-z0-9_$]` runs, keeps those with at least
/// one ASCII letter, drops reserved words and counts the rest. Case is preserved.
/// String literals and comments are tokenized like any other text.
pub fn tokenize(content: &[u8]) -> TokenBag {
    let text = String::from_utf8_lossy(content);
    let bytes = text.as_bytes();
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut total = 0u32;
    let mut i = 0;
    while i < bytes.len() {
        if !is_token_byte(bytes[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut has_letter = false;
        while i < bytes.len() && is_token_byte(bytes[i]) {
            has_letter |= bytes[i].is_ascii_alphabetic();
            i += 1;
        }
        if !has_letter {
            continue;
        }
        // token bytes are ASCII, so this slice is valid UTF-8
        let term = &text[start..i];
        if is_reserved(term) {
            continue;
        }
        match counts.get_mut(term) {
            Some(c) => *c += 1,
            None => {
                counts.insert(term.to_string(), 1);
            }
        }
        total += 1;
    }
    TokenBag {
        script_id: String::new(),
        counts,
        total_terms: total,
    }
}

/// Corpus document frequencies. Terms get dense ids in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyStats {
    n_docs: u32,
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    index: HashMap<String, u32>,
}

impl VocabularyStats {
    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn doc_freq(&self, term: &str) -> Option<u32> {
        self.index.get(term).map(|&i| self.doc_freq[i as usize])
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn doc_freq_map(&self) -> BTreeMap<&str, u32> {
        self.terms
            .iter()
            .map(String::as_str)
            .zip(self.doc_freq.iter().copied())
            .collect()
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term_id: u32) -> f64 {
        let n = f64::from(self.n_docs);
        let df = f64::from(self.doc_freq[term_id as usize]);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

pub fn build_vocabulary<'a, I>(bags: I) -> Result<VocabularyStats>
where
    I: IntoIterator<Item = &'a TokenBag>,
{
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    let mut n_docs = 0u32;
    for bag in bags {
        n_docs += 1;
        for term in bag.counts.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::InvalidArgument(
            "cannot build a vocabulary from zero documents".into(),
        ));
    }
    let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let doc_freq = df.values().copied().collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok(VocabularyStats {
        n_docs,
        terms,
        doc_freq,
        index,
    })
}

/// Sparse TF-IDF vector. Entries are `(term id, weight)` sorted by term id and
/// only comparable between vectors built from the same [`VocabularyStats`].
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordVector {
    pub script_id: String,
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl KeywordVector {
    pub fn empty(script_id: impl Into<String>) -> Self {
        KeywordVector {
            script_id: script_id.into(),
            entries: Vec::new(),
            norm: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, term_id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&term_id, |&(t, _)| t)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Weights keyed by term text.
    pub fn weights<'s>(&'s self, stats: &'s VocabularyStats) -> impl Iterator<Item = (&'s str, f64)> + 's {
        self.entries.iter().map(move |&(t, w)| (stats.term(t), w))
    }
}

/// `weight(t) = (count(t) / total_terms) * idf(t)`.
pub fn tfidf_vector(bag: &TokenBag, stats: &VocabularyStats) -> Result<KeywordVector> {
    if bag.total_terms == 0 {
        return Ok(KeywordVector::empty(bag.script_id.clone()));
    }
    let total = f64::from(bag.total_terms);
    let mut entries = Vec::with_capacity(bag.counts.len());
    for (term, &count) in &bag.counts {
        let id = stats.term_id(term).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "term {term:?} of script {:?} is missing from the vocabulary",
                bag.script_id
            ))
        })?;
        entries.push((id, f64::from(count) / total * stats.idf(id)));
    }
    // BTreeMap order is lexicographic, which is also id order
    debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    Ok(KeywordVector {
        script_id: bag.script_id.clone(),
        entries,
        norm,
    })
}

pub fn dot(u: &KeywordVector, v: &KeywordVector) -> f64 {
    let (a, b) = (&u.entries, &v.entries);
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Cosine of the angle between two keyword vectors, clamped to `[0, 1]`.
/// Zero when either vector is empty.
pub fn cosine_similarity(u: &KeywordVector, v: &KeywordVector) -> f64 {
    if u.norm == 0.0 || v.norm == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (u.norm * v.norm)).clamp(0.0, 1.0)
}

/// Writes `u`'s weights into `dense` (indexed by term id), which must be zeroed
/// and long enough. Undo with [`clear_dense`].
pub fn scatter_dense(u: &KeywordVector, dense: &mut [f64]) {
    for &(t, w) in &u.entries {
        dense[t as usize] = w;
    }
}

pub fn clear_dense(u: &KeywordVector, dense: &mut [f64]) {
    for &(t, _) in &u.entries {
        dense[t as usize] = 0.0;
    }
}

/// [`cosine_similarity`] of `u` and `v`, where `u` has been scattered into
/// `dense`. The products are summed in the same order as the sparse merge, so
/// the result is bit-identical to `cosine_similarity(u, v)`.
pub fn cosine_dense(dense: &[f64], u: &KeywordVector, v: &KeywordVector) -> f64 {
    if u.norm == 0.0 || v.norm == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(t, w) in &v.entries {
        acc += dense[t as usize] * w;
    }
    (acc / (u.norm * v.norm)).clamp(0.0, 1.0)
}

/// Builds the vocabulary over `bags` and vectorizes each bag in parallel.
pub fn vectorize_all(bags: &[TokenBag]) -> Result<(VocabularyStats, Vec<KeywordVector>)> {
    let stats = build_vocabulary(bags)?;
    let vectors = bags
        .par_iter()
        .map(|b| tfidf_vector(b, &stats))
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, vectors))
}
