//! Text normalization and TF-IDF cosine scoring for matching CWE descriptions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::cwe_db::{id_number, CweEntry, Db};

const STOPWORDS: &str = include_str!("../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

fn stem(word: &str) -> String {
    let mut cur = word.to_string();
    // iterate to a fixpoint so normalized output is stable under re-normalization
    for _ in 0..8 {
        let next = stemmer().stem(&cur).into_owned();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Lowercases, strips punctuation, drops stopwords and stems.
pub fn normalize(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap_or(c) } else { ' ' })
        .collect();
    let stop = stopwords();
    lowered
        .split_whitespace()
        .filter(|w| !stop.contains(w))
        .map(stem)
        .filter(|s| !s.is_empty() && !stop.contains(s.as_str()))
        .collect()
}

/// Document frequencies over a corpus of token lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    docs: usize,
    df: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut stats = CorpusStats::default();
        for doc in corpus {
            stats.docs += 1;
            for term in doc.iter().collect::<BTreeSet<_>>() {
                *stats.df.entry(term.clone()).or_default() += 1;
            }
        }
        stats
    }

    pub fn documents(&self) -> usize {
        self.docs
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency, always ≥ 1.
    pub fn idf(&self, term: &str) -> f64 {
        ((self.docs as f64 + 1.0) / (self.df(term) as f64 + 1.0)).ln() + 1.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextVector {
    weights: BTreeMap<String, f64>,
    norm: f64,
}

impl TextVector {
    pub fn from_weights(weights: BTreeMap<String, f64>) -> Self {
        let weights: BTreeMap<String, f64> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
        TextVector { weights, norm }
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Raw term frequency times smoothed idf.
pub fn vectorize(tokens: &[String], stats: &CorpusStats) -> TextVector {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.clone()).or_default() += 1.0;
    }
    let weights = tf.into_iter().map(|(t, f)| {
        let w = f * stats.idf(&t);
        (t, w)
    });
    TextVector::from_weights(weights.collect())
}

pub fn cosine_sim(a: &TextVector, b: &TextVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.weights.len() <= b.weights.len() { (a, b) } else { (b, a) };
    let dot: f64 = small.weights.iter().filter_map(|(t, w)| large.weights.get(t).map(|v| w * v)).sum();
    if dot <= 0.0 {
        return 0.0;
    }
    (dot / (a.norm * b.norm)).min(1.0)
}

/// Pluggable scorer: one query against a set of documents.
pub trait TextScorer {
    fn score_all(&self, query: &str, documents: &[&str]) -> Vec<f64>;
}

/// TF-IDF over the documents plus the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfIdfScorer;

impl TextScorer for TfIdfScorer {
    fn score_all(&self, query: &str, documents: &[&str]) -> Vec<f64> {
        let doc_tokens: Vec<Vec<String>> = documents.iter().map(|d| normalize(d)).collect();
        let query_tokens = normalize(query);
        let stats = CorpusStats::build(doc_tokens.iter().map(Vec::as_slice).chain(std::iter::once(query_tokens.as_slice())));
        let q = vectorize(&query_tokens, &stats);
        doc_tokens.iter().map(|d| cosine_sim(&q, &vectorize(d, &stats))).collect()
    }
}

/// Best-scoring entry under the default scorer.
pub fn best_match<'d>(desc: &str, db: &'d Db) -> Option<(&'d CweEntry, f64)> {
    best_match_with(&TfIdfScorer, desc, db)
}

/// Highest score wins; ties go to the lower numeric CWE id.
pub fn best_match_with<'d>(scorer: &dyn TextScorer, desc: &str, db: &'d Db) -> Option<(&'d CweEntry, f64)> {
    let docs: Vec<&str> = db.entries().iter().map(|e| e.description.as_str()).collect();
    let scores = scorer.score_all(desc, &docs);
    db.entries().iter().zip(scores).reduce(|best, cur| {
        let better = cur.1 > best.1 || (cur.1 == best.1 && id_number(&cur.0.cwe_id) < id_number(&best.0.cwe_id));
        if better {
            cur
        } else {
            best
        }
    })
}

/// Ranked scores for every entry, best first.
pub fn rank(desc: &str, db: &Db) -> Vec<(String, f64)> {
    let docs: Vec<&str> = db.entries().iter().map(|e| e.description.as_str()).collect();
    let mut ranked: Vec<(String, f64)> =
        db.entries().iter().map(|e| e.cwe_id.clone()).zip(TfIdfScorer.score_all(desc, &docs)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(id_number(&a.0).cmp(&id_number(&b.0))));
    ranked
}

fn trigrams(name: &str) -> BTreeSet<String> {
    let padded: Vec<char> = format!("  {}  ", name.to_lowercase().replace('_', " ")).chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Dice coefficient over character trigrams; used to bind identifiers.
pub fn identifier_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (trigrams(a), trigrams(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let shared = ta.intersection(&tb).count();
    2.0 * shared as f64 / (ta.len() + tb.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalizes_example() {
        assert_eq!(normalize("Weak Cryptography for Passwords"), v(&["weak", "cryptographi", "password"]));
        assert!(normalize("").is_empty());
        assert_eq!(normalize("Inadequate Encryption Strength (Weak key length)").len(), 6);
    }

    #[test]
    fn normalize_is_idempotent_on_output() {
        let once = normalize("Concurrent Execution using Shared Resource with Improper Synchronization ('Race Condition')");
        assert_eq!(normalize(&once.join(" ")), once);
    }

    #[test]
    fn empty_vector_has_zero_norm() {
        let stats = CorpusStats::build([v(&["a"]).as_slice()]);
        let z = vectorize(&[], &stats);
        assert_eq!(z.norm(), 0.0);
        assert_eq!(cosine_sim(&z, &z), 0.0);
    }

    #[test]
    fn unique_terms_have_positive_weights() {
        let doc = v(&["crypto", "key"]);
        let stats = CorpusStats::build([doc.as_slice(), v(&["bus"]).as_slice()]);
        assert!(vectorize(&doc, &stats).weights().values().all(|w| *w > 0.0));
    }

    #[test]
    fn self_and_disjoint() {
        let a = v(&["crypto", "key"]);
        let b = v(&["bus", "lock"]);
        let stats = CorpusStats::build([a.as_slice(), b.as_slice()]);
        let (va, vb) = (vectorize(&a, &stats), vectorize(&b, &stats));
        assert!((cosine_sim(&va, &va) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_sim(&va, &vb), 0.0);
    }

    #[test]
    fn identifier_similarity_prefers_close_names() {
        assert!(identifier_similarity("wb_addr_i", "wb_adr_i") > identifier_similarity("wb_addr_i", "key_i"));
        assert_eq!(identifier_similarity("clk", "clk"), 1.0);
    }
}
