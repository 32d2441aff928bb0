//! Document selection by metadata match and BM25 chunk ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Chunk, Corpus, DocumentMetadata};
use crate::query::QueryFields;
use crate::text::word_tokens;

pub const DEFAULT_TOP_K: usize = 5;

/// Minimum Jaccard overlap of token sets for two party names to match.
pub const PARTY_MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("scorer failed: {0}")]
    Scorer(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// BM25 score of each tokenized document against the distinct query terms.
/// Collection statistics come from `docs` itself.
pub fn bm25_scores(query: &[String], docs: &[Vec<String>], params: Bm25Params) -> Vec<f64> {
    let n = docs.len();
    if n == 0 {
        return Vec::new();
    }
    let terms: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
    let avgdl = if avgdl > 0.0 { avgdl } else { 1.0 };

    let mut df: HashMap<&str, usize> = HashMap::new();
    for d in docs {
        let seen: BTreeSet<&str> = d.iter().map(String::as_str).filter(|t| terms.contains(t)).collect();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let idf: HashMap<&str, f64> = df
        .iter()
        .map(|(&t, &n_t)| (t, (1.0 + (n as f64 - n_t as f64 + 0.5) / (n_t as f64 + 0.5)).ln()))
        .collect();

    docs.iter()
        .map(|d| {
            // ordered so the float sum, and thus tie-breaking, is reproducible
            let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
            for t in d.iter().map(String::as_str).filter(|t| terms.contains(t)) {
                *tf.entry(t).or_default() += 1;
            }
            let norm = params.k1 * (1.0 - params.b + params.b * d.len() as f64 / avgdl);
            tf.iter()
                .map(|(t, &f)| {
                    let f = f as f64;
                    idf[t] * f * (params.k1 + 1.0) / (f + norm)
                })
                .sum()
        })
        .collect()
}

/// Scores candidate chunks for a set of query terms. Higher is better.
pub trait ChunkScorer: Send + Sync {
    fn score(&self, query_terms: &[String], chunks: &[&Chunk]) -> Result<Vec<f64>, RetrievalError>;
}

/// Lexical BM25 over the candidate chunk set.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bm25Scorer {
    pub params: Bm25Params,
}

impl ChunkScorer for Bm25Scorer {
    fn score(&self, query_terms: &[String], chunks: &[&Chunk]) -> Result<Vec<f64>, RetrievalError> {
        let docs: Vec<Vec<String>> = chunks.iter().map(|c| word_tokens(&c.text)).collect();
        Ok(bm25_scores(query_terms, &docs, self.params))
    }
}

/// Dense-vector scorer: cosine similarity between an embedding of the
/// query and of each chunk, clamped at zero.
pub struct EmbeddingScorer<E> {
    embed: E,
}

impl<E> EmbeddingScorer<E>
where
    E: Fn(&[&str]) -> Result<Vec<Vec<f32>>, String> + Send + Sync,
{
    pub fn new(embed: E) -> Self {
        Self { embed }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl<E> ChunkScorer for EmbeddingScorer<E>
where
    E: Fn(&[&str]) -> Result<Vec<Vec<f32>>, String> + Send + Sync,
{
    fn score(&self, query_terms: &[String], chunks: &[&Chunk]) -> Result<Vec<f64>, RetrievalError> {
        let query = query_terms.join(" ");
        let mut inputs: Vec<&str> = vec![&query];
        inputs.extend(chunks.iter().map(|c| c.text.as_str()));
        let vectors = (self.embed)(&inputs).map_err(RetrievalError::Scorer)?;
        if vectors.len() != inputs.len() {
            return Err(RetrievalError::Scorer(format!("expected {} embeddings, got {}", inputs.len(), vectors.len())));
        }
        Ok(vectors[1..].iter().map(|v| cosine(&vectors[0], v).max(0.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedChunk {
    pub chunk: Chunk,
    pub score: f64,
    pub rank: usize,
}

fn party_tokens(s: &str) -> BTreeSet<String> {
    word_tokens(s).into_iter().collect()
}

/// Case- and punctuation-insensitive party match on token-set Jaccard overlap.
pub fn parties_match(a: &str, b: &str) -> bool {
    let (ta, tb) = (party_tokens(a), party_tokens(b));
    if ta.is_empty() || tb.is_empty() {
        return false;
    }
    let inter = ta.intersection(&tb).count() as f64;
    let union = ta.union(&tb).count() as f64;
    inter / union >= PARTY_MATCH_THRESHOLD
}

fn record_matches(fields: &QueryFields, record: &DocumentMetadata) -> bool {
    fields.doc_ids.iter().any(|d| d == &record.doc_id)
        || fields.parties.iter().any(|q| record.parties.iter().any(|p| parties_match(q, p)))
        || fields.dates.iter().any(|q| record.dates.iter().any(|d| d == q))
}

/// Doc ids whose metadata matches the query fields, in index order. With no
/// doc ids, parties or dates in `fields`, every document matches.
pub fn match_documents(fields: &QueryFields, index: &[DocumentMetadata]) -> Vec<String> {
    let filterable = !(fields.doc_ids.is_empty() && fields.parties.is_empty() && fields.dates.is_empty());
    index
        .iter()
        .filter(|r| !filterable || record_matches(fields, r))
        .map(|r| r.doc_id.clone())
        .collect()
}

/// Distinct query terms: question tokens plus text search term tokens.
pub fn query_terms(question: &str, fields: &QueryFields) -> Vec<String> {
    let mut terms: BTreeSet<String> = word_tokens(question).into_iter().collect();
    for t in &fields.text_search_terms {
        terms.extend(word_tokens(t));
    }
    terms.into_iter().collect()
}

/// Top-`k` chunks of `doc_ids` by BM25.
pub fn rank_chunks(
    corpus: &Corpus,
    question: &str,
    fields: &QueryFields,
    doc_ids: &[String],
    k: usize,
) -> Result<Vec<RetrievedChunk>, RetrievalError> {
    rank_chunks_with(&Bm25Scorer::default(), corpus, question, fields, doc_ids, k)
}

/// Top-`k` chunks of `doc_ids` under `scorer`. Ties are broken by
/// `(doc_id, chunk_id)` ascending.
pub fn rank_chunks_with(
    scorer: &dyn ChunkScorer,
    corpus: &Corpus,
    question: &str,
    fields: &QueryFields,
    doc_ids: &[String],
    k: usize,
) -> Result<Vec<RetrievedChunk>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let ids: BTreeSet<&str> = doc_ids.iter().map(String::as_str).collect();
    let candidates: Vec<&Chunk> = ids.iter().flat_map(|id| corpus.chunks(id)).collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let scores = scorer.score(&query_terms(question, fields), &candidates)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| candidates[a].doc_id.cmp(&candidates[b].doc_id))
            .then_with(|| candidates[a].chunk_id.cmp(&candidates[b].chunk_id))
    });
    Ok(order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, idx)| RetrievedChunk { chunk: candidates[idx].clone(), score: scores[idx].max(0.0), rank: i + 1 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkConfig, Document};

    fn corpus(docs: &[(&str, &str, &[&str])]) -> Corpus {
        let dir = std::env::temp_dir();
        let mut c = Corpus::new(dir, ChunkConfig { size: 60, overlap: 10 }).unwrap();
        for (id, text, parties) in docs {
            let doc = Document { doc_id: id.to_string(), title: id.to_string(), text: text.to_string(), source_path: format!("{id}.txt") };
            let meta = DocumentMetadata {
                doc_id: id.to_string(),
                parties: parties.iter().map(|p| p.to_string()).collect(),
                ..Default::default()
            };
            c.insert(doc, meta).unwrap();
        }
        c
    }

    fn fields() -> QueryFields {
        QueryFields::default()
    }

    #[test]
    fn bm25_matches_hand_computation() {
        // two docs, one query term present once in doc 0 only
        let docs = vec![vec!["a".to_string(), "b".to_string()], vec!["b".to_string(), "c".to_string(), "d".to_string(), "e".to_string()]];
        let s = bm25_scores(&["a".to_string()], &docs, Bm25Params::default());
        let idf = (1.0f64 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let avgdl = 3.0;
        let expected = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / avgdl));
        assert!((s[0] - expected).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn party_match_ignores_case_and_punctuation() {
        let idx = vec![
            DocumentMetadata { doc_id: "doc-1".into(), parties: vec!["ACME CORP.".into()], ..Default::default() },
            DocumentMetadata { doc_id: "doc-2".into(), parties: vec!["Beta LLC".into()], ..Default::default() },
        ];
        let f = QueryFields { parties: vec!["Acme Corp".into()], ..fields() };
        assert_eq!(match_documents(&f, &idx), vec!["doc-1"]);
        assert!(!parties_match("Acme Inc", "Beta Inc"));
        assert!(parties_match("Acme", "Acme Corporation"));
    }

    #[test]
    fn no_filter_signal_matches_everything() {
        let idx = vec![
            DocumentMetadata { doc_id: "doc-1".into(), ..Default::default() },
            DocumentMetadata { doc_id: "doc-2".into(), ..Default::default() },
        ];
        let f = QueryFields { text_search_terms: vec!["termination".into()], ..fields() };
        assert_eq!(match_documents(&f, &idx), vec!["doc-1", "doc-2"]);
    }

    #[test]
    fn unknown_doc_id_matches_nothing() {
        let idx = vec![DocumentMetadata { doc_id: "doc-1".into(), ..Default::default() }];
        let f = QueryFields { doc_ids: vec!["unknown".into()], ..fields() };
        assert!(match_documents(&f, &idx).is_empty());
    }

    #[test]
    fn dates_match_exactly() {
        let idx = vec![
            DocumentMetadata { doc_id: "doc-1".into(), dates: vec!["2023-01-01".into()], ..Default::default() },
            DocumentMetadata { doc_id: "doc-2".into(), dates: vec!["2023-01-02".into()], ..Default::default() },
        ];
        let f = QueryFields { dates: vec!["2023-01-01".into()], ..fields() };
        assert_eq!(match_documents(&f, &idx), vec!["doc-1"]);
    }

    #[test]
    fn planted_sentence_ranks_first() {
        let c = corpus(&[
            ("doc-a", "The supplier shall deliver goods monthly. The effective date is January 1, 2023. Payment is due in thirty days.", &[]),
            ("doc-b", "This lease covers the premises at the harbor. Rent is payable quarterly in advance of each period.", &[]),
        ]);
        let ids = c.doc_ids();
        let top = rank_chunks(&c, "effective date", &fields(), &ids, 5).unwrap();
        assert!(top[0].chunk.text.contains("effective date"));
        let ranks: Vec<usize> = top.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, (1..=top.len()).collect::<Vec<_>>());
        assert!(top.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn large_k_returns_every_chunk() {
        let c = corpus(&[("doc-a", "short text", &[]), ("doc-b", "other text", &[])]);
        let all = rank_chunks(&c, "text", &fields(), &c.doc_ids(), 100).unwrap();
        assert_eq!(all.len(), c.all_chunks().count());
    }

    #[test]
    fn identical_chunks_tie_by_doc_id() {
        let c = corpus(&[("doc-b", "same words here", &[]), ("doc-a", "same words here", &[])]);
        let top = rank_chunks(&c, "words", &fields(), &c.doc_ids(), 2).unwrap();
        assert_eq!(top[0].chunk.doc_id, "doc-a");
        assert_eq!(top[0].score, top[1].score);
    }

    #[test]
    fn only_requested_docs_are_ranked_and_zero_k_is_rejected() {
        let c = corpus(&[("doc-a", "alpha", &[]), ("doc-b", "alpha", &[])]);
        let top = rank_chunks(&c, "alpha", &fields(), &["doc-b".to_string()], 5).unwrap();
        assert!(top.iter().all(|r| r.chunk.doc_id == "doc-b"));
        assert!(rank_chunks(&c, "alpha", &fields(), &[], 5).unwrap().is_empty());
        assert_eq!(rank_chunks(&c, "alpha", &fields(), &c.doc_ids(), 0), Err(RetrievalError::InvalidK));
    }

    #[test]
    fn embedding_scorer_plugs_in() {
        let c = corpus(&[("doc-a", "alpha beta", &[]), ("doc-b", "gamma", &[])]);
        // toy embedding: [has alpha, has gamma]
        let scorer = EmbeddingScorer::new(|xs: &[&str]| {
            Ok(xs.iter().map(|x| vec![f32::from(u8::from(x.contains("alpha"))), f32::from(u8::from(x.contains("gamma")))]).collect())
        });
        let top = rank_chunks_with(&scorer, &c, "gamma", &fields(), &c.doc_ids(), 2).unwrap();
        assert_eq!(top[0].chunk.doc_id, "doc-b");
        assert_eq!(top[1].score, 0.0);
    }
}
