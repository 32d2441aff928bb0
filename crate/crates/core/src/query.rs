//! Decomposition of a natural-language question into structured fields.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::is_valid_doc_id;
use crate::dates;
use crate::gazetteer;
use crate::provider::LocalModel;
use crate::text::{find_token_bounded, word_tokens};

pub const QUERY_PROMPT: &str = include_str!("../assets/query_fields.v1.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("question is empty")]
    EmptyQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    #[default]
    Simple,
    Complex,
    Summarization,
}

/// Structured view of a question used to filter documents and drive retrieval.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryFields {
    pub doc_ids: Vec<String>,
    pub parties: Vec<String>,
    pub metadata_fields: Vec<String>,
    pub text_search_terms: Vec<String>,
    pub query_type: QueryType,
    /// ISO-8601 dates.
    pub dates: Vec<String>,
}

/// Analysis result. `degraded` is set when a model was supplied but its
/// output could not be used and the heuristic path answered instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAnalysis {
    pub fields: QueryFields,
    pub degraded: bool,
}

pub const METADATA_FIELD_NAMES: [&str; 4] = ["dates", "parties", "governing_law", "doc_type"];

const FIELD_KEYWORDS: &[(&str, &[&str])] = &[
    ("dates", &["date", "dates", "when", "effective", "expire", "expires", "expiration", "expiry", "deadline", "renewal", "dated"]),
    ("parties", &["party", "parties", "who", "signatory", "signatories", "counterparty"]),
    ("governing_law", &["governing law", "governed", "jurisdiction"]),
    ("doc_type", &["type of agreement", "kind of agreement", "type of contract", "kind of contract"]),
];

/// Contract phrases recognised as search terms.
const LEXICON: &[&str] = &[
    "effective date",
    "expiration date",
    "renewal term",
    "notice period",
    "governing law",
    "most favored nation",
    "non-compete",
    "non-competition",
    "exclusivity",
    "non-solicitation",
    "competitive restriction",
    "non-disparagement",
    "termination for convenience",
    "early termination",
    "termination",
    "change of control",
    "anti-assignment",
    "assignment",
    "revenue sharing",
    "profit sharing",
    "price restrictions",
    "minimum commitment",
    "volume restriction",
    "intellectual property",
    "ip ownership",
    "license grant",
    "perpetual license",
    "irrevocable license",
    "source code escrow",
    "post-termination services",
    "audit rights",
    "uncapped liability",
    "cap on liability",
    "limitation of liability",
    "liquidated damages",
    "warranty duration",
    "warranty",
    "insurance",
    "covenant not to sue",
    "third party beneficiary",
    "indemnification",
    "indemnity",
    "confidentiality",
    "royalty",
    "royalties",
    "payment terms",
    "purchase price",
    "minimum purchase",
    "territory",
    "force majeure",
    "arbitration",
    "dispute resolution",
    "obligations",
    "product categories",
];

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "for", "to", "and", "or", "is", "are", "was", "were", "be", "been", "this", "that",
    "these", "those", "what", "when", "where", "who", "whom", "which", "why", "how", "does", "do", "did", "can", "could",
    "will", "would", "shall", "should", "may", "might", "must", "with", "by", "from", "at", "as", "any", "all", "under",
    "there", "their", "its", "it", "into", "about", "agreement", "contract", "please", "tell", "me", "event", "s",
];

const WH_WORDS: &[&str] = &["what", "when", "where", "who", "whom", "which", "why", "how"];

/// Capitalized words that start questions or name contract concepts rather
/// than parties.
const NON_PARTY_WORDS: &[&str] = &[
    "what", "when", "where", "who", "which", "why", "how", "does", "do", "is", "are", "can", "will", "shall", "should",
    "summarize", "summarise", "list", "describe", "explain", "the", "a", "an", "this", "that", "agreement", "contract",
    "date", "effective", "section", "clause", "party", "parties", "term", "license", "licensee", "licensor", "buyer",
    "seller", "supplier", "distributor", "customer", "company", "i", "in", "under", "per", "if",
];

static DOC_ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bdoc-[0-9a-f]{16}\b").expect("doc id regex"));
static QUOTED_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""([^"]{2,})"|\u{201C}([^\u{201D}]{2,})\u{201D}"#).expect("quote regex"));
static CAP_WORD_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z][A-Za-z0-9&\-]*\.?").expect("word regex"));

/// Classifies a question by keyword rules.
pub fn classify(question: &str) -> QueryType {
    let lower = question.to_lowercase();
    if ["summarize", "summarise", "summary", "summarization"].iter().any(|k| lower.contains(k)) {
        return QueryType::Summarization;
    }
    let tokens = word_tokens(question);
    let wh = tokens.iter().filter(|t| WH_WORDS.contains(&t.as_str())).count();
    let questions = question.matches('?').count();
    if tokens.iter().any(|t| t == "and") || lower.contains("apply to all") || wh >= 2 || questions >= 2 {
        QueryType::Complex
    } else {
        QueryType::Simple
    }
}

fn push_unique(v: &mut Vec<String>, s: String) {
    if !s.is_empty() && !v.contains(&s) {
        v.push(s);
    }
}

fn metadata_fields(question: &str) -> Vec<String> {
    let tokens = word_tokens(question);
    let lower = question.to_lowercase();
    FIELD_KEYWORDS
        .iter()
        .filter(|(_, kws)| {
            kws.iter().any(|kw| if kw.contains(' ') { lower.contains(kw) } else { tokens.iter().any(|t| t == kw) })
        })
        .map(|(f, _)| f.to_string())
        .collect()
}

fn parties(question: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run: Vec<(usize, usize)> = Vec::new();
    let flush = |run: &mut Vec<(usize, usize)>, out: &mut Vec<String>| {
        if let (Some(first), Some(last)) = (run.first(), run.last()) {
            let name = question[first.0..last.1].trim_end_matches('.').to_string();
            let last_word = question[last.0..last.1].trim_end_matches('.').to_lowercase();
            let has_suffix = gazetteer::ORG_SUFFIXES.iter().any(|s| s.trim_end_matches('.').eq_ignore_ascii_case(&last_word));
            if (run.len() >= 2 || has_suffix) && !gazetteer::is_location(&name) {
                push_unique(out, name);
            }
        }
        run.clear();
    };
    let mut prev_end = 0;
    for m in CAP_WORD_RE.find_iter(question) {
        let word = m.as_str().trim_end_matches('.');
        let capitalized = word.chars().next().is_some_and(char::is_uppercase);
        let connector = !run.is_empty() && question[prev_end..m.start()].trim().is_empty() && word == "of";
        let gap_ok = run.is_empty() || question[prev_end..m.start()].chars().all(|c| c == ' ');
        if (capitalized && !NON_PARTY_WORDS.contains(&word.to_lowercase().as_str()) || connector) && gap_ok {
            run.push((m.start(), m.end()));
        } else {
            // drop a dangling connector before flushing
            while run.last().is_some_and(|&(s, e)| &question[s..e] == "of") {
                run.pop();
            }
            flush(&mut run, &mut out);
            if capitalized && !NON_PARTY_WORDS.contains(&word.to_lowercase().as_str()) {
                run.push((m.start(), m.end()));
            }
        }
        prev_end = m.end();
    }
    while run.last().is_some_and(|&(s, e)| &question[s..e] == "of") {
        run.pop();
    }
    flush(&mut run, &mut out);
    out
}

fn search_terms(question: &str, parties: &[String], dates: &[dates::DateMatch]) -> Vec<String> {
    let mut terms = Vec::new();
    for caps in QUOTED_RE.captures_iter(question) {
        let phrase = caps.get(1).or_else(|| caps.get(2)).map_or("", |m| m.as_str());
        push_unique(&mut terms, phrase.trim().to_lowercase());
    }
    let mut hits: Vec<(usize, usize, &str)> = LEXICON
        .iter()
        .flat_map(|term| find_token_bounded(question, term).into_iter().map(move |(s, e)| (s, e, *term)))
        .collect();
    hits.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut taken: Vec<(usize, usize, &str)> = Vec::new();
    for h in hits {
        if taken.iter().all(|t| h.1 <= t.0 || h.0 >= t.1) {
            taken.push(h);
        }
    }
    taken.sort_by_key(|t| t.0);
    for (_, _, term) in taken {
        push_unique(&mut terms, term.to_string());
    }
    if terms.is_empty() {
        let mut excluded: Vec<String> = parties.iter().flat_map(|p| word_tokens(p)).collect();
        for d in dates {
            excluded.extend(word_tokens(&question[d.start..d.end]));
        }
        for t in word_tokens(question) {
            if t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()) && !excluded.contains(&t) {
                push_unique(&mut terms, t);
            }
        }
    }
    terms
}

/// Pure rule-based analysis; deterministic for identical input.
pub fn analyze_heuristic(question: &str) -> Result<QueryFields, QueryError> {
    if question.trim().is_empty() {
        return Err(QueryError::EmptyQuestion);
    }
    let found_dates = dates::find_dates(question);
    let parties = parties(question);
    let mut fields = QueryFields {
        doc_ids: DOC_ID_RE.find_iter(question).map(|m| m.as_str().to_string()).collect(),
        metadata_fields: metadata_fields(question),
        text_search_terms: search_terms(question, &parties, &found_dates),
        query_type: classify(question),
        dates: Vec::new(),
        parties,
    };
    for d in &found_dates {
        push_unique(&mut fields.dates, dates::iso(d.date));
    }
    fields.doc_ids.dedup();
    Ok(fields)
}

/// Returns the outermost `{...}` object in `raw`, tolerating code fences and
/// prose around it.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

#[derive(Deserialize)]
#[serde(default)]
#[derive(Default)]
struct RawFields {
    doc_ids: Vec<String>,
    parties: Vec<String>,
    metadata_fields: Vec<String>,
    text_search_terms: Vec<String>,
    query_type: Option<String>,
    dates: Vec<String>,
}

/// Cleans model output: validates ids and field names, normalizes dates to
/// ISO, lowercases search terms, dedupes, and defaults the query type.
fn post_process(question: &str, raw: RawFields) -> QueryFields {
    let mut f = QueryFields::default();
    for id in raw.doc_ids {
        let id = id.trim().to_string();
        if is_valid_doc_id(&id) {
            push_unique(&mut f.doc_ids, id);
        }
    }
    for p in raw.parties {
        push_unique(&mut f.parties, p.trim().to_string());
    }
    for m in raw.metadata_fields {
        let m = m.trim().to_lowercase();
        if METADATA_FIELD_NAMES.contains(&m.as_str()) {
            push_unique(&mut f.metadata_fields, m);
        }
    }
    for t in raw.text_search_terms {
        push_unique(&mut f.text_search_terms, t.trim().to_lowercase());
    }
    for d in raw.dates {
        if let Some((date, _)) = dates::parse_date(&d) {
            push_unique(&mut f.dates, dates::iso(date));
        }
    }
    let heuristic_type = classify(question);
    f.query_type = match raw.query_type.as_deref().map(str::trim) {
        _ if heuristic_type == QueryType::Summarization => QueryType::Summarization,
        Some("simple") => QueryType::Simple,
        Some("complex") => QueryType::Complex,
        Some("summarization") => QueryType::Summarization,
        _ => heuristic_type,
    };
    f
}

/// Analyzes `question`, preferring the model when one is supplied and
/// falling back to the heuristic path if the model fails.
pub fn analyze_query(question: &str, model: Option<&dyn LocalModel>) -> Result<QueryAnalysis, QueryError> {
    if question.trim().is_empty() {
        return Err(QueryError::EmptyQuestion);
    }
    let Some(model) = model else {
        return Ok(QueryAnalysis { fields: analyze_heuristic(question)?, degraded: false });
    };
    let parsed = model
        .complete(QUERY_PROMPT, question)
        .ok()
        .and_then(|raw| extract_json_object(&raw).and_then(|j| serde_json::from_str::<RawFields>(j).ok()));
    match parsed {
        Some(raw) => Ok(QueryAnalysis { fields: post_process(question, raw), degraded: false }),
        None => {
            tracing::warn!("query analysis model output unusable; using heuristics");
            Ok(QueryAnalysis { fields: analyze_heuristic(question)?, degraded: true })
        }
    }
}
