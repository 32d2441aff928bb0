//! Sensitive entity detection over the query and retrieved chunks.
//!
//! Detectors are pluggable behind [`EntityDetector`]. The built-in
//! [`RuleDetector`] combines regexes (dates, money, statute references),
//! casing patterns (organization suffixes, honorifics) and a gazetteer.
//! [`NerServiceDetector`] calls an external span-labelling service.
//! Detector errors always propagate: callers must not anonymize text whose
//! detection failed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{LazyLock, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dates;
use crate::gazetteer;
use crate::text::{char_to_byte, find_token_bounded, normalize_surface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Person,
    Organization,
    Location,
    Date,
    Money,
    LawReference,
    Other,
}

impl EntityType {
    pub const ALL: [EntityType; 7] = [
        EntityType::Person,
        EntityType::Organization,
        EntityType::Location,
        EntityType::Date,
        EntityType::Money,
        EntityType::LawReference,
        EntityType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Organization => "organization",
            EntityType::Location => "location",
            EntityType::Date => "date",
            EntityType::Money => "money",
            EntityType::LawReference => "law_reference",
            EntityType::Other => "other",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = DetectionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| DetectionError::UnknownType(s.to_string()))
    }
}

/// Where a span was found.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanSource {
    Query,
    Chunk { doc_id: String, chunk_id: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub surface: String,
    pub entity_type: EntityType,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
    pub source: SpanSource,
}

impl EntitySpan {
    pub fn key(&self) -> EntityKey {
        EntityKey::new(&self.surface, self.entity_type)
    }

    fn overlaps(&self, other: &EntitySpan) -> bool {
        self.source == other.source && self.start < other.end && other.start < self.end
    }
}

/// Identity of a logical entity: normalized surface plus type.
/// Renders as `type:normalized surface`, e.g. `organization:acme corp`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityKey {
    pub entity_type: EntityType,
    pub surface: String,
}

impl EntityKey {
    pub fn new(surface: &str, entity_type: EntityType) -> Self {
        Self { entity_type, surface: normalize_surface(surface) }
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.entity_type, self.surface)
    }
}

impl FromStr for EntityKey {
    type Err = DetectionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ty, surface) = s.split_once(':').ok_or_else(|| DetectionError::MalformedKey(s.to_string()))?;
        let surface = normalize_surface(surface);
        if surface.is_empty() {
            return Err(DetectionError::MalformedKey(s.to_string()));
        }
        Ok(Self { entity_type: ty.parse()?, surface })
    }
}

impl Serialize for EntityKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("detector unreachable: {0}")]
    Unreachable(String),
    #[error("detector returned malformed output: {0}")]
    Malformed(String),
    #[error("unknown entity type {0:?}")]
    UnknownType(String),
    #[error("malformed entity key {0:?}")]
    MalformedKey(String),
}

/// A typed byte range produced by a detector, before source tagging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawSpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

pub trait EntityDetector: Send + Sync {
    fn find(&self, text: &str) -> Result<Vec<RawSpan>, DetectionError>;
}

impl<T: EntityDetector + ?Sized> EntityDetector for std::sync::Arc<T> {
    fn find(&self, text: &str) -> Result<Vec<RawSpan>, DetectionError> {
        (**self).find(text)
    }
}

/// Runs `detector` over `text`, tags spans with `source`, merges overlaps and
/// returns them sorted by start.
pub fn detect(text: &str, source: &SpanSource, detector: &dyn EntityDetector) -> Result<Vec<EntitySpan>, DetectionError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut spans = Vec::new();
    for raw in detector.find(text)? {
        let valid = raw.start < raw.end
            && raw.end <= text.len()
            && text.is_char_boundary(raw.start)
            && text.is_char_boundary(raw.end);
        if !valid {
            return Err(DetectionError::Malformed(format!("span {}..{} outside text", raw.start, raw.end)));
        }
        let surface = &text[raw.start..raw.end];
        // trim whitespace the detector may have included
        let lead = surface.len() - surface.trim_start().len();
        let trail = surface.len() - surface.trim_end().len();
        if lead + trail >= surface.len() {
            continue;
        }
        let (start, end) = (raw.start + lead, raw.end - trail);
        spans.push(EntitySpan {
            surface: text[start..end].to_string(),
            entity_type: raw.entity_type,
            start,
            end,
            source: source.clone(),
        });
    }
    Ok(merge_spans(spans))
}

/// Resolves overlapping spans within each source: the longest span wins and
/// equal-length overlaps keep the earlier start. Output is sorted by
/// (source, start).
pub fn merge_spans(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for s in spans {
        if !kept.iter().any(|k| k.overlaps(&s)) {
            kept.push(s);
        }
    }
    kept.sort_by(|a, b| a.source.cmp(&b.source).then(a.start.cmp(&b.start)));
    kept
}

/// The union of entities over the query and all chunks, keyed by identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntityTotal {
    entities: BTreeMap<EntityKey, Vec<EntitySpan>>,
}

impl EntityTotal {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &EntityKey> {
        self.entities.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityKey, &[EntitySpan])> {
        self.entities.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn spans(&self, key: &EntityKey) -> &[EntitySpan] {
        self.entities.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, key: &EntityKey) -> bool {
        self.entities.contains_key(key)
    }

    /// The surface used when restoring this entity: its first mention.
    pub fn original_surface(&self, key: &EntityKey) -> Option<&str> {
        self.entities.get(key).and_then(|v| v.first()).map(|s| s.surface.as_str())
    }

    /// Every distinct surface form of every entity.
    pub fn surfaces(&self) -> Vec<String> {
        let mut out: Vec<String> = self.entities.values().flatten().map(|s| s.surface.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn all_spans(&self) -> impl Iterator<Item = &EntitySpan> {
        self.entities.values().flatten()
    }
}

/// Unions query spans and per-chunk spans, deduplicating by [`EntityKey`].
/// Each key keeps all of its spans, query first, then chunks in order.
pub fn collect_total<'a>(spans: impl IntoIterator<Item = &'a EntitySpan>) -> EntityTotal {
    let mut entities: BTreeMap<EntityKey, Vec<EntitySpan>> = BTreeMap::new();
    for s in spans {
        let list = entities.entry(s.key()).or_default();
        if !list.contains(s) {
            list.push(s.clone());
        }
    }
    for list in entities.values_mut() {
        list.sort_by(|a, b| a.source.cmp(&b.source).then(a.start.cmp(&b.start)));
    }
    EntityTotal { entities }
}

static MONEY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?:(?:US\$|\$|€|£)\s?\d{1,3}(?:,\d{3})*(?:\.\d{2})?(?:\s(?:million|billion|thousand))?|\b(?:USD|EUR|GBP)\s?\d{1,3}(?:,\d{3})*(?:\.\d{2})?(?:\s(?:million|billion|thousand))?|\b\d{1,3}(?:,\d{3})+(?:\.\d{2})?\s(?:dollars|euros|pounds)\b)",
    )
    .expect("money regex")
});

static LAW_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b\d+\s+U\.S\.C\.\s*(?:§+\s*)?\d+[a-z]?\b|\b(?:[A-Z][A-Za-z]+\s+){1,6}Act(?:\s+of\s+\d{4})?\b")
        .expect("law regex")
});

static ORG_RE: LazyLock<Regex> = LazyLock::new(|| {
    // each suffix as listed or in capitals
    let suffixes = gazetteer::ORG_SUFFIXES
        .iter()
        .flat_map(|s| [s.to_string(), s.to_uppercase()])
        .map(|s| regex::escape(&s))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(
        r"\b[A-Z][A-Za-z0-9&'\-]*(?:\s+(?:&\s+)?[A-Z][A-Za-z0-9&'\-]*)*,?\s+(?:{suffixes})(?:[^A-Za-z0-9]|$)"
    ))
    .expect("org regex")
});

static PERSON_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:Mr|Mrs|Ms|Dr|Prof)\.?\s+([A-Z][a-z]+(?:\s+[A-Z]\.)?(?:\s+[A-Z][a-z]+)?)").expect("person regex")
});

/// Capitalized words that begin sentences or name contract roles; stripped
/// from the front of organization matches.
const LEADING_NOISE: &[&str] = &[
    "The", "This", "That", "Between", "And", "By", "Each", "Either", "Neither", "Such", "Any", "All", "Whereas", "If",
    "In", "On", "Upon", "Under", "Licensee", "Licensor", "Buyer", "Seller", "Supplier", "Distributor", "Customer",
    "Company", "Party", "Agreement", "Is", "Are", "Was", "Were", "Does", "Do", "Did", "Will", "Shall", "Can", "May",
    "Must", "Should", "Has", "Have", "What", "When", "Where", "Who", "Which", "Why", "How", "For", "With", "From", "To",
    "At", "Against", "Summarize", "List", "Compare", "Whether",
];

/// Rule and gazetteer detector.
#[derive(Debug, Clone)]
pub struct RuleDetector {
    gazetteer: Vec<(String, EntityType)>,
    builtin_locations: bool,
    patterns: bool,
}

impl Default for RuleDetector {
    fn default() -> Self {
        Self { gazetteer: Vec::new(), builtin_locations: true, patterns: true }
    }
}

impl RuleDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Detector that only matches the given gazetteer entries.
    pub fn gazetteer_only(entries: impl IntoIterator<Item = (String, EntityType)>) -> Self {
        Self { gazetteer: entries.into_iter().collect(), builtin_locations: false, patterns: false }
    }

    pub fn with_entries(mut self, entries: impl IntoIterator<Item = (String, EntityType)>) -> Self {
        self.gazetteer.extend(entries);
        self
    }

    fn org_spans(text: &str, out: &mut Vec<RawSpan>) {
        for m in ORG_RE.find_iter(text) {
            let mut start = m.start();
            let mut end = m.end();
            // the regex consumes one trailing delimiter char
            let matched = m.as_str();
            if let Some(last) = matched.chars().last() {
                if !last.is_alphanumeric() && last != '.' {
                    end -= last.len_utf8();
                } else if last == '.' && !gazetteer::ORG_SUFFIXES.iter().any(|s| s.ends_with('.') && matched.ends_with(s)) {
                    end -= 1;
                }
            }
            loop {
                let word_end = text[start..end].find(char::is_whitespace).map(|i| start + i);
                match word_end {
                    Some(we) if LEADING_NOISE.contains(&&text[start..we]) => {
                        start = we + text[we..].len() - text[we..].trim_start().len();
                    }
                    _ => break,
                }
            }
            let name = text[start..end].trim_end_matches(',');
            let suffix_only = gazetteer::ORG_SUFFIXES.iter().any(|s| s == &name);
            if !suffix_only && !name.is_empty() {
                out.push(RawSpan { start, end: start + name.len(), entity_type: EntityType::Organization });
            }
        }
    }
}

impl EntityDetector for RuleDetector {
    fn find(&self, text: &str) -> Result<Vec<RawSpan>, DetectionError> {
        let mut out = Vec::new();
        for (surface, ty) in &self.gazetteer {
            for (start, end) in find_token_bounded(text, surface) {
                out.push(RawSpan { start, end, entity_type: *ty });
            }
        }
        if self.builtin_locations {
            for loc in gazetteer::LOCATIONS {
                let mut from = 0;
                while let Some(pos) = text[from..].find(loc) {
                    let start = from + pos;
                    let end = start + loc.len();
                    if crate::text::is_token_bounded(text, start, end) {
                        out.push(RawSpan { start, end, entity_type: EntityType::Location });
                    }
                    from = end;
                }
            }
        }
        if self.patterns {
            for m in dates::find_dates(text) {
                out.push(RawSpan { start: m.start, end: m.end, entity_type: EntityType::Date });
            }
            for m in MONEY_RE.find_iter(text) {
                out.push(RawSpan { start: m.start(), end: m.end(), entity_type: EntityType::Money });
            }
            for m in LAW_RE.find_iter(text) {
                out.push(RawSpan { start: m.start(), end: m.end(), entity_type: EntityType::LawReference });
            }
            Self::org_spans(text, &mut out);
            for c in PERSON_RE.captures_iter(text) {
                let name = c.get(1).expect("person group");
                out.push(RawSpan { start: name.start(), end: name.end(), entity_type: EntityType::Person });
            }
        }
        Ok(out)
    }
}

/// Client for an external span-labelling service.
///
/// Request: `POST {url}` with `{"text": ..., "labels": [...]}`.
/// Response: `[{"text", "label", "start", "end", "score"}]` with character
/// offsets.
pub struct NerServiceDetector {
    url: String,
    labels: Vec<(String, EntityType)>,
    threshold: f64,
    timeout: Duration,
    http: OnceLock<reqwest::blocking::Client>,
}

pub const DEFAULT_NER_THRESHOLD: f64 = 0.5;

#[derive(Serialize)]
struct NerRequest<'a> {
    text: &'a str,
    labels: Vec<&'a str>,
}

#[derive(Deserialize)]
struct NerHit {
    text: String,
    label: String,
    start: usize,
    end: usize,
    score: f64,
}

impl NerServiceDetector {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            labels: vec![
                ("person".into(), EntityType::Person),
                ("organization".into(), EntityType::Organization),
                ("company".into(), EntityType::Organization),
                ("location".into(), EntityType::Location),
                ("date".into(), EntityType::Date),
                ("money".into(), EntityType::Money),
                ("law".into(), EntityType::LawReference),
            ],
            threshold: DEFAULT_NER_THRESHOLD,
            timeout: Duration::from_secs(30),
            http: OnceLock::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<(String, EntityType)>) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn http(&self) -> Result<&reqwest::blocking::Client, DetectionError> {
        if let Some(c) = self.http.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| DetectionError::Unreachable(e.to_string()))?;
        Ok(self.http.get_or_init(|| c))
    }
}

impl EntityDetector for NerServiceDetector {
    fn find(&self, text: &str) -> Result<Vec<RawSpan>, DetectionError> {
        let body = NerRequest { text, labels: self.labels.iter().map(|(l, _)| l.as_str()).collect() };
        let resp = self
            .http()?
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| DetectionError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(DetectionError::Unreachable(format!("status {}", resp.status())));
        }
        let hits: Vec<NerHit> = resp.json().map_err(|e| DetectionError::Malformed(e.to_string()))?;
        let mut out = Vec::new();
        for hit in hits {
            if hit.score < self.threshold {
                continue;
            }
            let entity_type = self
                .labels
                .iter()
                .find(|(l, _)| l.eq_ignore_ascii_case(&hit.label))
                .map_or(EntityType::Other, |(_, t)| *t);
            let start = char_to_byte(text, hit.start);
            let end = char_to_byte(text, hit.end);
            if start >= end || text[start..end] != hit.text {
                return Err(DetectionError::Malformed(format!(
                    "span {}..{} does not match reported text",
                    hit.start, hit.end
                )));
            }
            out.push(RawSpan { start, end, entity_type });
        }
        Ok(out)
    }
}
