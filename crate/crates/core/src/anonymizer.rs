//! Outbound payload construction and the leak guard.
//!
//! Anonymization runs in three passes: detected spans are replaced right to
//! left with the session's chosen surrogate, a residual sweep replaces any
//! remaining token-bounded occurrence of an original surface, and a final
//! leak scan must come back empty before a certified payload is returned.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::detection::{EntityKey, EntityTotal, SpanSource};
use crate::mapping::{MappingError, SessionMapping};
use crate::text::{find_token_bounded, normalize_surface, ByteRange};

#[derive(Debug, Error, PartialEq)]
pub enum AnonymizeError {
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("span {start}..{end} does not match the text it was detected on")]
    SpanMismatch { start: usize, end: usize },
    #[error("leak guard found {hits} original entity occurrence(s) in the outbound payload")]
    LeakGuard { hits: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PayloadChunk {
    pub doc_ref: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub entity_key: EntityKey,
    pub chosen_surrogate: String,
    pub replacement_count: usize,
    /// Spans the detector reported for this entity in the payload texts.
    pub detected_count: usize,
}

/// Proof that a payload passed the leak scan; bound to the payload contents.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LeakCertificate([u8; 32]);

/// The anonymized query and chunks for one request. Constructed only by
/// [`anonymize`], which certifies it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnonymizedPayload {
    session_id: String,
    query_text: String,
    chunks: Vec<PayloadChunk>,
    manifest: Vec<ManifestEntry>,
    #[serde(skip)]
    certificate: LeakCertificate,
}

fn content_digest(session_id: &str, query: &str, chunks: &[PayloadChunk]) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in [session_id, query] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    for c in chunks {
        for part in [&c.doc_ref, &c.text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
    }
    h.finalize().into()
}

impl AnonymizedPayload {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }
    pub fn query_text(&self) -> &str {
        &self.query_text
    }
    pub fn chunks(&self) -> &[PayloadChunk] {
        &self.chunks
    }
    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    /// True while the contents still match the certificate issued at
    /// construction.
    pub fn is_certified(&self) -> bool {
        self.certificate.0 == content_digest(&self.session_id, &self.query_text, &self.chunks)
    }

    /// Every outbound text: the query, then chunk texts in order.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.query_text.as_str()).chain(self.chunks.iter().map(|c| c.text.as_str()))
    }

    #[cfg(test)]
    pub(crate) fn corrupt_chunk(&mut self, index: usize, text: &str) {
        self.chunks[index].text = text.to_string();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadLocation {
    Query,
    Chunk(usize),
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakHit {
    pub surface: String,
    pub location: PayloadLocation,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakReport {
    pub hits: Vec<LeakHit>,
}

impl LeakReport {
    pub fn is_clean(&self) -> bool {
        self.hits.is_empty()
    }
}

fn scan_into(text: &str, originals: &[String], location: PayloadLocation, hits: &mut Vec<LeakHit>) {
    for o in originals {
        for (start, end) in find_token_bounded(text, o) {
            hits.push(LeakHit { surface: o.clone(), location: location.clone(), start, end });
        }
    }
}

/// Scans a payload for token-bounded, case-insensitive occurrences of any
/// original surface.
pub fn leak_scan(payload: &AnonymizedPayload, originals: &[String]) -> LeakReport {
    let mut hits = Vec::new();
    scan_into(&payload.query_text, originals, PayloadLocation::Query, &mut hits);
    for (i, c) in payload.chunks.iter().enumerate() {
        scan_into(&c.text, originals, PayloadLocation::Chunk(i), &mut hits);
    }
    LeakReport { hits }
}

/// Scans arbitrary text, e.g. a rendered prompt.
pub fn leak_scan_text(text: &str, originals: &[String]) -> LeakReport {
    let mut hits = Vec::new();
    scan_into(text, originals, PayloadLocation::Text, &mut hits);
    LeakReport { hits }
}

/// Every surface form that must never leave the premises: each detected
/// surface plus each entity's normalized form.
pub fn sensitive_surfaces(entities: &EntityTotal) -> Vec<String> {
    let mut out = entities.surfaces();
    out.extend(entities.keys().map(|k| k.surface.clone()));
    out.sort_by_key(|s| normalize_surface(s));
    out.dedup_by(|a, b| normalize_surface(a) == normalize_surface(b));
    out
}

/// A text being rewritten, tracking which byte ranges already hold
/// surrogates so the sweep never rewrites inside them.
struct Rewrite {
    text: String,
    protected: Vec<ByteRange>,
}

impl Rewrite {
    /// Replaces the given non-overlapping ranges (any order).
    fn apply(&mut self, mut edits: Vec<(ByteRange, String)>) {
        edits.sort_by_key(|((s, _), _)| std::cmp::Reverse(*s));
        for ((start, end), replacement) in edits {
            let delta = replacement.len() as isize - (end - start) as isize;
            self.text.replace_range(start..end, &replacement);
            for r in &mut self.protected {
                if r.0 >= end {
                    r.0 = (r.0 as isize + delta) as usize;
                    r.1 = (r.1 as isize + delta) as usize;
                }
            }
            self.protected.push((start, start + replacement.len()));
        }
    }

    fn is_free(&self, (s, e): ByteRange) -> bool {
        self.protected.iter().all(|&(ps, pe)| e <= ps || s >= pe)
    }
}

/// Builds the leak-certified payload for `query` and `chunks`.
///
/// `entities` must have been detected on exactly these texts; the chunk
/// spans are matched by `(doc_id, chunk_id)`.
pub fn anonymize(
    query: &str,
    chunks: &[Chunk],
    entities: &EntityTotal,
    session: &SessionMapping,
) -> Result<AnonymizedPayload, AnonymizeError> {
    let forward = session.forward()?;
    let mut counts: BTreeMap<EntityKey, (usize, usize)> = BTreeMap::new();

    let sources: Vec<(SpanSource, &str)> = std::iter::once((SpanSource::Query, query))
        .chain(chunks.iter().map(|c| {
            (SpanSource::Chunk { doc_id: c.doc_id.clone(), chunk_id: c.chunk_id }, c.text.as_str())
        }))
        .collect();

    // pass 1: detected spans
    let mut rewrites = Vec::with_capacity(sources.len());
    for (source, text) in &sources {
        let mut edits = Vec::new();
        for (key, spans) in entities.iter() {
            let surrogate = forward.get(key).ok_or_else(|| MappingError::UnknownEntity(key.to_string()))?;
            for span in spans.iter().filter(|s| &s.source == source) {
                if text.get(span.start..span.end) != Some(span.surface.as_str()) {
                    return Err(AnonymizeError::SpanMismatch { start: span.start, end: span.end });
                }
                edits.push(((span.start, span.end), surrogate.clone()));
                let c = counts.entry(key.clone()).or_default();
                c.0 += 1;
                c.1 += 1;
            }
        }
        let mut rw = Rewrite { text: text.to_string(), protected: Vec::new() };
        rw.apply(edits);
        rewrites.push(rw);
    }

    // pass 2: residual sweep, longest surface first
    let mut needles: Vec<(String, &EntityKey)> = Vec::new();
    for (key, spans) in entities.iter() {
        let mut forms: Vec<String> = spans.iter().map(|s| s.surface.clone()).collect();
        forms.push(key.surface.clone());
        forms.sort();
        forms.dedup_by(|a, b| normalize_surface(a) == normalize_surface(b));
        needles.extend(forms.into_iter().map(|f| (f, key)));
    }
    needles.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    for rw in &mut rewrites {
        for (needle, key) in &needles {
            let hits: Vec<ByteRange> = find_token_bounded(&rw.text, needle).into_iter().filter(|&r| rw.is_free(r)).collect();
            if hits.is_empty() {
                continue;
            }
            counts.entry((*key).clone()).or_default().0 += hits.len();
            let surrogate = &forward[*key];
            rw.apply(hits.into_iter().map(|r| (r, surrogate.clone())).collect());
        }
    }

    // opaque document labels in order of first appearance
    let mut labels: BTreeMap<&str, String> = BTreeMap::new();
    let mut payload_chunks = Vec::with_capacity(chunks.len());
    for (chunk, rw) in chunks.iter().zip(rewrites.iter().skip(1)) {
        let next = labels.len() + 1;
        let label = labels.entry(chunk.doc_id.as_str()).or_insert_with(|| format!("DOC-{next}")).clone();
        payload_chunks.push(PayloadChunk { doc_ref: label, text: rw.text.clone() });
    }
    let query_text = rewrites[0].text.clone();

    let manifest = counts
        .into_iter()
        .map(|(key, (replacement_count, detected_count))| ManifestEntry {
            chosen_surrogate: forward[&key].clone(),
            entity_key: key,
            replacement_count,
            detected_count,
        })
        .collect();

    let session_id = session.session_id().to_string();
    let certificate = LeakCertificate(content_digest(&session_id, &query_text, &payload_chunks));
    let payload = AnonymizedPayload { session_id, query_text, chunks: payload_chunks, manifest, certificate };

    // pass 3: leak guard
    let report = leak_scan(&payload, &sensitive_surfaces(entities));
    if !report.is_clean() {
        tracing::error!(hits = report.hits.len(), "leak guard rejected payload");
        return Err(AnonymizeError::LeakGuard { hits: report.hits.len() });
    }
    Ok(payload)
}
