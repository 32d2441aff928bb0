//! Restoring original entities in a returned answer.

use serde::Serialize;
use thiserror::Error;

use crate::detection::{detect, DetectionError, EntityDetector, EntityType, SpanSource};
use crate::mapping::{MappingError, SessionMapping};
use crate::text::{find_token_bounded, ByteRange};

#[derive(Debug, Error, PartialEq)]
pub enum DeanonymizeError {
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Restoration {
    pub surrogate_surface: String,
    pub original_surface: String,
    /// Byte offset in the anonymized answer.
    pub position: usize,
    /// Byte offset in the recovered answer.
    pub recovered_position: usize,
}

/// A detected mention that matched no session candidate; left verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unresolved {
    pub surface: String,
    pub entity_type: EntityType,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnswerPair {
    pub anonymized: String,
    pub recovered: String,
    pub restorations: Vec<Restoration>,
    pub unresolved: Vec<Unresolved>,
}

struct Hit {
    range: ByteRange,
    original: String,
}

fn overlaps(hits: &[Hit], (s, e): ByteRange) -> bool {
    hits.iter().any(|h| s < h.range.1 && h.range.0 < e)
}

/// Restores every surrogate mention in `answer`.
///
/// Stage one scans for every candidate of every set, longest first. Stage
/// two runs `detector` over the rest of the answer and resolves what it
/// finds through the reverse map; anything unresolved is reported.
pub fn deanonymize(
    answer: &str,
    session: &SessionMapping,
    detector: &dyn EntityDetector,
) -> Result<AnswerPair, DeanonymizeError> {
    let mut hits: Vec<Hit> = Vec::new();
    for (candidate, entry) in session.candidates_longest_first()? {
        let mut needles = vec![candidate];
        let bare = candidate.trim_end_matches('.');
        if bare != candidate && !bare.is_empty() {
            needles.push(bare);
        }
        for needle in needles {
            for range in find_token_bounded(answer, needle) {
                if !overlaps(&hits, range) {
                    hits.push(Hit { range, original: entry.original.clone() });
                }
            }
        }
    }

    let mut unresolved = Vec::new();
    for span in detect(answer, &SpanSource::Query, detector)? {
        let range = (span.start, span.end);
        if overlaps(&hits, range) {
            continue;
        }
        let entry = session
            .reverse_entry(&span.surface)
            .or_else(|_| session.reverse_entry(span.surface.trim_end_matches('.')));
        match entry {
            Ok(entry) => hits.push(Hit { range, original: entry.original.clone() }),
            Err(MappingError::NotFound(_)) => unresolved.push(Unresolved {
                surface: span.surface,
                entity_type: span.entity_type,
                position: span.start,
            }),
            Err(e) => return Err(e.into()),
        }
    }

    hits.sort_by_key(|h| h.range.0);
    let mut recovered = String::with_capacity(answer.len());
    let mut restorations = Vec::with_capacity(hits.len());
    let mut cursor = 0;
    for h in hits {
        let (s, e) = h.range;
        recovered.push_str(&answer[cursor..s]);
        restorations.push(Restoration {
            surrogate_surface: answer[s..e].to_string(),
            original_surface: h.original.clone(),
            position: s,
            recovered_position: recovered.len(),
        });
        recovered.push_str(&h.original);
        cursor = e;
    }
    recovered.push_str(&answer[cursor..]);

    Ok(AnswerPair { anonymized: answer.to_string(), recovered, restorations, unresolved })
}

/// Fraction of expected original surfaces present token-bounded in the
/// recovered answers, micro-averaged. 1.0 when nothing is expected.
pub fn restoration_accuracy(pairs: &[AnswerPair], expected: &[Vec<String>]) -> f64 {
    let mut total = 0usize;
    let mut present = 0usize;
    for (pair, exp) in pairs.iter().zip(expected) {
        for surface in exp {
            total += 1;
            if !find_token_bounded(&pair.recovered, surface).is_empty() {
                present += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        present as f64 / total as f64
    }
}
