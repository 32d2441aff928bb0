//! Per-session gateway state and the envelope returned to local callers.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use shroud_core::anonymizer::AnonymizedPayload;
use shroud_core::deanonymizer::AnswerPair;
use shroud_core::detection::{EntityKey, EntitySpan, EntityType};
use shroud_core::mapping::{Ephemeral, SessionMapping};
use shroud_core::pipeline::Prepared;
use shroud_core::query::QueryFields;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Open, waiting for a question (or a follow-up after an answer).
    Analyzed,
    AwaitingApproval,
    Answered,
    Closed,
}

pub struct GatewaySession {
    pub mapping: SessionMapping,
    pub phase: Phase,
    pub prepared: Option<Prepared>,
    pub payload: Option<AnonymizedPayload>,
    pub answer: Option<AnswerPair>,
    pub rng: ChaCha8Rng,
}

impl GatewaySession {
    pub fn new(id: &str, rng: ChaCha8Rng) -> Self {
        Self { mapping: SessionMapping::empty(id), phase: Phase::Analyzed, prepared: None, payload: None, answer: None, rng }
    }

    pub fn envelope(&self) -> SessionEnvelope {
        let prepared = self.prepared.as_ref();
        let choices = prepared
            .map(|p| {
                p.entities
                    .keys()
                    .filter_map(|key| {
                        let set = self.mapping.set(key).ok()?;
                        Some(EntityChoice {
                            entity_key: key.clone(),
                            entity_type: key.entity_type,
                            original: p.entities.original_surface(key).unwrap_or(&key.surface).to_string(),
                            chosen: self.mapping.chosen(key).ok()?.to_string(),
                            candidates: set.candidates.clone(),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        SessionEnvelope {
            session_id: self.mapping.session_id().to_string(),
            phase: self.phase,
            question: prepared.map(|p| p.question.clone()),
            query_fields: prepared.map(|p| p.analysis.fields.clone()),
            retrieved: prepared
                .map(|p| {
                    p.retrieved
                        .iter()
                        .map(|r| ChunkRef { doc_id: r.chunk.doc_id.clone(), chunk_id: r.chunk.chunk_id, score: r.score, rank: r.rank })
                        .collect()
                })
                .unwrap_or_default(),
            entities: prepared.map(|p| p.spans.clone()).unwrap_or_default(),
            choices,
            payload_preview: self.payload.clone(),
            answer_pair: self.answer.clone(),
            degraded: prepared.is_some_and(|p| p.analysis.degraded),
            warning: prepared.and_then(|p| p.warning.clone()),
        }
    }
}

impl Ephemeral for GatewaySession {
    fn retained(&self) -> usize {
        self.mapping.retained() + self.prepared.as_ref().map_or(0, |p| p.entities.len())
    }

    fn close(&mut self) {
        self.mapping.close();
        self.prepared = None;
        self.payload = None;
        self.answer = None;
        self.phase = Phase::Closed;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChunkRef {
    pub doc_id: String,
    pub chunk_id: usize,
    pub score: f64,
    pub rank: usize,
}

/// The surrogate currently chosen for one entity, with its full set.
#[derive(Debug, Clone, Serialize)]
pub struct EntityChoice {
    pub entity_key: EntityKey,
    pub entity_type: EntityType,
    pub original: String,
    pub chosen: String,
    pub candidates: Vec<String>,
}

/// Everything the local reviewer needs. Originals are included on purpose:
/// the trust boundary is the provider, not the local caller.
#[derive(Debug, Clone, Serialize)]
pub struct SessionEnvelope {
    pub session_id: String,
    pub phase: Phase,
    pub question: Option<String>,
    pub query_fields: Option<QueryFields>,
    pub retrieved: Vec<ChunkRef>,
    pub entities: Vec<EntitySpan>,
    pub choices: Vec<EntityChoice>,
    pub payload_preview: Option<AnonymizedPayload>,
    pub answer_pair: Option<AnswerPair>,
    pub degraded: bool,
    pub warning: Option<String>,
}
