//! The end-to-end flow: analyze, retrieve, detect, map, anonymize, answer
//! and restore.

use std::sync::Arc;

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::anonymizer::{anonymize, AnonymizeError, AnonymizedPayload};
use crate::corpus::{Chunk, Corpus};
use crate::deanonymizer::{deanonymize, AnswerPair, DeanonymizeError};
use crate::detection::{collect_total, detect, DetectionError, EntityDetector, EntitySpan, EntityTotal, SpanSource};
use crate::mapping::{generate_sets_for, originals_of, MappingConfig, MappingError, SessionMapping, SimilarityCheck};
use crate::provider::{AnswerProvider, GenerationRequest, LocalModel, ProviderError};
use crate::query::{analyze_query, QueryAnalysis, QueryError};
use crate::retrieval::{match_documents, rank_chunks, RetrievalError, RetrievedChunk, DEFAULT_TOP_K};
use crate::surrogates::{SurrogateGenerator, WordlistGenerator};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Anonymize(#[from] AnonymizeError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Deanonymize(#[from] DeanonymizeError),
}

impl PipelineError {
    pub fn is_leak_guard(&self) -> bool {
        matches!(self, PipelineError::Anonymize(AnonymizeError::LeakGuard { .. }))
    }
}

/// Everything computed for one question before any surrogate is chosen.
#[derive(Debug, Clone, Serialize)]
pub struct Prepared {
    pub question: String,
    pub analysis: QueryAnalysis,
    pub matched_docs: Vec<String>,
    pub retrieved: Vec<RetrievedChunk>,
    pub spans: Vec<EntitySpan>,
    #[serde(skip)]
    pub entities: EntityTotal,
    pub warning: Option<String>,
}

impl Prepared {
    pub fn chunks(&self) -> Vec<Chunk> {
        self.retrieved.iter().map(|r| r.chunk.clone()).collect()
    }
}

pub struct Pipeline {
    corpus: Arc<Corpus>,
    detector: Arc<dyn EntityDetector>,
    generator: Arc<dyn SurrogateGenerator>,
    similarity: Option<Arc<dyn SimilarityCheck>>,
    analyzer: Option<Arc<dyn LocalModel>>,
    mapping: MappingConfig,
    top_k: usize,
}

impl Pipeline {
    pub fn new(corpus: Arc<Corpus>, detector: Arc<dyn EntityDetector>) -> Self {
        Self {
            corpus,
            detector,
            generator: Arc::new(WordlistGenerator),
            similarity: None,
            analyzer: None,
            mapping: MappingConfig::default(),
            top_k: DEFAULT_TOP_K,
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn SurrogateGenerator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_similarity(mut self, similarity: Arc<dyn SimilarityCheck>) -> Self {
        self.similarity = Some(similarity);
        self
    }

    /// Uses the on-premises model for query analysis.
    pub fn with_analyzer(mut self, model: Arc<dyn LocalModel>) -> Self {
        self.analyzer = Some(model);
        self
    }

    pub fn with_mapping(mut self, mapping: MappingConfig) -> Result<Self, MappingError> {
        mapping.validate()?;
        self.mapping = mapping;
        Ok(self)
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn detector(&self) -> &dyn EntityDetector {
        self.detector.as_ref()
    }

    pub fn mapping_config(&self) -> &MappingConfig {
        &self.mapping
    }

    /// Analyzes the question, retrieves chunks and detects entities in the
    /// question and every retrieved chunk.
    pub fn prepare(&self, question: &str, k: Option<usize>) -> Result<Prepared, PipelineError> {
        let analysis = analyze_query(question, self.analyzer.as_deref())?;
        let matched_docs = match_documents(&analysis.fields, &self.corpus.metadata_index());
        let retrieved =
            rank_chunks(&self.corpus, question, &analysis.fields, &matched_docs, k.unwrap_or(self.top_k))?;
        let warning = retrieved.is_empty().then(|| "no context found".to_string());

        let mut spans = detect(question, &SpanSource::Query, self.detector.as_ref())?;
        for r in &retrieved {
            let source = SpanSource::Chunk { doc_id: r.chunk.doc_id.clone(), chunk_id: r.chunk.chunk_id };
            spans.extend(detect(&r.chunk.text, &source, self.detector.as_ref())?);
        }
        let entities = collect_total(spans.iter());
        Ok(Prepared { question: question.to_string(), analysis, matched_docs, retrieved, spans, entities, warning })
    }

    /// Builds sets for entities the session has not seen, samples their
    /// surrogates and returns the certified payload.
    pub fn bind(
        &self,
        prepared: &Prepared,
        session: &mut SessionMapping,
        rng: &mut dyn RngCore,
    ) -> Result<AnonymizedPayload, PipelineError> {
        let chunks = prepared.chunks();
        let mut reserved: Vec<&str> = vec![prepared.question.as_str()];
        reserved.extend(chunks.iter().map(|c| c.text.as_str()));
        let sets = generate_sets_for(
            &prepared.entities,
            &reserved,
            session,
            &self.mapping,
            self.generator.as_ref(),
            self.similarity.as_deref(),
            rng,
        )?;
        session.add_sets(sets, &originals_of(&prepared.entities), rng)?;
        self.anonymize(prepared, session)
    }

    /// Re-renders the payload under the session's current choices.
    pub fn anonymize(&self, prepared: &Prepared, session: &SessionMapping) -> Result<AnonymizedPayload, PipelineError> {
        Ok(anonymize(&prepared.question, &prepared.chunks(), &prepared.entities, session)?)
    }

    /// Sends a certified payload to `provider` and restores the answer.
    pub fn answer(
        &self,
        prepared: &Prepared,
        payload: &AnonymizedPayload,
        session: &SessionMapping,
        provider: &dyn AnswerProvider,
    ) -> Result<AnswerPair, PipelineError> {
        let request = GenerationRequest::from_payload(payload, prepared.analysis.fields.query_type, provider.tag())?;
        let answer = provider.generate(&request)?;
        Ok(deanonymize(&answer, session, self.detector.as_ref())?)
    }

    /// The automatic flow: prepare, bind a fresh session, answer.
    pub fn ask(
        &self,
        question: &str,
        provider: &dyn AnswerProvider,
        rng: &mut dyn RngCore,
    ) -> Result<(Prepared, AnonymizedPayload, AnswerPair), PipelineError> {
        let prepared = self.prepare(question, None)?;
        let mut session = SessionMapping::empty(crate::mapping::new_session_id());
        let payload = self.bind(&prepared, &mut session, rng)?;
        let pair = self.answer(&prepared, &payload, &session, provider)?;
        session.close();
        Ok((prepared, payload, pair))
    }
}
