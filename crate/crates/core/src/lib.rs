//! Privacy gateway core: corpus ingestion, retrieval, entity detection,
//! session-scoped surrogate mapping, anonymization, restoration and metrics.

pub mod anonymizer;
pub mod corpus;
pub mod dates;
pub mod deanonymizer;
pub mod detection;
pub mod gazetteer;
pub mod mapping;
pub mod metrics;
pub mod pipeline;
pub mod provider;
pub mod query;
pub mod retrieval;
pub mod surrogates;
pub mod synth;
pub mod text;

pub use anonymizer::{anonymize, leak_scan, AnonymizedPayload, LeakReport};
pub use corpus::{Chunk, Corpus, Document, DocumentMetadata};
pub use deanonymizer::{deanonymize, restoration_accuracy, AnswerPair};
pub use detection::{EntityDetector, EntityKey, EntitySpan, EntityTotal, EntityType, RuleDetector};
pub use mapping::{MappingConfig, SessionMapping, SessionStore, SurrogateSet};
pub use provider::{AnswerProvider, GenerationRequest, LocalModel, MockProvider};
pub use query::{QueryFields, QueryType};
pub use retrieval::RetrievedChunk;
