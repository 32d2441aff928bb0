#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::Value;
use shroud_core::corpus::{ChunkConfig, Corpus};
use shroud_core::detection::{DetectionError, EntityDetector, RawSpan, RuleDetector};
use shroud_core::pipeline::Pipeline;
use shroud_core::provider::{AnswerProvider, GenerationRequest, MockProvider, ProviderError, ProviderTag, RecordingProvider};
use shroud_gateway::app::{router, AppState, Providers};
use tower::ServiceExt;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus")
}

pub fn harness_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/harness.json")
}

pub fn corpus() -> Corpus {
    Corpus::load(corpus_dir(), ChunkConfig::default()).unwrap()
}

/// Cloud stand-in: answers like the extractive mock, records every prompt.
pub struct FakeCloud(pub RecordingProvider<MockProvider>);

impl AnswerProvider for FakeCloud {
    fn tag(&self) -> ProviderTag {
        ProviderTag::Cloud
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        self.0.generate(request)
    }
}

pub struct BrokenProvider;

impl AnswerProvider for BrokenProvider {
    fn tag(&self) -> ProviderTag {
        ProviderTag::Local
    }
    fn generate(&self, _: &GenerationRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Http { status: 503, body: "overloaded".into() })
    }
}

pub struct DownDetector;

impl EntityDetector for DownDetector {
    fn find(&self, _: &str) -> Result<Vec<RawSpan>, DetectionError> {
        Err(DetectionError::Unreachable("connection refused".into()))
    }
}

pub struct Gateway {
    pub state: Arc<AppState>,
    pub router: Router,
    /// Every prompt handed to the cloud stand-in.
    pub audit: Arc<Mutex<Vec<String>>>,
}

pub fn gateway_with(detector: Arc<dyn EntityDetector>, seed: u64) -> Gateway {
    let audit: Arc<Mutex<Vec<String>>> = Arc::default();
    let cloud = FakeCloud(RecordingProvider::with_log(MockProvider::default(), Arc::clone(&audit)));
    let providers = Providers::new(ProviderTag::Cloud)
        .with(ProviderTag::Cloud, Arc::new(cloud))
        .with(ProviderTag::Mock, Arc::new(RecordingProvider::with_log(MockProvider::default(), Arc::clone(&audit))))
        .with(ProviderTag::Local, Arc::new(BrokenProvider));
    let pipeline = Pipeline::new(Arc::new(corpus()), detector);
    let state = AppState::new(pipeline, providers, Some(seed));
    Gateway { router: router(Arc::clone(&state)), state, audit }
}

pub fn gateway(seed: u64) -> Gateway {
    gateway_with(Arc::new(RuleDetector::new()), seed)
}

impl Gateway {
    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let body = match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        };
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn create(&self) -> String {
        let (status, v) = self.call(Method::POST, "/sessions", None).await;
        assert_eq!(status, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_string()
    }

    pub async fn query(&self, id: &str, question: &str) -> (StatusCode, Value) {
        self.call(Method::POST, &format!("/sessions/{id}/query"), Some(serde_json::json!({ "question": question }))).await
    }

    pub async fn approve(&self, id: &str, provider: Option<&str>) -> (StatusCode, Value) {
        let body = provider.map(|p| serde_json::json!({ "provider": p }));
        self.call(Method::POST, &format!("/sessions/{id}/approve"), body).await
    }

    pub async fn reroll(&self, id: &str, key: &str) -> (StatusCode, Value) {
        self.call(Method::POST, &format!("/sessions/{id}/reroll"), Some(serde_json::json!({ "entity_key": key }))).await
    }

    pub async fn delete(&self, id: &str) -> StatusCode {
        self.call(Method::DELETE, &format!("/sessions/{id}"), None).await.0
    }

    pub async fn stats(&self) -> (u64, u64) {
        let (_, v) = self.call(Method::GET, "/debug/store", None).await;
        (v["open_sessions"].as_u64().unwrap(), v["retained_mappings"].as_u64().unwrap())
    }
}

/// Every original surface the envelope reports, for leak checks.
pub fn originals(envelope: &Value) -> Vec<String> {
    let mut out: Vec<String> = envelope["entities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["surface"].as_str().unwrap().to_string())
        .chain(envelope["choices"].as_array().unwrap().iter().map(|c| c["original"].as_str().unwrap().to_string()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// All text in the payload preview, i.e. what would leave the premises.
pub fn preview_texts(envelope: &Value) -> Vec<String> {
    let p = &envelope["payload_preview"];
    std::iter::once(p["query_text"].as_str().unwrap().to_string())
        .chain(p["chunks"].as_array().unwrap().iter().map(|c| c["text"].as_str().unwrap().to_string()))
        .collect()
}

pub fn choice<'a>(envelope: &'a Value, key: &str) -> &'a Value {
    envelope["choices"].as_array().unwrap().iter().find(|c| c["entity_key"] == key).unwrap_or_else(|| {
        panic!("no choice for {key}: {}", envelope["choices"])
    })
}

pub const EFFECTIVE_DATE_QUESTION: &str = "What is the effective date of this agreement?";
pub const DATE_KEY: &str = "date:january 1, 2023";
