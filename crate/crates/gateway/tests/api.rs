mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::http::{Method, StatusCode};
use common::*;
use serde_json::json;
use shroud_core::anonymizer::leak_scan_text;
use shroud_core::text::find_token_bounded;
use shroud_gateway::app::spawn_purger;

#[tokio::test]
async fn create_returns_fresh_ids_and_ignores_bodies() {
    let gw = gateway(1);
    let a = gw.create().await;
    let (status, v) = gw.call(Method::POST, "/sessions", Some(json!({ "anything": 1 }))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_ne!(a, v["session_id"].as_str().unwrap());
    assert_eq!(gw.stats().await, (2, 0));
}

#[tokio::test]
async fn simple_question_preview_holds_surrogates_only() {
    let gw = gateway(2);
    let id = gw.create().await;
    let (status, env) = gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(status, StatusCode::OK, "{env}");
    assert_eq!(env["phase"], "awaiting_approval");
    assert_eq!(env["query_fields"]["query_type"], "simple");

    let originals = originals(&env);
    assert!(originals.iter().any(|o| o == "January 1, 2023"), "{originals:?}");
    for text in preview_texts(&env) {
        assert!(leak_scan_text(&text, &originals).is_clean(), "original in preview: {text}");
    }
    let surrogate = choice(&env, DATE_KEY)["chosen"].as_str().unwrap().to_string();
    assert!(preview_texts(&env).iter().any(|t| !find_token_bounded(t, &surrogate).is_empty()));
    // nothing is sent before approval
    assert!(gw.audit.lock().unwrap().is_empty());
}

#[tokio::test]
async fn question_without_entities_or_context_passes_through() {
    let gw = gateway(3);
    let id = gw.create().await;
    let question = "What does doc-ffffffffffffffff say about renewal?";
    let (status, env) = gw.query(&id, question).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(env["warning"], "no context found");
    assert_eq!(env["payload_preview"]["query_text"], question);
    assert_eq!(env["payload_preview"]["manifest"], json!([]));
    assert_eq!(env["retrieved"], json!([]));
}

#[tokio::test]
async fn unknown_and_closed_sessions() {
    let gw = gateway(4);
    let (status, v) = gw.query("nope", EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "session_not_found");
    let id = gw.create().await;
    assert_eq!(gw.delete(&id).await, StatusCode::NO_CONTENT);
    let (status, v) = gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(status, StatusCode::GONE);
    assert!(v["message"].is_string());
}

#[tokio::test]
async fn reroll_eventually_shows_every_candidate() {
    // P(some of K candidates unseen after n draws) <= K (1 - 1/K)^n; the
    // smallest n putting that under 1% for K = 5
    let k = 5.0f64;
    let draws = ((k * 100.0).ln() / (k / (k - 1.0)).ln()).ceil() as usize;
    assert_eq!(draws, 28);

    let gw = gateway(5);
    let id = gw.create().await;
    let (_, env) = gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let set = choice(&env, DATE_KEY);
    let candidates: BTreeSet<String> =
        set["candidates"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
    assert_eq!(candidates.len(), 5);
    let mut seen = BTreeSet::from([set["chosen"].as_str().unwrap().to_string()]);
    for _ in 0..draws {
        let (status, env) = gw.reroll(&id, DATE_KEY).await;
        assert_eq!(status, StatusCode::OK);
        let chosen = choice(&env, DATE_KEY)["chosen"].as_str().unwrap().to_string();
        assert!(candidates.contains(&chosen));
        assert!(preview_texts(&env).iter().any(|t| !find_token_bounded(t, &chosen).is_empty()));
        seen.insert(chosen);
    }
    assert_eq!(seen, candidates);
    assert!(gw.audit.lock().unwrap().is_empty(), "reroll must not call a provider");
}

#[tokio::test]
async fn reroll_errors() {
    let gw = gateway(6);
    let id = gw.create().await;
    let (status, _) = gw.reroll(&id, DATE_KEY).await;
    assert_eq!(status, StatusCode::CONFLICT);
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let (status, v) = gw.reroll(&id, "organization:nobody inc").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "entity_not_found");
    let (status, _) = gw.reroll(&id, "no colon").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn approve_restores_the_planted_date() {
    let gw = gateway(7);
    let id = gw.create().await;
    let (_, env) = gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let originals = originals(&env);
    let (status, env) = gw.approve(&id, None).await;
    assert_eq!(status, StatusCode::OK, "{env}");
    assert_eq!(env["phase"], "answered");
    let surrogate = choice(&env, DATE_KEY)["chosen"].as_str().unwrap().to_string();
    let pair = &env["answer_pair"];
    let anonymized = pair["anonymized"].as_str().unwrap();
    let recovered = pair["recovered"].as_str().unwrap();
    assert!(anonymized.contains(&surrogate), "{anonymized}");
    assert!(!anonymized.contains("January 1, 2023"));
    assert!(recovered.contains("January 1, 2023"), "{recovered}");

    // the two answers differ exactly at the restoration spans
    let mut rebuilt = String::new();
    let mut cursor = 0;
    for r in pair["restorations"].as_array().unwrap() {
        let pos = r["position"].as_u64().unwrap() as usize;
        let surface = r["surrogate_surface"].as_str().unwrap();
        assert_eq!(&anonymized[pos..pos + surface.len()], surface);
        rebuilt.push_str(&anonymized[cursor..pos]);
        assert_eq!(r["recovered_position"].as_u64().unwrap() as usize, rebuilt.len());
        rebuilt.push_str(r["original_surface"].as_str().unwrap());
        cursor = pos + surface.len();
    }
    rebuilt.push_str(&anonymized[cursor..]);
    assert_eq!(rebuilt, recovered);

    let log = gw.audit.lock().unwrap();
    assert_eq!(log.len(), 1);
    assert!(leak_scan_text(&log[0], &originals).is_clean());
}

#[tokio::test]
async fn approve_uses_the_latest_reroll() {
    let gw = gateway(8);
    let id = gw.create().await;
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let mut chosen = String::new();
    for _ in 0..3 {
        let (_, env) = gw.reroll(&id, DATE_KEY).await;
        chosen = choice(&env, DATE_KEY)["chosen"].as_str().unwrap().to_string();
    }
    let (_, env) = gw.approve(&id, Some("mock")).await;
    assert!(env["answer_pair"]["anonymized"].as_str().unwrap().contains(&chosen));
    assert!(gw.audit.lock().unwrap()[0].contains(&chosen));
}

#[tokio::test]
async fn approve_phase_rules() {
    let gw = gateway(9);
    let id = gw.create().await;
    let (status, v) = gw.approve(&id, None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "wrong_phase");
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(gw.approve(&id, None).await.0, StatusCode::OK);
    assert_eq!(gw.approve(&id, None).await.0, StatusCode::CONFLICT);
    // a follow-up reopens review and keeps earlier choices
    let (_, first) = gw.call(Method::GET, &format!("/sessions/{id}"), None).await;
    let before = choice(&first, DATE_KEY)["chosen"].clone();
    let (status, env) = gw.query(&id, "When does the agreement dated January 1, 2023 renew?").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(env["phase"], "awaiting_approval");
    assert_eq!(choice(&env, DATE_KEY)["chosen"], before);
}

#[tokio::test]
async fn provider_failure_is_retryable() {
    let gw = gateway(10);
    let id = gw.create().await;
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let (status, v) = gw.approve(&id, Some("local")).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["code"], "provider_failed");
    let (_, env) = gw.call(Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(env["phase"], "awaiting_approval");
    assert_eq!(gw.approve(&id, Some("cloud")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn bad_requests() {
    let gw = gateway(11);
    let id = gw.create().await;
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(gw.approve(&id, Some("gpt")).await.0, StatusCode::BAD_REQUEST);
    let (status, _) = gw.call(Method::POST, &format!("/sessions/{id}/query"), Some(json!({ "q": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = gw.query(&id, "   ").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_question");
}

#[tokio::test]
async fn detector_outage_fails_closed() {
    let gw = gateway_with(Arc::new(DownDetector), 12);
    let id = gw.create().await;
    let (status, v) = gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["code"], "detector_unavailable");
    let (_, env) = gw.call(Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(env["payload_preview"], serde_json::Value::Null);
    assert!(gw.audit.lock().unwrap().is_empty());
}

#[tokio::test]
async fn delete_discards_mappings() {
    let gw = gateway(13);
    let id = gw.create().await;
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    let (open, retained) = gw.stats().await;
    assert_eq!(open, 1);
    assert!(retained > 0);
    assert_eq!(gw.delete(&id).await, StatusCode::NO_CONTENT);
    assert_eq!(gw.call(Method::GET, &format!("/sessions/{id}"), None).await.0, StatusCode::GONE);
    assert_eq!(gw.delete(&id).await, StatusCode::GONE);
    assert_eq!(gw.delete("never-existed").await, StatusCode::NOT_FOUND);
    assert_eq!(gw.stats().await, (0, 0));
}

#[tokio::test]
async fn idle_sessions_expire() {
    let gw = gateway(14);
    let purger = spawn_purger(Arc::clone(&gw.state.store), Duration::from_millis(100), Duration::from_millis(20));
    let id = gw.create().await;
    gw.query(&id, EFFECTIVE_DATE_QUESTION).await;
    assert!(gw.stats().await.1 > 0);
    tokio::time::sleep(Duration::from_millis(400)).await;
    assert_eq!(gw.stats().await, (0, 0));
    assert_eq!(gw.approve(&id, None).await.0, StatusCode::GONE);
    purger.abort();
}

#[tokio::test]
async fn health_reports_documents() {
    let gw = gateway(15);
    let (status, v) = gw.call(Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["documents"], 3);
}
