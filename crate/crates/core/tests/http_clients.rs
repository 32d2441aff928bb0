use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use shroud_core::detection::{detect, DetectionError, EntityDetector, EntityType, NerServiceDetector, SpanSource};
use shroud_core::provider::{ChatClient, EndpointConfig, ProviderError};

/// Serves one scripted `(status, body)` per request, closing each
/// connection. Returns the base URL, a request counter and captured bodies.
fn scripted_server(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let count = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (c, b) = (Arc::clone(&count), Arc::clone(&bodies));
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            b.lock().unwrap().push(String::from_utf8(body).unwrap());
            let n = c.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = script.get(n).cloned().unwrap_or((500, String::new()));
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), count, bodies)
}

fn client(base: &str, retries: u32) -> ChatClient {
    let mut cfg = EndpointConfig::new(base, "test-model");
    cfg.max_retries = retries;
    cfg.backoff_base_ms = 1;
    cfg.timeout_secs = 5;
    cfg.api_key = Some("secret".into());
    ChatClient::new(cfg)
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"fine"}}]}"#;

#[test]
fn server_errors_are_retried_until_the_budget_is_spent() {
    let (url, count, _) = scripted_server(vec![]);
    let err = client(&url, 3).complete("s", "u", 0.7, 16).unwrap_err();
    assert_eq!(count.load(Ordering::SeqCst), 4);
    assert!(matches!(err, ProviderError::RetriesExhausted { attempts: 4, .. }), "{err:?}");
}

#[test]
fn recovery_after_transient_failures() {
    let (url, count, bodies) =
        scripted_server(vec![(503, String::new()), (429, String::new()), (200, OK.to_string())]);
    assert_eq!(client(&url, 3).complete("system text", "user text", 0.7, 16).unwrap(), "fine");
    assert_eq!(count.load(Ordering::SeqCst), 3);
    let body: serde_json::Value = serde_json::from_str(&bodies.lock().unwrap()[2]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][1]["content"], "user text");
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, count, _) = scripted_server(vec![(401, String::new())]);
    let err = client(&url, 3).complete("s", "u", 0.7, 16).unwrap_err();
    assert_eq!(count.load(Ordering::SeqCst), 1);
    assert!(matches!(err, ProviderError::Auth(401)), "{err:?}");
}

#[test]
fn client_errors_other_than_408_and_429_are_final() {
    let (url, count, _) = scripted_server(vec![(400, "bad".into())]);
    let err = client(&url, 3).complete("s", "u", 0.7, 16).unwrap_err();
    assert_eq!(count.load(Ordering::SeqCst), 1);
    assert!(matches!(err, ProviderError::Http { status: 400, ref body } if body == "bad"), "{err:?}");
}

#[test]
fn malformed_completion_is_reported() {
    let (url, _, _) = scripted_server(vec![(200, r#"{"choices":[]}"#.into())]);
    assert!(matches!(client(&url, 0).complete("s", "u", 0.7, 16), Err(ProviderError::InvalidResponse(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = client(&url, 0).complete("s", "u", 0.7, 16).unwrap_err();
    assert!(matches!(err, ProviderError::RetriesExhausted { attempts: 1, .. }), "{err:?}");
}

#[test]
fn ner_service_offsets_are_converted_from_chars() {
    // "é" is two bytes, so char offsets differ from byte offsets
    let text = "Café Acme Corp pays.";
    let hits = r#"[{"text":"Acme Corp","label":"organization","start":5,"end":14,"score":0.9},
                   {"text":"pays","label":"person","start":15,"end":19,"score":0.2}]"#;
    let (url, _, bodies) = scripted_server(vec![(200, hits.into())]);
    let spans = detect(text, &SpanSource::Query, &NerServiceDetector::new(url)).unwrap();
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].surface, "Acme Corp");
    assert_eq!(spans[0].entity_type, EntityType::Organization);
    let sent: serde_json::Value = serde_json::from_str(&bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["text"], text);
}

#[test]
fn ner_service_mismatched_text_is_malformed() {
    let hits = r#"[{"text":"Beta","label":"organization","start":0,"end":4,"score":0.9}]"#;
    let (url, _, _) = scripted_server(vec![(200, hits.into())]);
    assert!(matches!(NerServiceDetector::new(url).find("Acme pays"), Err(DetectionError::Malformed(_))));
}

#[test]
fn ner_service_failure_is_unreachable() {
    let (url, _, _) = scripted_server(vec![(503, String::new())]);
    assert!(matches!(NerServiceDetector::new(url).find("Acme pays"), Err(DetectionError::Unreachable(_))));
}
