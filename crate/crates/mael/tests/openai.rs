use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use mael::openai::{OpenAiClient, OpenAiSettings};
use mael_core::embed::norm;
use mael_core::{BackendError, CompletionRequest, EmbeddingBackend, EmbeddingError, ModelBackend};

struct Captured {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection, in order, and records
/// each request.
fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Captured {
                path: request_line.split_whitespace().nth(1).unwrap().to_string(),
                auth,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn settings(base_url: String) -> OpenAiSettings {
    OpenAiSettings {
        base_url,
        api_key: Some("sk-test".into()),
        model: Some("chat-model".into()),
        embed_model: Some("embed-model".into()),
        embed_dimension: 3,
        initial_backoff_ms: 1,
        ..OpenAiSettings::default()
    }
}

const CHAT_OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"SOLUTION: 42"}}],"usage":{"prompt_tokens":11,"completion_tokens":3}}"#;

#[test]
fn chat_completion_round_trip() {
    let (url, seen) = mock_server(vec![(200, CHAT_OK.into())]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    let request = CompletionRequest {
        temperature: 0.2,
        ..CompletionRequest::new("What is 6*7?")
    };
    let r = client.complete(&request).unwrap();
    assert_eq!(r.text, "SOLUTION: 42");
    assert_eq!((r.prompt_tokens, r.completion_tokens), (11, 3));
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen[0].body["model"], "chat-model");
    assert_eq!(seen[0].body["temperature"], 0.2);
    assert_eq!(seen[0].body["messages"][0]["content"], "What is 6*7?");
}

#[test]
fn invalid_key_is_auth_error_without_retry() {
    let (url, seen) = mock_server(vec![
        (401, r#"{"error":"bad key"}"#.into()),
        (200, CHAT_OK.into()),
    ]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    let err = client.complete(&CompletionRequest::new("hi")).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = mock_server(vec![
        (500, "{}".into()),
        (503, "{}".into()),
        (200, CHAT_OK.into()),
    ]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    assert_eq!(
        client.complete(&CompletionRequest::new("hi")).unwrap().text,
        "SOLUTION: 42"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_capped() {
    let (url, seen) = mock_server(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (500, "{}".into()),
    ]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    let err = client.complete(&CompletionRequest::new("hi")).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 500, .. }));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock_server(vec![(400, r#"{"error":"bad"}"#.into())]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    let err = client.complete(&CompletionRequest::new("hi")).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_host_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let client = OpenAiClient::new(settings(url)).unwrap();
    assert!(matches!(
        client.complete(&CompletionRequest::new("hi")),
        Err(BackendError::Transport(_))
    ));
}

#[test]
fn embeddings_are_normalized() {
    let (url, seen) = mock_server(vec![(
        200,
        r#"{"data":[{"embedding":[3.0,0.0,4.0]}]}"#.into(),
    )]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    let v = client.embed("some text").unwrap();
    assert_eq!(v, [0.6, 0.0, 0.8]);
    assert!((norm(&v) - 1.0).abs() <= 1e-6);
    assert_eq!(client.provider_tag(), "openai:embed-model:3");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], "some text");
}

#[test]
fn embedding_dimension_checked() {
    let (url, _) = mock_server(vec![(200, r#"{"data":[{"embedding":[1.0,0.0]}]}"#.into())]);
    let client = OpenAiClient::new(settings(url)).unwrap();
    assert_eq!(
        client.embed("x"),
        Err(EmbeddingError::DimensionMismatch {
            expected: 3,
            found: 2
        })
    );
    assert_eq!(client.embed("   "), Err(EmbeddingError::EmptyText));
}
