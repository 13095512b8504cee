//! The HTTP embedding client against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use lapf_core::langmodel::{Embedding, RemoteEmbedder};
use lapf_core::{EmbedderConfig, Error};
use serde_json::{json, Value};

/// Serves `requests` connections, answering each request body with `reply`.
/// Returns the base URL and a handle yielding the request bodies seen.
fn serve(requests: usize, reply: fn(&Value) -> (u16, String)) -> (String, thread::JoinHandle<Vec<Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..requests {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            assert!(request_line.starts_with("POST /embed "), "{request_line}");
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            let (status, text) = reply(&body);
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
            seen.push(body);
        }
        seen
    });
    (url, handle)
}

fn texts(body: &Value) -> Vec<String> {
    body["texts"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect()
}

/// A four-dimensional vector that identifies the text by its length.
fn fingerprint(text: &str) -> Vec<f64> {
    vec![text.len() as f64, 1.0, 0.0, 2.0]
}

fn echo(body: &Value) -> (u16, String) {
    let rows: Vec<Vec<f64>> = texts(body).iter().map(|t| fingerprint(t)).collect();
    (200, json!({ "dim": 4, "embeddings": rows }).to_string())
}

fn client(url: String, batch: usize) -> RemoteEmbedder {
    RemoteEmbedder::new(url, 4, Duration::from_secs(5), batch)
}

#[test]
fn batches_preserve_order_and_are_normalized() {
    let input = ["a", "bb", "ccc", "dddd", "eeeee"];
    let (url, server) = serve(3, echo);
    let out = client(url, 2).embed_batch(&input).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(seen.iter().map(|b| texts(b).len()).collect::<Vec<_>>(), vec![2, 2, 1]);
    assert_eq!(seen.iter().flat_map(texts).collect::<Vec<_>>(), input);
    for (t, e) in input.iter().zip(&out) {
        let raw = fingerprint(t);
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(e, &Embedding(raw.iter().map(|v| v / norm).collect()));
    }
}

#[test]
fn configured_embedder_posts_to_the_embed_path() {
    let (url, server) = serve(1, echo);
    let embedder = EmbedderConfig::Remote { url: format!("{url}/"), dim: 4, timeout_ms: 5000, batch_size: 8 }
        .build()
        .unwrap();
    let e = embedder.embed("hello").unwrap();
    server.join().unwrap();
    assert_eq!(e.dim(), 4);
}

#[test]
fn dimension_mismatch_is_a_protocol_error() {
    let (url, server) = serve(1, |_| (200, json!({ "dim": 3, "embeddings": [[1.0, 0.0, 0.0]] }).to_string()));
    let err = client(url, 4).embed_batch(&["x"]).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn wrong_row_count_is_a_protocol_error() {
    let (url, server) = serve(1, |_| (200, json!({ "dim": 4, "embeddings": [[1.0, 0.0, 0.0, 0.0]] }).to_string()));
    let err = client(url, 4).embed_batch(&["x", "y"]).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn bad_request_is_a_protocol_error() {
    let (url, server) = serve(1, |_| (400, json!({ "error": "texts must be strings" }).to_string()));
    let err = client(url, 4).embed_batch(&["x"]).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn unavailable_is_retryable() {
    let (url, server) = serve(1, |_| (503, json!({ "error": "loading" }).to_string()));
    let err = client(url, 4).embed_batch(&["x"]).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, Error::EmbeddingService(_)), "{err}");
}

#[test]
fn refused_connection_is_retryable() {
    let url = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", listener.local_addr().unwrap())
    };
    let err = client(url, 4).embed_batch(&["x"]).unwrap_err();
    assert!(matches!(err, Error::EmbeddingService(_)), "{err}");
}
