use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use serde_json::{json, Value};
use vrag::client::{HttpClient, ModelClient};
use vrag::encoder::EncoderClient;
use vrag::Error;

/// Serves `n` requests, answering each from `route(method, path, body)`.
fn serve(n: usize, route: fn(&str, &str, &str) -> (u16, String)) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut parts = line.split_whitespace();
            let method = parts.next().unwrap_or("").to_string();
            let path = parts.next().unwrap_or("").to_string();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let (status, reply) = route(&method, &path, &String::from_utf8(body).unwrap());
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    format!("http://{addr}")
}

fn client(base: &str) -> HttpClient {
    HttpClient::new(base, Duration::from_secs(5))
}

#[test]
fn json_round_trip() {
    let base = serve(1, |method, path, body| {
        let v: Value = serde_json::from_str(body).unwrap();
        (200, json!({ "method": method, "path": path, "echo": v }).to_string())
    });
    let r = client(&base).post_json("/v1/chat", &json!({ "x": 1 })).unwrap();
    assert_eq!(r, json!({ "method": "POST", "path": "/v1/chat", "echo": { "x": 1 } }));
}

#[test]
fn error_status_carries_body() {
    let base = serve(1, |_, _, _| (503, r#"{"error":"overloaded"}"#.to_string()));
    match client(&base).post_json("/v1/chat", &json!({})) {
        Err(Error::GeneratorError { status, body }) => {
            assert_eq!(status, 503);
            assert!(body.contains("overloaded"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn encoder_over_http() {
    let base = serve(2, |method, path, _| match (method, path) {
        ("GET", "/healthz") => (200, r#"{"status":"ok","encoder_id":"enc","dim":2}"#.into()),
        ("POST", "/v1/embed/text") => (200, r#"{"dim":2,"count":1,"embeddings":[[0.6,0.8]]}"#.into()),
        _ => (404, "{}".into()),
    });
    let http = client(&base);
    let enc = EncoderClient::new(&http);
    assert_eq!(enc.health().unwrap().encoder_id, "enc");
    assert_eq!(enc.embed_text(&["a".into()], Some(2)).unwrap().embeddings, vec![vec![0.6, 0.8]]);
}

#[test]
fn non_json_and_refused_connections() {
    let base = serve(1, |_, _, _| (200, "not json".into()));
    assert!(matches!(client(&base).get_json("/healthz"), Err(Error::InvalidResponse(_))));
    let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    assert!(matches!(
        client(&format!("http://{dead}")).get_json("/healthz"),
        Err(Error::Transport(_))
    ));
}
