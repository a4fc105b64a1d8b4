#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use mvsom::ingest::synthetic::{SyntheticSpec, SyntheticViewpoint};
use mvsom::pipeline::{InputSource, ScanRange};
use mvsom::{run_pipeline, PipelineConfig, WorkspaceBundle};
use mvsom_cli::server::{router, serve_on};
use mvsom_cli::Api;
use sha2::{Digest, Sha256};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

pub fn config() -> PipelineConfig {
    let spec = SyntheticSpec {
        item_count: 48,
        group_count: 4,
        viewpoints: vec![
            SyntheticViewpoint::new("a", 16),
            SyntheticViewpoint::new("b", 12).counts(),
            SyntheticViewpoint::new("c", 8).groups(2),
        ],
        coupling: 0.9,
        seed: 3,
    };
    let mut cfg = PipelineConfig::new(InputSource::Synthetic { spec });
    cfg.scan = ScanRange {
        min_side: 2,
        max_side: 3,
    };
    cfg.seed = 1;
    cfg
}

pub fn bundle() -> &'static WorkspaceBundle {
    static BUNDLE: OnceLock<WorkspaceBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| run_pipeline(&config()).unwrap())
}

pub fn api() -> Api {
    Api::new(bundle().clone())
}

pub async fn call(api: &Api, method: Method, path: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(api.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get_json(api: &Api, path: &str) -> (StatusCode, serde_json::Value) {
    let (s, b) = call(api, Method::GET, path, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

pub async fn post_json(api: &Api, path: &str, body: &str) -> (StatusCode, serde_json::Value) {
    let (s, b) = call(api, Method::POST, path, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}

/// Starts the real server on a free local port.
pub async fn spawn_server(api: Api) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, api));
    addr
}

/// Minimal HTTP/1.1 exchange over a fresh connection; returns status and body.
pub async fn raw_request(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, Vec<u8>) {
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).await.unwrap();
    stream.write_all(body.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).await.unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&buf[..split]).to_string();
    let status: u16 = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut payload = buf[split + 4..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        payload = dechunk(&payload);
    }
    (status, payload)
}

fn dechunk(mut data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let eol = data.windows(2).position(|w| w == b"\r\n").unwrap();
        let size = usize::from_str_radix(std::str::from_utf8(&data[..eol]).unwrap().trim(), 16).unwrap();
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&data[eol + 2..eol + 2 + size]);
        data = &data[eol + 2 + size + 2..];
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A fixed request log: method, path, body.
pub fn request_log() -> Vec<(&'static str, String, String)> {
    vec![
        ("GET", "/v1/maps".into(), String::new()),
        ("GET", "/v1/maps/a".into(), String::new()),
        ("GET", "/v1/consistency".into(), String::new()),
        ("GET", "/v1/consistency/a/b".into(), String::new()),
        (
            "POST",
            "/v1/propagate".into(),
            r#"{"source_map":"a","target_map":"b","nodes":[0,1]}"#.into(),
        ),
        (
            "POST",
            "/v1/propagate".into(),
            r#"{"source_map":"b","target_map":"c","area":0,"theta":0.2}"#.into(),
        ),
        (
            "POST",
            "/v1/chain".into(),
            r#"{"steps":[{"source_map":"a","source":{"nodes":[0]},"target_map":"b"},{"source_map":"b","source":"focus","target_map":"a"}],"theta":0.05}"#.into(),
        ),
        ("GET", "/v1/maps/nope".into(), String::new()),
    ]
}
