mod common;

use std::collections::BTreeSet;

use axum::http::{Method, StatusCode};
use common::{api, call, get_json, post_json, raw_request, request_log, sha256_hex, spawn_server};
use mvsom_cli::api::{ChainResponse, MapDetail, MapSummary, PropagateRequest, PropagateResponse};
use mvsom_cli::ApiError;

#[tokio::test]
async fn lists_maps_and_details() {
    let api = api();
    let (s, v) = get_json(&api, "/v1/maps").await;
    assert_eq!(s, StatusCode::OK);
    let maps: Vec<MapSummary> = serde_json::from_value(v).unwrap();
    assert_eq!(maps.iter().map(|m| m.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);

    let (s, v) = get_json(&api, "/v1/maps/b").await;
    assert_eq!(s, StatusCode::OK);
    let d: MapDetail = serde_json::from_value(v).unwrap();
    assert_eq!(d.nodes.len(), d.width * d.height);
    let total: usize = d.nodes.iter().map(|n| n.members.len()).sum();
    assert_eq!(total, 48);
    for n in &d.nodes {
        assert_eq!(n.y * d.width + n.x, n.node);
        assert_eq!(n.label.is_none(), n.members.is_empty());
        assert_eq!(n.area.is_some(), n.label.is_some());
    }
    assert_eq!(d.zoning.areas.len(), api.bundle().map("b").unwrap().areas.len());
    assert_eq!(d.scan.entries.len(), 2);
}

#[tokio::test]
async fn consistency_matrix_and_detail() {
    let api = api();
    let (s, v) = get_json(&api, "/v1/consistency").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["viewpoint_ids"], serde_json::json!(["a", "b", "c"]));
    let (s, v) = get_json(&api, "/v1/consistency/a/c").await;
    assert_eq!(s, StatusCode::OK);
    let pc = v["pc"].as_f64().unwrap();
    assert_eq!(Some(pc), api.bundle().consistency.get("a", "c"));
}

#[tokio::test]
async fn propagate_by_nodes_and_by_area() {
    let api = api();
    let (s, v) = post_json(
        &api,
        "/v1/propagate",
        r#"{"source_map":"a","target_map":"b","nodes":[0]}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: PropagateResponse = serde_json::from_value(v).unwrap();
    assert!((r.activity_total - 1.0).abs() < 1e-9);
    assert_eq!(r.theta, 0.1);
    let carriers: usize = r.nodes.iter().map(|n| n.carriers.len()).sum();
    assert_eq!(carriers, r.result.carriers.len());
    for n in &r.nodes {
        assert_eq!(r.result.activity.get(&n.node).copied().unwrap_or(0.0), n.activity);
    }
    let focus: BTreeSet<usize> = r.focus.iter().copied().collect();
    assert_eq!(focus, r.result.focus(0.1));

    let area = &api.bundle().map("a").unwrap().areas[0];
    let body = format!(r#"{{"source_map":"a","target_map":"b","area":{}}}"#, area.id);
    let (s, v) = post_json(&api, "/v1/propagate", &body).await;
    assert_eq!(s, StatusCode::OK);
    let r: PropagateResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.result.activated_nodes, area.nodes);
}

#[tokio::test]
async fn chain_runs_steps_in_order() {
    let api = api();
    let body = r#"{"steps":[
        {"source_map":"a","source":{"nodes":[0]},"target_map":"b"},
        {"source_map":"b","source":"focus","target_map":"a"}],"theta":0.05}"#;
    let (s, v) = post_json(&api, "/v1/chain", body).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: ChainResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.steps.len(), 2);
    let focus: BTreeSet<usize> = r.steps[0].focus.iter().copied().collect();
    assert_eq!(r.steps[1].result.activated_nodes, focus);
}

#[tokio::test]
async fn errors_have_status_and_body() {
    let api = api();
    let cases = [
        (Method::GET, "/v1/maps/nope", None, StatusCode::NOT_FOUND),
        (Method::GET, "/v1/consistency/a/nope", None, StatusCode::NOT_FOUND),
        (Method::GET, "/v2/maps", None, StatusCode::NOT_FOUND),
        (
            Method::POST,
            "/v1/propagate",
            Some(r#"{"source_map":"nope","target_map":"b","nodes":[0]}"#),
            StatusCode::NOT_FOUND,
        ),
        (
            Method::POST,
            "/v1/propagate",
            Some(r#"{"source_map":"a","target_map":"b","area":999}"#),
            StatusCode::NOT_FOUND,
        ),
        (
            Method::POST,
            "/v1/propagate",
            Some(r#"{"source_map":"a","target_map":"b","nodes":[0],"area":0}"#),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/propagate",
            Some(r#"{"source_map":"a","target_map":"b","nodes":[9999]}"#),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/propagate",
            Some(r#"{"source_map":"a","target_map":"b","nodes":[0],"theta":2}"#),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/propagate",
            Some("{not json"),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/chain",
            Some(r#"{"steps":[{"source_map":"a","source":"focus","target_map":"b"}]}"#),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/chain",
            Some(r#"{"steps":[]}"#),
            StatusCode::BAD_REQUEST,
        ),
    ];
    for (method, path, body, want) in cases {
        let (s, bytes) = call(&api, method, path, body).await;
        assert_eq!(s, want, "{path} {body:?}");
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert!(v["error"].is_string() && v["kind"].is_string(), "{v}");
    }
}

#[test]
fn api_errors_map_core_errors() {
    let api = api();
    let req = PropagateRequest {
        source_map: "a".into(),
        target_map: "zzz".into(),
        nodes: Some([0].into()),
        area: None,
        theta: None,
    };
    assert!(matches!(api.propagate(&req), Err(ApiError::NotFound(_))));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn hundred_concurrent_requests_agree() {
    let addr = spawn_server(api()).await;
    let body = r#"{"source_map":"a","target_map":"c","nodes":[0,2]}"#;
    let tasks: Vec<_> = (0..100)
        .map(|_| tokio::spawn(async move { raw_request(addr, "POST", "/v1/propagate", body).await }))
        .collect();
    let mut hashes = BTreeSet::new();
    for t in tasks {
        let (status, payload) = t.await.unwrap();
        assert_eq!(status, 200);
        hashes.insert(sha256_hex(&payload));
    }
    assert_eq!(hashes.len(), 1);
}

#[tokio::test]
async fn replayed_log_gives_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    common::bundle().save(&path).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        // a fresh server over a freshly loaded bundle each time
        let api = mvsom_cli::Api::new(mvsom::WorkspaceBundle::load(&path).unwrap());
        let addr = spawn_server(api).await;
        let mut hashes = Vec::new();
        for (method, p, body) in request_log() {
            let (status, payload) = raw_request(addr, method, &p, &body).await;
            hashes.push((status, sha256_hex(&payload)));
        }
        runs.push(hashes);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].last().unwrap().0, 404);
}
