//! JSON-over-HTTP service. Every route lives under `/v1`.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/v1/metadata` | | `BundleMetadata` |
//! | GET | `/v1/maps` | | `[MapSummary]` |
//! | GET | `/v1/maps/{id}` | | `MapDetail` |
//! | GET | `/v1/consistency` | | `ConsistencyMatrix` |
//! | GET | `/v1/consistency/{source}/{target}` | | `ConsistencyReport` |
//! | POST | `/v1/propagate` | `PropagateRequest` | `PropagateResponse` |
//! | POST | `/v1/chain` | `ChainRequest` | `ChainResponse` |
//!
//! Failures answer 404 (unknown map or area) or 400 with an `ErrorBody`.

use std::net::SocketAddr;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::api::{Api, ApiError, ChainRequest, ErrorBody, PropagateRequest};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(ErrorBody::from(&self))).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn metadata(State(api): State<Api>) -> Response {
    Json(api.metadata().clone()).into_response()
}

async fn maps(State(api): State<Api>) -> Response {
    Json(api.list_maps()).into_response()
}

async fn map_detail(State(api): State<Api>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(api.map_detail(&id)?).into_response())
}

async fn consistency(State(api): State<Api>) -> Response {
    Json(api.consistency().clone()).into_response()
}

async fn consistency_detail(
    State(api): State<Api>,
    Path((source, target)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    Ok(Json(api.consistency_detail(&source, &target)?).into_response())
}

async fn propagate(
    State(api): State<Api>,
    payload: Result<Json<PropagateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    Ok(Json(api.propagate(&req)?).into_response())
}

async fn chain(
    State(api): State<Api>,
    payload: Result<Json<ChainRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    Ok(Json(api.chain(&req)?).into_response())
}

async fn not_found() -> ApiError {
    ApiError::NotFound("no such endpoint".into())
}

pub fn router(api: Api) -> Router {
    Router::new()
        .route("/v1/metadata", get(metadata))
        .route("/v1/maps", get(maps))
        .route("/v1/maps/{id}", get(map_detail))
        .route("/v1/consistency", get(consistency))
        .route("/v1/consistency/{source}/{target}", get(consistency_detail))
        .route("/v1/propagate", post(propagate))
        .route("/v1/chain", post(chain))
        .fallback(not_found)
        .with_state(api)
}

pub async fn serve(api: Api, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, api).await
}

/// Serves on an already bound listener (port 0 picks a free port).
pub async fn serve_on(listener: tokio::net::TcpListener, api: Api) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(api)).await
}
