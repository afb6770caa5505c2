//! Batch inference over HTTP.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hopeml::experiment::Predictor;
use hopeml::ClassLabel;
use serde::{Deserialize, Serialize};

struct AppState {
    predictor: Predictor,
    max_batch: usize,
}

#[derive(Deserialize)]
struct PredictRequest {
    texts: Vec<String>,
}

#[derive(Serialize)]
struct PredictResponse {
    labels: Vec<ClassLabel>,
    scores: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

async fn health() -> StatusCode {
    StatusCode::OK
}

// The body is parsed by hand so every malformed payload maps to 400.
async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    if req.texts.len() > state.max_batch {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("batch of {} exceeds the limit of {}", req.texts.len(), state.max_batch),
        );
    }
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.predictor.predict_texts(&req.texts)).await {
        Ok(Ok((labels, scores))) => Json(PredictResponse { labels, scores }).into_response(),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub async fn serve(predictor: Predictor, bind: SocketAddr, max_batch: usize) -> Result<()> {
    let state = Arc::new(AppState { predictor, max_batch });
    let app = Router::new().route("/health", get(health)).route("/predict", post(predict)).with_state(state);
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    // Printed so callers binding port 0 can discover the address.
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("server stopped")
}
