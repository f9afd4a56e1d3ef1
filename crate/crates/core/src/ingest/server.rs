//! HTTP intake service: `POST /report` runs parse -> enrich -> store and
//! answers with the storage key; `GET /healthz` for liveness.
//!
//! Parsing and enrichment are pure and writes are atomic per uniquely
//! keyed file, so concurrent requests need no cross-request locking.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;

use super::report::{parse_station_report, PayloadFormat};
use super::store::{enrich, store_record};
use crate::error::Error;
use crate::solar::GeoLocation;

#[derive(Debug, Clone)]
pub struct IngestState {
    pub station: GeoLocation,
    pub data_root: PathBuf,
}

fn payload_format(headers: &HeaderMap, body: &[u8]) -> PayloadFormat {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    if content_type.contains("json") {
        PayloadFormat::Json
    } else if content_type.contains("x-www-form-urlencoded") {
        PayloadFormat::FormUrlEncoded
    } else if body.trim_ascii_start().starts_with(b"{") {
        // No usable content type; sniff the body.
        PayloadFormat::Json
    } else {
        PayloadFormat::FormUrlEncoded
    }
}

fn error_response(e: &Error) -> (StatusCode, String) {
    let status = match e {
        Error::Validation(_) | Error::MissingField(_) | Error::Parse { .. } | Error::Format(_) => {
            StatusCode::BAD_REQUEST
        }
        Error::Conflict { .. } => StatusCode::CONFLICT,
        Error::Io { .. } | Error::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, e.to_string())
}

async fn handle_report(
    State(state): State<Arc<IngestState>>,
    headers: HeaderMap,
    body: Bytes,
) -> (StatusCode, String) {
    let format = payload_format(&headers, &body);
    let result = parse_station_report(&body, format)
        .and_then(|report| enrich(report, state.station, Utc::now()))
        .and_then(|record| {
            let key = record.storage_key()?;
            store_record(&record, &state.data_root)?;
            Ok(key)
        });
    match result {
        Ok(key) => (StatusCode::OK, key.to_string()),
        Err(e) => {
            log::warn!("report rejected: {e}");
            error_response(&e)
        }
    }
}

async fn handle_healthz() -> &'static str {
    "ok"
}

pub fn router(state: IngestState) -> Router {
    Router::new()
        .route("/report", post(handle_report))
        .route("/healthz", get(handle_healthz))
        .with_state(Arc::new(state))
}

/// Serves until the process is interrupted.
pub async fn serve(listener: tokio::net::TcpListener, state: IngestState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
