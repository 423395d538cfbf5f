//! HTTP front end. Every route except `/ui` is forwarded to
//! [`api::dispatch`] under a single store lock, so requests are serialized
//! and each decision call is atomic.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Query, Request as HttpRequest, State};
use axum::http::{header, HeaderMap, Method as HttpMethod, StatusCode};
use axum::response::{Html, IntoResponse, Response as HttpResponse};
use axum::routing::get;
use axum::{Json, Router};
use tempocurate_core::{Database, Timestamp};
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, Method, Request};

/// Header carrying a decision timestamp; honoured only in test mode.
pub const NOW_HEADER: &str = "x-tempocurate-now";

const UI_PLACEHOLDER: &str = "<!doctype html><title>tempocurate</title>\
<p>No web UI bundled. Start the server with <code>--ui DIR</code> to serve one here.</p>";

#[derive(Debug, Clone, Default)]
pub struct Config {
    /// Trust the clock header so scripted runs are reproducible.
    pub test_mode: bool,
    /// Static files served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

struct AppState {
    db: Mutex<Database>,
    test_mode: bool,
}

pub fn router(db: Database, config: Config) -> Router {
    let state = Arc::new(AppState {
        db: Mutex::new(db),
        test_mode: config.test_mode,
    });
    let router = Router::new();
    let router = match config.ui_dir {
        Some(dir) => router.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => router.nest_service("/ui", get(|| async { Html(UI_PLACEHOLDER) })),
    };
    router
        .fallback(handle)
        .with_state(state)
}

/// Binds and serves until ctrl-c. Fails fast if the address is taken.
pub async fn serve(db: Database, addr: SocketAddr, config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            std::io::Error::new(e.kind(), format!("port {} is already in use", addr.port()))
        } else {
            e
        }
    })?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(db, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error(e: ApiError) -> HttpResponse {
    let r = e.into_response();
    (StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), Json(r.body)).into_response()
}

async fn handle(State(state): State<Arc<AppState>>, req: HttpRequest) -> HttpResponse {
    let method = match *req.method() {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        _ => return error(ApiError::new(405, "invalid_request", "only GET and POST are supported")),
    };
    let path = req.uri().path().to_string();
    let query = match Query::<BTreeMap<String, String>>::try_from_uri(req.uri()) {
        Ok(Query(q)) => q,
        Err(e) => return error(ApiError::new(400, "invalid_request", e.body_text())),
    };
    let now = match clock(req.headers(), state.test_mode) {
        Ok(now) => now,
        Err(e) => return error(e),
    };
    let body = match read_body(req, &state).await {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    let api_req = Request {
        method,
        path,
        query,
        body,
        now,
    };
    let response = {
        let mut db = state.db.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        api::dispatch(&mut *db, &api_req)
    };
    (StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), Json(response.body)).into_response()
}

fn clock(headers: &HeaderMap, test_mode: bool) -> Result<Option<Timestamp>, ApiError> {
    if !test_mode {
        return Ok(None);
    }
    headers
        .get(NOW_HEADER)
        .map(|v| {
            v.to_str()
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ApiError::new(400, "invalid_request", format!("{NOW_HEADER} must be an RFC 3339 timestamp")))
        })
        .transpose()
}

/// Raw bytes, or the first file part of a multipart form.
async fn read_body(req: HttpRequest, state: &Arc<AppState>) -> Result<Vec<u8>, ApiError> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        return Bytes::from_request(req, state)
            .await
            .map(|b| b.to_vec())
            .map_err(|e| ApiError::new(400, "invalid_request", e.body_text()));
    }
    let mut form = Multipart::from_request(req, state)
        .await
        .map_err(|e| ApiError::new(400, "invalid_request", e.body_text()))?;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new(400, "invalid_request", e.body_text()))?
    {
        if field.file_name().is_some() || field.name() == Some("file") {
            let bytes = field.bytes().await.map_err(|e| ApiError::new(400, "invalid_request", e.body_text()))?;
            return Ok(bytes.to_vec());
        }
    }
    Err(ApiError::new(400, "invalid_request", "multipart form has no file part"))
}
