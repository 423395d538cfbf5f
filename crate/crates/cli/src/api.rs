//! Transport-neutral request handling. The HTTP service and the CLI's direct
//! mode both go through [`dispatch`], so every endpoint behaves identically
//! whichever way it is reached.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tempocurate_core::cell::percent_decode;
use tempocurate_core::ingest::parse_csv;
use tempocurate_core::provenance::{
    current_value, first_value, most_updated, rejected_log, update_correlation, update_counts, update_counts_all, value_range,
};
use tempocurate_core::{CellKey, Curation, Date, Dimension, Error, Predicate, Status, Timestamp, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

/// One API call. `path` keeps its percent-encoding; `query` is decoded.
#[derive(Debug, Clone)]
pub struct Request {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: Vec<u8>,
    /// Decision timestamp override; `None` means the wall clock.
    pub now: Option<Timestamp>,
}

impl Request {
    pub fn get(path: impl Into<String>) -> Self {
        Request {
            method: Method::Get,
            path: path.into(),
            query: BTreeMap::new(),
            body: Vec::new(),
            now: None,
        }
    }

    pub fn post(path: impl Into<String>, body: Vec<u8>) -> Self {
        Request {
            method: Method::Post,
            ..Request::get(path)
        }
        .with_body(body)
    }

    fn with_body(mut self, body: Vec<u8>) -> Self {
        self.body = body;
        self
    }

    pub fn param(mut self, key: &str, value: impl Into<String>) -> Self {
        self.query.insert(key.to_string(), value.into());
        self
    }

    pub fn opt_param(self, key: &str, value: Option<impl Into<String>>) -> Self {
        match value {
            Some(v) => self.param(key, v),
            None => self,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Value,
}

impl Response {
    fn ok(body: Value) -> Self {
        Response { status: 200, body }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "invalid_request", message)
    }

    pub fn into_response(self) -> Response {
        Response {
            status: self.status,
            body: json!({ "error": { "code": self.code, "message": self.message } }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::Ingest(_) => (400, "invalid_csv"),
            Error::Period(_) | Error::Cell(_) | Error::EmptyFileId => (400, "invalid_request"),
            Error::UnknownCell(_) => (404, "unknown_cell"),
            Error::UnknownProposal(_) => (404, "unknown_update"),
            Error::NoVersionAtDate { .. } => (404, "no_version_at_date"),
            Error::NotPending { .. } => (409, "not_pending"),
            Error::DuplicateUpload(_) => (409, "duplicate_upload"),
            Error::ReleaseOutOfOrder { .. } => (409, "release_out_of_order"),
            Error::UndefinedCorrelation(_) => (422, "undefined_correlation"),
            Error::Store(_) | Error::Rewrite(_) | Error::Corrupt(_) => (500, "internal"),
        };
        let message = match &e {
            Error::Ingest(ingest) if !ingest.line_errors().is_empty() => ingest
                .line_errors()
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join("; "),
            _ => e.to_string(),
        };
        ApiError::new(status, code, message)
    }
}

type ApiResult = Result<Value, ApiError>;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptBody {
    pub ids: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective: Option<Date>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RejectBody {
    pub ids: Vec<i64>,
}

/// Routes one request against the store.
pub fn dispatch<C: Curation + ?Sized>(store: &mut C, req: &Request) -> Response {
    match route(store, req) {
        Ok(body) => Response::ok(body),
        Err(e) => e.into_response(),
    }
}

fn route<C: Curation + ?Sized>(store: &mut C, req: &Request) -> ApiResult {
    let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
    match (req.method, segments.as_slice()) {
        (Method::Get, ["health"]) => Ok(json!({ "status": "ok" })),
        (Method::Post, ["uploads"]) => upload(store, req),
        (Method::Get, ["uploads"]) => Ok(json!({ "uploads": store.uploads()? })),
        (Method::Get, ["updates"]) => list_updates(store, req),
        (Method::Post, ["updates", "accept"]) => {
            let body: AcceptBody = json_body(req)?;
            let decided = store.accept(&body.ids, body.effective, now(req))?;
            Ok(json!({ "accepted": decided }))
        }
        (Method::Post, ["updates", "reject"]) => {
            let body: RejectBody = json_body(req)?;
            let decided = store.reject(&body.ids, now(req))?;
            Ok(json!({ "rejected": decided }))
        }
        (Method::Get, ["cells", week, dim, sub, "history"]) => {
            let cell = cell_from_segments(week, dim, sub)?;
            let versions = store.history(&cell)?;
            if versions.is_empty() {
                return Err(Error::UnknownCell(cell).into());
            }
            Ok(json!({ "cell": cell, "versions": versions }))
        }
        (Method::Get, ["snapshot"]) => {
            let asof = opt_date(req, "asof")?.unwrap_or_else(Date::today);
            let cells: Vec<Value> = store
                .snapshot(asof)?
                .into_iter()
                .map(|(k, v)| {
                    json!({
                        "week": k.week, "dimension": k.dimension, "subcategory": k.subcategory,
                        "count": v.count, "file_id": v.file_id,
                    })
                })
                .collect();
            Ok(json!({ "asof": asof, "cells": cells }))
        }
        (Method::Get, ["provenance", query]) => provenance(store, req, query),
        (m, _) => Err(ApiError::new(
            404,
            "not_found",
            format!("no endpoint {} {}", if m == Method::Get { "GET" } else { "POST" }, req.path),
        )),
    }
}

fn now(req: &Request) -> Timestamp {
    req.now.unwrap_or_else(Timestamp::now)
}

fn required<'a>(req: &'a Request, key: &str) -> Result<&'a str, ApiError> {
    req.query
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter {key:?}")))
}

fn opt_date(req: &Request, key: &str) -> Result<Option<Date>, ApiError> {
    req.query
        .get(key)
        .map(|s| s.parse::<Date>().map_err(|e| ApiError::bad_request(format!("{key}: {e}"))))
        .transpose()
}

fn dimension(s: &str) -> Result<Dimension, ApiError> {
    s.parse().map_err(|e: tempocurate_core::cell::CellError| ApiError::bad_request(e.to_string()))
}

fn json_body<T: serde::de::DeserializeOwned>(req: &Request) -> Result<T, ApiError> {
    serde_json::from_slice(&req.body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn cell_from_segments(week: &str, dim: &str, sub: &str) -> Result<CellKey, ApiError> {
    let decode = |s: &str| percent_decode(s).ok_or_else(|| ApiError::bad_request(format!("bad percent-encoding in {s:?}")));
    let week: Date = decode(week)?.parse().map_err(|e| ApiError::bad_request(format!("week: {e}")))?;
    Ok(CellKey::new(week, dimension(&decode(dim)?)?, decode(sub)?).map_err(Error::from)?)
}

fn cell_param(req: &Request) -> Result<CellKey, ApiError> {
    Ok(CellKey::parse_address(required(req, "cell")?).map_err(Error::from)?)
}

fn window(req: &Request) -> Result<Window, ApiError> {
    let all = Window::all_time();
    Ok(Window::new(
        opt_date(req, "from")?.unwrap_or(all.from),
        opt_date(req, "to")?.unwrap_or(all.to),
    ))
}

fn upload<C: Curation + ?Sized>(store: &mut C, req: &Request) -> ApiResult {
    let file_id = required(req, "file_id")?;
    let release: Date = required(req, "release_date")?
        .parse()
        .map_err(|e| ApiError::bad_request(format!("release_date: {e}")))?;
    let parsed = parse_csv(&req.body, file_id, release).map_err(Error::from)?;
    Ok(serde_json::to_value(store.ingest(parsed)?).expect("report serializes"))
}

fn list_updates<C: Curation + ?Sized>(store: &mut C, req: &Request) -> ApiResult {
    let status: Status = match req.query.get("status") {
        Some(s) => s.parse().map_err(ApiError::bad_request)?,
        None => Status::Pending,
    };
    match req.query.get("group").map(String::as_str) {
        None => {
            let mut groups = store.list(status, false)?;
            let updates = groups.pop().map(|g| g.proposals).unwrap_or_default();
            Ok(json!({ "status": status, "updates": updates }))
        }
        Some("week") => Ok(json!({ "status": status, "groups": store.list(status, true)? })),
        Some(other) => Err(ApiError::bad_request(format!("unsupported grouping {other:?}; use group=week"))),
    }
}

fn provenance<C: Curation + ?Sized>(store: &mut C, req: &Request, query: &str) -> ApiResult {
    let value = match query {
        "first" => {
            let cell = cell_param(req)?;
            json!({ "cell": cell, "first": first_value(store, &cell)? })
        }
        "current" => {
            let cell = cell_param(req)?;
            let asof = opt_date(req, "asof")?.unwrap_or_else(Date::today);
            json!({ "cell": cell, "asof": asof, "value": current_value(store, &cell, asof)? })
        }
        "range" => {
            let cell = cell_param(req)?;
            json!({ "cell": cell, "range": value_range(store, &cell)? })
        }
        "rejected" => {
            let mut filters = Vec::new();
            if let Some(w) = opt_date(req, "week")? {
                filters.push(Predicate::Week(w));
            }
            if let Some(d) = req.query.get("dimension") {
                filters.push(Predicate::Dimension(dimension(d)?));
            }
            if let Some(s) = req.query.get("subcategory") {
                filters.push(Predicate::Subcategory(s.clone()));
            }
            json!({ "rejected": rejected_log(store, &Predicate::And(filters))? })
        }
        "update-counts" => {
            let dim = dimension(required(req, "dimension")?)?;
            let w = window(req)?;
            let counts = match req.query.get("subcategories") {
                Some(list) => {
                    let subs: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                    update_counts(store, dim, &subs, w)?
                }
                None => update_counts_all(store, dim, w)?,
            };
            json!({ "dimension": dim, "window": w, "counts": counts })
        }
        "most-updated" => {
            let dim = dimension(required(req, "dimension")?)?;
            let w = window(req)?;
            let best = most_updated(store, dim, w)?;
            json!({ "dimension": dim, "window": w, "subcategory": best.subcategory, "count": best.count })
        }
        "correlation" => {
            let a = (dimension(required(req, "a_dim")?)?, required(req, "a_sub")?);
            let b = (dimension(required(req, "b_dim")?)?, required(req, "b_sub")?);
            let c = update_correlation(store, a, b)?;
            json!({
                "a": { "dimension": a.0, "subcategory": a.1, "updates": c.a },
                "b": { "dimension": b.0, "subcategory": b.1, "updates": c.b },
                "uploads": c.uploads,
                "correlation": c.correlation,
            })
        }
        other => return Err(ApiError::new(404, "not_found", format!("no provenance query {other:?}"))),
    };
    Ok(value)
}
