//! Where CLI requests go: straight to a local database, or over HTTP to a
//! running service. Both produce the same [`Response`] for the same request.

use std::path::Path;

use serde_json::Value;
use tempocurate_core::Database;
use thiserror::Error;

use crate::api::{self, Method, Request, Response};
use crate::service::NOW_HEADER;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot open database: {0}")]
    Open(#[from] tempocurate_core::Error),
    #[error("request to {url} failed: {source}")]
    Http { url: String, source: ureq::Error },
    #[error("server at {0} returned a non-JSON body")]
    BadBody(String),
}

pub enum Backend {
    Direct(Database),
    Remote { base: String, agent: ureq::Agent },
}

impl Backend {
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        Ok(Backend::Direct(Database::open(path)?))
    }

    pub fn remote(base: &str) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Backend::Remote {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, ClientError> {
        match self {
            Backend::Direct(db) => Ok(api::dispatch(db, req)),
            Backend::Remote { base, agent } => remote_call(agent, base, req),
        }
    }
}

fn remote_call(agent: &ureq::Agent, base: &str, req: &Request) -> Result<Response, ClientError> {
    let url = format!("{base}{}", req.path);
    let http = |source| ClientError::Http { url: url.clone(), source };
    let mut resp = match req.method {
        Method::Get => {
            let mut r = agent.get(&url);
            for (k, v) in &req.query {
                r = r.query(k, v);
            }
            if let Some(now) = req.now {
                r = r.header(NOW_HEADER, now.to_string());
            }
            r.call().map_err(http)?
        }
        Method::Post => {
            let mut r = agent.post(&url);
            for (k, v) in &req.query {
                r = r.query(k, v);
            }
            if let Some(now) = req.now {
                r = r.header(NOW_HEADER, now.to_string());
            }
            let content_type = if req.path == "/uploads" { "text/csv" } else { "application/json" };
            r.header("content-type", content_type).send(&req.body[..]).map_err(http)?
        }
    };
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(http)?;
    let body: Value = serde_json::from_str(&text).map_err(|_| ClientError::BadBody(base.to_string()))?;
    Ok(Response { status, body })
}
