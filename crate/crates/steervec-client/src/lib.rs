//! Blocking client for the steervec HTTP service.
//!
//! Every method mirrors one service route and exchanges the same
//! serde types the service consumes, so results match in-process
//! calls into `steervec-core` exactly.

use serde::Deserialize;
use steervec_core::api::{SolveRequest, SolveResponse};
use steervec_core::bench::{BenchConfig, GapSummary};
use steervec_core::check::{CheckOptions, PropertyResult};
use steervec_core::session::{SessionConfig, SessionSummary};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),

    /// The service answered with a non-success status. `message` carries the
    /// body's `error` field when present, otherwise the raw body.
    #[error("service error (status {status}): {message}")]
    Service { status: u16, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Deserialize)]
struct SessionOpened {
    session_id: String,
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8787`.
    pub fn new(base: impl Into<String>) -> Result<Self> {
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        let http = reqwest::blocking::Client::builder().build()?;
        Ok(Client { base, http })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    /// Turns a non-success response into `ClientError::Service`, decoding the
    /// `{"error": ...}` body the service emits.
    fn take_json<T: serde::de::DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let message = match resp.text() {
            Ok(body) => match serde_json::from_str::<ErrorBody>(&body) {
                Ok(e) => e.error,
                Err(_) => body,
            },
            Err(_) => String::new(),
        };
        Err(ClientError::Service { status: status.as_u16(), message })
    }

    pub fn health(&self) -> Result<()> {
        let resp = self.http.get(self.url("/healthz")).send()?;
        let _: serde_json::Value = Self::take_json(resp)?;
        Ok(())
    }

    pub fn solve(&self, req: &SolveRequest) -> Result<SolveResponse> {
        let resp = self.http.post(self.url("/v1/solve")).json(req).send()?;
        Self::take_json(resp)
    }

    pub fn bench(&self, config: &BenchConfig) -> Result<GapSummary> {
        let resp = self.http.post(self.url("/v1/bench")).json(config).send()?;
        Self::take_json(resp)
    }

    pub fn check(&self, opts: &CheckOptions) -> Result<Vec<PropertyResult>> {
        let resp = self.http.post(self.url("/v1/check")).json(opts).send()?;
        Self::take_json(resp)
    }

    pub fn open_session(&self, config: &SessionConfig) -> Result<String> {
        let resp = self.http.post(self.url("/v1/sessions")).json(config).send()?;
        let opened: SessionOpened = Self::take_json(resp)?;
        Ok(opened.session_id)
    }

    /// Sends one raw protocol line and returns the raw response line,
    /// byte for byte as the session engine produced it. Malformed requests
    /// come back as in-band error lines, not transport errors.
    pub fn step_line(&self, session_id: &str, line: &str) -> Result<String> {
        let resp = self
            .http
            .post(self.url(&format!("/v1/sessions/{session_id}/step")))
            .header(reqwest::header::CONTENT_TYPE, "text/plain")
            .body(line.to_string())
            .send()?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.text()?);
        }
        let message = match resp.text() {
            Ok(body) => match serde_json::from_str::<ErrorBody>(&body) {
                Ok(e) => e.error,
                Err(_) => body,
            },
            Err(_) => String::new(),
        };
        Err(ClientError::Service { status: status.as_u16(), message })
    }

    pub fn close_session(&self, session_id: &str) -> Result<SessionSummary> {
        let resp = self.http.delete(self.url(&format!("/v1/sessions/{session_id}"))).send()?;
        Self::take_json(resp)
    }
}
