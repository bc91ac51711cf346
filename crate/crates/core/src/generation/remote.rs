//! Remote generator protocol.
//!
//! A remote generator (for example a neural seq2seq service) receives a JSON
//! request body and answers with scored candidate texts:
//!
//! ```json
//! {"v":1,"context":["..."],"topic":["..."],"k":5,"seed":42,"max_len":20}
//! {"v":1,"candidates":[{"text":"...","score":-3.2}]}
//! ```
//!
//! Any failure (timeout, transport, malformed body) is reported as a
//! [`RemoteError`], which callers treat as the signal to fall back to the
//! in-process model.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Candidate, CandidateSource};
use crate::corpus::tokenize;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(2000);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub v: u32,
    pub context: Vec<String>,
    pub topic: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub v: u32,
    pub candidates: Vec<WireCandidate>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("remote generator timed out after {0:?}")]
    Timeout(Duration),
    #[error("remote generator unreachable: {0}")]
    Transport(String),
    #[error("remote generator protocol error: {0}")]
    Protocol(String),
}

/// Request/response exchange with a remote generator.
pub trait Transport: Send + Sync {
    fn exchange(&self, body: &str, timeout: Duration) -> Result<String, RemoteError>;
}

/// HTTP POST of the JSON body to a fixed endpoint.
pub struct HttpTransport {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, RemoteError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), client })
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, body: &str, timeout: Duration) -> Result<String, RemoteError> {
        let response = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(body.to_string())
            .timeout(timeout)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| {
                if e.is_timeout() {
                    RemoteError::Timeout(timeout)
                } else {
                    RemoteError::Transport(e.to_string())
                }
            })?;
        Ok(response)
    }
}

pub struct RemoteGenerator {
    transport: Box<dyn Transport>,
    timeout: Duration,
}

impl RemoteGenerator {
    pub fn new(transport: Box<dyn Transport>, timeout: Duration) -> Self {
        Self { transport, timeout }
    }

    pub fn http(endpoint: &str, timeout: Duration) -> Result<Self, RemoteError> {
        Ok(Self::new(Box::new(HttpTransport::new(endpoint)?), timeout))
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn request(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, RemoteError> {
        let body = serde_json::to_string(request).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        let reply = self.transport.exchange(&body, self.timeout)?;
        let response: GeneratorResponse =
            serde_json::from_str(&reply).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        validate(request, &response)?;
        Ok(response)
    }

    /// Ask the remote side for candidates, tagged [`CandidateSource::Remote`].
    pub fn request_candidates(&self, request: &GeneratorRequest) -> Result<Vec<Candidate>, RemoteError> {
        let response = self.request(request)?;
        Ok(response
            .candidates
            .into_iter()
            .map(|c| {
                let mut tokens = tokenize(&c.text);
                tokens.truncate(request.max_len);
                Candidate { tokens, lm_logprob: c.score, source: CandidateSource::Remote }
            })
            .collect())
    }
}

fn validate(request: &GeneratorRequest, response: &GeneratorResponse) -> Result<(), RemoteError> {
    let bad = |msg: String| Err(RemoteError::Protocol(msg));
    if response.v != PROTOCOL_VERSION {
        return bad(format!("unsupported version {}", response.v));
    }
    if response.candidates.len() > request.k {
        return bad(format!("{} candidates for k = {}", response.candidates.len(), request.k));
    }
    for (i, c) in response.candidates.iter().enumerate() {
        if !tokenize(&c.text).iter().any(|t| t.chars().any(char::is_alphanumeric)) {
            return bad(format!("candidate {i} has no words"));
        }
        if !c.score.is_finite() || c.score > 0.0 {
            return bad(format!("candidate {i} score {} is not a log-probability", c.score));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(Result<String, RemoteError>);

    impl Transport for Scripted {
        fn exchange(&self, _body: &str, _timeout: Duration) -> Result<String, RemoteError> {
            self.0.clone()
        }
    }

    fn request(k: usize) -> GeneratorRequest {
        GeneratorRequest { v: 1, context: vec!["hello".into()], topic: vec![], k, seed: 1, max_len: 4 }
    }

    fn generator(reply: Result<&str, RemoteError>) -> RemoteGenerator {
        RemoteGenerator::new(Box::new(Scripted(reply.map(String::from))), DEFAULT_TIMEOUT)
    }

    #[test]
    fn request_wire_field_names() {
        let json = serde_json::to_value(request(3)).unwrap();
        let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["context", "k", "max_len", "seed", "topic", "v"]);
    }

    #[test]
    fn order_preserved_and_tagged() {
        let g = generator(Ok(r#"{"v":1,"candidates":[{"text":"one","score":-1},{"text":"two two","score":-2},{"text":"three","score":0}]}"#));
        let c = g.request_candidates(&request(3)).unwrap();
        let texts: Vec<String> = c.iter().map(|c| c.tokens.join(" ")).collect();
        assert_eq!(texts, ["one", "two two", "three"]);
        assert!(c.iter().all(|c| c.source == CandidateSource::Remote));
    }

    #[test]
    fn long_text_truncated() {
        let g = generator(Ok(r#"{"v":1,"candidates":[{"text":"a b c d e f","score":-1}]}"#));
        assert_eq!(g.request_candidates(&request(1)).unwrap()[0].tokens.len(), 4);
    }

    #[test]
    fn malformed_responses_rejected() {
        for body in [
            "not json",
            r#"{"v":2,"candidates":[]}"#,
            r#"{"v":1,"candidates":[{"text":"a","score":-1},{"text":"b","score":-1}]}"#,
            r#"{"v":1,"candidates":[{"text":"...","score":-1}]}"#,
            r#"{"v":1,"candidates":[{"text":"a","score":3.0}]}"#,
            r#"{"v":1}"#,
        ] {
            let err = generator(Ok(body)).request_candidates(&request(1)).unwrap_err();
            assert!(matches!(err, RemoteError::Protocol(_)), "{body}: {err}");
        }
    }

    #[test]
    fn timeout_passes_through() {
        let g = generator(Err(RemoteError::Timeout(DEFAULT_TIMEOUT)));
        assert_eq!(g.request_candidates(&request(1)), Err(RemoteError::Timeout(DEFAULT_TIMEOUT)));
    }
}
