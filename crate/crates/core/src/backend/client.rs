//! Protocol client: typed calls over a JSON transport, with retries, rate limiting
//! and response-shape validation.

use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::wire::{self, JudgeRequest, JudgeResponse};
use super::{
    BackendError, Corrector, Embedder, Judge, JudgeReport, Paraphraser, RateLimiter, RetryPolicy,
    SentimentClassifier, TextModel,
};
use crate::scoring::SentimentClass;
use crate::types::RelationTuple;

/// A failed exchange before the client attaches its backend id.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportFailure {
    /// HTTP status when the server answered, `None` when it could not be reached.
    pub status: Option<u16>,
    pub message: String,
}

/// Moves JSON bodies to an endpoint and back.
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportFailure>;
    fn get(&self, path: &str) -> Result<Value, TransportFailure>;
}

/// JSON over HTTP/1.1.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            bearer,
        }
    }

    fn finish(
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<Value, TransportFailure> {
        let mut resp = result.map_err(|e| TransportFailure {
            status: None,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportFailure {
                status: Some(status),
                message: format!("unreadable body: {e}"),
            })?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<wire::ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or(text);
            return Err(TransportFailure {
                status: Some(status),
                message,
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportFailure {
            status: Some(status),
            message: format!("malformed JSON body: {e}"),
        })
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportFailure> {
        let mut req = self.agent.post(format!("{}{}", self.base_url, path));
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        Self::finish(req.send_json(body))
    }

    fn get(&self, path: &str) -> Result<Value, TransportFailure> {
        let mut req = self.agent.get(format!("{}{}", self.base_url, path));
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        Self::finish(req.call())
    }
}

/// A named backend reached through a [`Transport`]. Implements every model trait;
/// which endpoints actually exist is up to the service behind it.
pub struct RemoteClient {
    id: String,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl RemoteClient {
    pub fn new(id: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            id: id.into(),
            transport,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::unlimited(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn client_id(&self) -> &str {
        &self.id
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        endpoint: &str,
        request: &Req,
    ) -> Result<Resp, BackendError> {
        let body = serde_json::to_value(request).map_err(|e| self.protocol(endpoint, e))?;
        let value = self.retry.run(|| {
            let _permit = self.limiter.acquire();
            self.transport
                .post(endpoint, &body)
                .map_err(|f| self.failure(endpoint, f))
        })?;
        serde_json::from_value(value).map_err(|e| self.protocol(endpoint, e))
    }

    fn failure(&self, endpoint: &str, f: TransportFailure) -> BackendError {
        match f.status {
            Some(status) => BackendError::Status {
                backend: self.id.clone(),
                endpoint: endpoint.into(),
                status,
                message: f.message,
            },
            None => BackendError::Transport {
                backend: self.id.clone(),
                endpoint: endpoint.into(),
                message: f.message,
            },
        }
    }

    fn protocol(&self, endpoint: &str, message: impl ToString) -> BackendError {
        BackendError::Protocol {
            backend: self.id.clone(),
            endpoint: endpoint.into(),
            message: message.to_string(),
        }
    }

    fn check_len(&self, endpoint: &str, expected: usize, got: usize) -> Result<(), BackendError> {
        if expected == got {
            Ok(())
        } else {
            Err(self.protocol(
                endpoint,
                format!("expected {expected} items in response, got {got}"),
            ))
        }
    }

    fn texts(&self, endpoint: &str, texts: &[String]) -> Result<Vec<String>, BackendError> {
        let resp: wire::TextsResponse = self.call(
            endpoint,
            &wire::TextsRequest {
                texts: texts.to_vec(),
            },
        )?;
        self.check_len(endpoint, texts.len(), resp.texts.len())?;
        Ok(resp.texts)
    }

    pub fn health(&self) -> Result<wire::HealthResponse, BackendError> {
        let value = self
            .transport
            .get(wire::HEALTH)
            .map_err(|f| self.failure(wire::HEALTH, f))?;
        serde_json::from_value(value).map_err(|e| self.protocol(wire::HEALTH, e))
    }
}

impl TextModel for RemoteClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompts: &[String]) -> Result<Vec<String>, BackendError> {
        let resp: wire::TextsResponse = self.call(
            wire::GENERATE,
            &wire::PromptsRequest {
                prompts: prompts.to_vec(),
            },
        )?;
        self.check_len(wire::GENERATE, prompts.len(), resp.texts.len())?;
        Ok(resp.texts)
    }
}

impl Paraphraser for RemoteClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn paraphrase(&self, texts: &[String]) -> Result<Vec<String>, BackendError> {
        self.texts(wire::PARAPHRASE, texts)
    }
}

impl Corrector for RemoteClient {
    fn correct(&self, texts: &[String]) -> Result<Vec<String>, BackendError> {
        self.texts(wire::CORRECT, texts)
    }
}

impl Embedder for RemoteClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let resp: wire::EmbedResponse = self.call(
            wire::EMBED,
            &wire::TextsRequest {
                texts: texts.to_vec(),
            },
        )?;
        self.check_len(wire::EMBED, texts.len(), resp.vectors.len())?;
        if let Some(first) = resp.vectors.first() {
            if resp.vectors.iter().any(|v| v.len() != first.len()) {
                return Err(self.protocol(wire::EMBED, "vectors differ in dimension"));
            }
        }
        Ok(resp.vectors)
    }
}

impl SentimentClassifier for RemoteClient {
    fn classify(&self, texts: &[String]) -> Result<Vec<SentimentClass>, BackendError> {
        let resp: wire::SentimentResponse = self.call(
            wire::SENTIMENT,
            &wire::TextsRequest {
                texts: texts.to_vec(),
            },
        )?;
        self.check_len(wire::SENTIMENT, texts.len(), resp.classes.len())?;
        resp.classes
            .into_iter()
            .map(|c| {
                SentimentClass::new(c).ok_or_else(|| {
                    self.protocol(wire::SENTIMENT, format!("class {c} outside 0..=2"))
                })
            })
            .collect()
    }
}

impl Judge for RemoteClient {
    fn judge(&self, text: &str, tuple: &RelationTuple) -> Result<JudgeReport, BackendError> {
        let resp: JudgeResponse = self.call(
            wire::JUDGE,
            &JudgeRequest {
                text: text.into(),
                e1: tuple.e1.clone(),
                r: tuple.r.clone(),
                e2: tuple.e2.clone(),
            },
        )?;
        resp.flags
            .validate()
            .map_err(|m| self.protocol(wire::JUDGE, m))?;
        Ok(JudgeReport {
            fluency: resp.flags.fluency == -1,
            accuracy: resp.flags.accuracy == -1,
            coherence: resp.flags.coherence == -1,
            relevance: resp.flags.relevance == -1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Mutex;

    /// Replays canned bodies and records what was sent.
    struct Canned {
        replies: Mutex<Vec<Result<Value, TransportFailure>>>,
        sent: Mutex<Vec<(String, Value)>>,
    }

    impl Canned {
        fn new(replies: Vec<Result<Value, TransportFailure>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies),
                sent: Mutex::new(Vec::new()),
            })
        }
    }

    impl Transport for Canned {
        fn post(&self, path: &str, body: &Value) -> Result<Value, TransportFailure> {
            self.sent.lock().unwrap().push((path.into(), body.clone()));
            self.replies.lock().unwrap().remove(0)
        }
        fn get(&self, _path: &str) -> Result<Value, TransportFailure> {
            Ok(json!({"status": "ok", "models": {}}))
        }
    }

    fn client(t: Arc<Canned>) -> RemoteClient {
        RemoteClient::new("svc", t).with_retry(RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 0,
        })
    }

    #[test]
    fn generate_sends_prompts_body() {
        let t = Canned::new(vec![Ok(json!({"texts": ["x"]}))]);
        let c = client(t.clone());
        assert_eq!(c.generate(&["p".into()]).unwrap(), vec!["x".to_string()]);
        let sent = t.sent.lock().unwrap();
        assert_eq!(sent[0].0, "/generate");
        assert_eq!(sent[0].1, json!({"prompts": ["p"]}));
    }

    #[test]
    fn length_mismatch_is_protocol_error() {
        let t = Canned::new(vec![Ok(json!({"texts": ["a", "b"]}))]);
        let err = client(t).paraphrase(&["only one".into()]).unwrap_err();
        assert!(matches!(err, BackendError::Protocol { .. }));
    }

    #[test]
    fn sentiment_range_enforced() {
        let t = Canned::new(vec![Ok(json!({"classes": [3]}))]);
        let err = client(t).classify(&["t".into()]).unwrap_err();
        assert!(err.to_string().contains("class 3"));
    }

    #[test]
    fn judge_flags_validated_and_mapped() {
        let t = Canned::new(vec![
            Ok(json!({"flags": {"fluency": 0, "accuracy": -1, "coherence": 0, "relevance": 0}})),
            Ok(json!({"flags": {"fluency": 1, "accuracy": 0, "coherence": 0, "relevance": 0}})),
        ]);
        let c = client(t.clone());
        let tuple = RelationTuple::new(
            "1",
            "A",
            crate::types::EntityType::Person,
            "spouse",
            "B",
            crate::types::EntityType::Person,
        )
        .unwrap();
        let r = c.judge("A met B.", &tuple).unwrap();
        assert!(r.accuracy && !r.fluency);
        assert!(c.judge("A met B.", &tuple).is_err());
        assert_eq!(
            t.sent.lock().unwrap()[0].1,
            json!({"text": "A met B.", "e1": "A", "r": "spouse", "e2": "B"})
        );
    }

    #[test]
    fn transient_failures_are_retried() {
        let down = || {
            Err(TransportFailure {
                status: Some(503),
                message: "busy".into(),
            })
        };
        let t = Canned::new(vec![down(), down(), Ok(json!({"texts": ["ok"]}))]);
        assert_eq!(client(t).correct(&["x".into()]).unwrap(), vec!["ok"]);

        let t = Canned::new(vec![down(), down(), down()]);
        let err = client(t).correct(&["x".into()]).unwrap_err();
        assert!(matches!(err, BackendError::Status { status: 503, .. }));
    }

    #[test]
    fn truncated_body_is_protocol_error() {
        let t = Canned::new(vec![Ok(json!({"vectors": [[1.0, 0.0], [1.0]]}))]);
        assert!(client(t).embed(&["a".into(), "b".into()]).is_err());
        let t = Canned::new(vec![Ok(json!({"unexpected": true}))]);
        assert!(matches!(
            client(t).embed(&["a".into()]),
            Err(BackendError::Protocol { .. })
        ));
    }
}
