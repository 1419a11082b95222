//! In-process implementation of the model-service protocol backed by the mocks.
//!
//! `MockService` answers exactly what a conforming remote service would, including
//! error bodies for malformed requests, so the same [`RemoteClient`](super::RemoteClient)
//! code path is exercised with or without a network.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::client::{Transport, TransportFailure};
use super::mock::{
    MockCorrector, MockEmbedder, MockJudge, MockParaphraser, MockSentiment, MockTextModel,
};
use super::wire::{self, JudgeFlags, JudgeRequest, JudgeResponse};
use super::{
    BackendError, Corrector, Embedder, Judge, Paraphraser, SentimentClassifier, TextModel,
};
use crate::types::{EntityType, RelationTuple};

pub struct MockService {
    id: String,
    text: Box<dyn TextModel>,
    paraphraser: Box<dyn Paraphraser>,
    corrector: Box<dyn Corrector>,
    sentiment: Box<dyn SentimentClassifier>,
    embedder: Box<dyn Embedder>,
    judge: Box<dyn Judge>,
}

impl MockService {
    /// A service whose every endpoint is backed by the default mock for `id`.
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            text: Box::new(MockTextModel::new(id.clone())),
            paraphraser: Box::new(MockParaphraser::new(id.clone())),
            corrector: Box::new(MockCorrector),
            sentiment: Box::new(MockSentiment),
            embedder: Box::new(MockEmbedder::default()),
            judge: Box::new(MockJudge),
            id,
        }
    }

    pub fn with_text_model(mut self, model: Box<dyn TextModel>) -> Self {
        self.text = model;
        self
    }

    pub fn with_paraphraser(mut self, p: Box<dyn Paraphraser>) -> Self {
        self.paraphraser = p;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Dispatches one request body; errors carry the HTTP status a server would send.
    pub fn handle_post(&self, path: &str, body: &Value) -> Result<Value, TransportFailure> {
        let out = match path {
            wire::GENERATE => {
                let req: wire::PromptsRequest = parse(path, body)?;
                json!({ "texts": self.text.generate(&req.prompts).map_err(upstream)? })
            }
            wire::PARAPHRASE => {
                let req: wire::TextsRequest = parse(path, body)?;
                json!({ "texts": self.paraphraser.paraphrase(&req.texts).map_err(upstream)? })
            }
            wire::CORRECT => {
                let req: wire::TextsRequest = parse(path, body)?;
                json!({ "texts": self.corrector.correct(&req.texts).map_err(upstream)? })
            }
            wire::SENTIMENT => {
                let req: wire::TextsRequest = parse(path, body)?;
                let classes: Vec<i64> = self
                    .sentiment
                    .classify(&req.texts)
                    .map_err(upstream)?
                    .into_iter()
                    .map(|c| c.value())
                    .collect();
                json!({ "classes": classes })
            }
            wire::EMBED => {
                let req: wire::TextsRequest = parse(path, body)?;
                json!({ "vectors": self.embedder.embed(&req.texts).map_err(upstream)? })
            }
            wire::JUDGE => {
                let req: JudgeRequest = parse(path, body)?;
                // The judge only reads entity surfaces and the relation.
                let tuple = RelationTuple {
                    id: String::new(),
                    e1: req.e1,
                    t1: EntityType::Location,
                    r: req.r,
                    e2: req.e2,
                    t2: EntityType::Location,
                };
                let report = self.judge.judge(&req.text, &tuple).map_err(upstream)?;
                let flag = |b: bool| if b { -1 } else { 0 };
                let resp = JudgeResponse {
                    flags: JudgeFlags {
                        fluency: flag(report.fluency),
                        accuracy: flag(report.accuracy),
                        coherence: flag(report.coherence),
                        relevance: flag(report.relevance),
                    },
                    rationale: None,
                };
                serde_json::to_value(resp).expect("serializable")
            }
            _ => return Err(error(404, path, "unknown endpoint")),
        };
        Ok(out)
    }

    pub fn health(&self) -> Value {
        let models: BTreeMap<&str, &str> = wire::MODEL_ENDPOINTS
            .iter()
            .map(|e| (*e, self.id.as_str()))
            .collect();
        json!({ "status": "ok", "models": models })
    }
}

fn parse<T: DeserializeOwned>(path: &str, body: &Value) -> Result<T, TransportFailure> {
    serde_json::from_value(body.clone())
        .map_err(|e| error(400, path, &format!("malformed request: {e}")))
}

fn upstream(e: BackendError) -> TransportFailure {
    TransportFailure {
        status: Some(if e.is_transient() { 503 } else { 500 }),
        message: e.to_string(),
    }
}

fn error(status: u16, path: &str, message: &str) -> TransportFailure {
    TransportFailure {
        status: Some(status),
        message: format!("{path}: {message}"),
    }
}

/// Serialized error body for a failure, as a server would send it.
pub fn error_body(path: &str, failure: &TransportFailure) -> Value {
    serde_json::to_value(wire::ErrorBody {
        error: failure.message.clone(),
        endpoint: path.to_string(),
    })
    .expect("serializable")
}

impl Transport for MockService {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportFailure> {
        self.handle_post(path, body)
    }

    fn get(&self, path: &str) -> Result<Value, TransportFailure> {
        if path == wire::HEALTH {
            Ok(self.health())
        } else {
            Err(error(404, path, "unknown endpoint"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::Faults;
    use crate::backend::{RemoteClient, RetryPolicy};
    use std::sync::Arc;

    #[test]
    fn malformed_request_is_400() {
        let s = MockService::new("m");
        let err = s
            .handle_post(wire::PARAPHRASE, &json!({"prompts": ["x"]}))
            .unwrap_err();
        assert_eq!(err.status, Some(400));
        let err = s.handle_post("/nope", &json!({})).unwrap_err();
        assert_eq!(err.status, Some(404));
    }

    #[test]
    fn client_round_trip_through_service() {
        let svc = Arc::new(MockService::new("m"));
        let c = RemoteClient::new("m", svc);
        let texts = vec!["a wonderful day".to_string(), "the the end".to_string()];
        assert_eq!(c.classify(&texts).unwrap()[0].value(), 2);
        assert_eq!(c.correct(&texts).unwrap()[1], "The end.");
        assert_eq!(c.embed(&texts).unwrap().len(), 2);
        assert_eq!(c.health().unwrap().models.len(), 6);
    }

    #[test]
    fn failing_model_surfaces_as_retryable_status() {
        let model = MockTextModel::new("m").with_faults(Faults {
            always_fail: true,
            ..Default::default()
        });
        let svc = Arc::new(MockService::new("m").with_text_model(Box::new(model)));
        let c = RemoteClient::new("m", svc).with_retry(RetryPolicy {
            max_attempts: 2,
            base_delay_ms: 0,
        });
        let err = c.generate(&["p".into()]).unwrap_err();
        assert!(matches!(err, BackendError::Status { status: 503, .. }));
    }
}
