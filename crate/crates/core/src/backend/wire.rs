//! JSON bodies of the shared model-service protocol.
//!
//! | endpoint          | request                    | response                          |
//! |-------------------|----------------------------|-----------------------------------|
//! | `POST /generate`  | `{prompts: [string]}`      | `{texts: [string]}`               |
//! | `POST /paraphrase`| `{texts: [string]}`        | `{texts: [string]}`               |
//! | `POST /correct`   | `{texts: [string]}`        | `{texts: [string]}`               |
//! | `POST /sentiment` | `{texts: [string]}`        | `{classes: [0|1|2]}`              |
//! | `POST /embed`     | `{texts: [string]}`        | `{vectors: [[number]]}`           |
//! | `POST /judge`     | `{text, e1, r, e2}`        | `{flags: {fluency, accuracy, coherence, relevance}, rationale?}` |
//! | `GET /health`     |                            | `{status, models: {endpoint: id}}`|
//!
//! Every batch endpoint answers with a list of the request's length. Judge flags
//! take only the values `0` and `-1`. Errors use `{error, endpoint}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const GENERATE: &str = "/generate";
pub const PARAPHRASE: &str = "/paraphrase";
pub const CORRECT: &str = "/correct";
pub const SENTIMENT: &str = "/sentiment";
pub const EMBED: &str = "/embed";
pub const JUDGE: &str = "/judge";
pub const HEALTH: &str = "/health";

/// The six model endpoints, in the order `/health` reports them.
pub const MODEL_ENDPOINTS: [&str; 6] = [GENERATE, PARAPHRASE, CORRECT, SENTIMENT, EMBED, JUDGE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptsRequest {
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextsRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextsResponse {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentResponse {
    pub classes: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub text: String,
    pub e1: String,
    pub r: String,
    pub e2: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeFlags {
    pub fluency: i64,
    pub accuracy: i64,
    pub coherence: i64,
    pub relevance: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub flags: JudgeFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub endpoint: String,
}

impl JudgeFlags {
    /// Checks that every axis is `0` or `-1`.
    pub fn validate(&self) -> Result<(), String> {
        for (axis, v) in [
            ("fluency", self.fluency),
            ("accuracy", self.accuracy),
            ("coherence", self.coherence),
            ("relevance", self.relevance),
        ] {
            if v != 0 && v != -1 {
                return Err(format!("flag {axis} = {v}, expected 0 or -1"));
            }
        }
        Ok(())
    }
}
