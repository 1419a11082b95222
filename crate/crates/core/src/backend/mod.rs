//! Model backends: the traits every stage consumes, the JSON wire protocol they
//! speak, and the transports (HTTP or in-process mock) that carry it.

pub mod client;
pub mod mock;
pub mod service;
pub mod wire;

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::SentimentClass;
use crate::types::RelationTuple;

pub use client::{HttpTransport, RemoteClient, Transport};
pub use service::MockService;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend {backend}: transport failure on {endpoint}: {message}")]
    Transport {
        backend: String,
        endpoint: String,
        message: String,
    },
    #[error("backend {backend}: {endpoint} returned status {status}: {message}")]
    Status {
        backend: String,
        endpoint: String,
        status: u16,
        message: String,
    },
    #[error("backend {backend}: protocol violation on {endpoint}: {message}")]
    Protocol {
        backend: String,
        endpoint: String,
        message: String,
    },
}

impl BackendError {
    /// Transport failures, 429 and 5xx are worth retrying; protocol violations are not.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Protocol { .. } => false,
        }
    }

    pub fn backend(&self) -> &str {
        match self {
            BackendError::Transport { backend, .. }
            | BackendError::Status { backend, .. }
            | BackendError::Protocol { backend, .. } => backend,
        }
    }
}

/// Prompt-in, text-out model (`POST /generate`).
pub trait TextModel: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompts: &[String]) -> Result<Vec<String>, BackendError>;
}

/// `POST /paraphrase`.
pub trait Paraphraser: Send + Sync {
    fn id(&self) -> &str;
    fn paraphrase(&self, texts: &[String]) -> Result<Vec<String>, BackendError>;
}

/// Grammar corrector (`POST /correct`).
pub trait Corrector: Send + Sync {
    fn correct(&self, texts: &[String]) -> Result<Vec<String>, BackendError>;
}

/// Sentence embedder (`POST /embed`).
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

/// Three-way sentiment classifier (`POST /sentiment`).
pub trait SentimentClassifier: Send + Sync {
    fn classify(&self, texts: &[String]) -> Result<Vec<SentimentClass>, BackendError>;
}

/// Per-axis error report from an error-analysis judge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub fluency: bool,
    pub accuracy: bool,
    pub coherence: bool,
    pub relevance: bool,
}

/// Error-analysis judge (`POST /judge`).
pub trait Judge: Send + Sync {
    fn judge(&self, text: &str, tuple: &RelationTuple) -> Result<JudgeReport, BackendError>;
}

/// Exponential backoff: attempt `n` (0-based) waits `base_delay * 2^(n-1)` before running.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            Duration::ZERO
        } else {
            Duration::from_millis(
                self.base_delay_ms
                    .saturating_mul(1 << (attempt - 1).min(16)),
            )
        }
    }

    /// Runs `op` until it succeeds, fails with a non-transient error, or attempts run out.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            let delay = self.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() => {
                    log::warn!("attempt {}/{} failed: {e}", attempt + 1, attempts);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Caps in-flight requests and spaces request starts for one backend.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

#[derive(Debug)]
struct LimiterState {
    in_flight: usize,
    next_start: Instant,
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, requests_per_second: Option<f64>) -> Self {
        let min_interval = match requests_per_second {
            Some(rps) if rps > 0.0 => Duration::from_secs_f64(1.0 / rps),
            _ => Duration::ZERO,
        };
        Self {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new(LimiterState {
                in_flight: 0,
                next_start: Instant::now(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(usize::MAX, None)
    }

    /// Blocks until a slot is free and the spacing interval has elapsed.
    pub fn acquire(&self) -> Permit<'_> {
        let wait = {
            let mut st = self.state.lock().unwrap();
            while st.in_flight >= self.max_in_flight {
                st = self.freed.wait(st).unwrap();
            }
            st.in_flight += 1;
            let now = Instant::now();
            let start = st.next_start.max(now);
            st.next_start = start + self.min_interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().unwrap();
        st.in_flight -= 1;
        self.limiter.freed.notify_one();
    }
}
