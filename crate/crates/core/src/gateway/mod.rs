//! Embedder and zero-shot classifier endpoints.
//!
//! The classifier speaks an OpenAI-style chat-completions protocol with an
//! optional base64 image part; the embedder takes base64 bytes or text and
//! answers with a base64 little-endian `f32` vector. [`mock`] serves both
//! protocols deterministically for tests and demos.

mod client;
pub mod mock;
mod parse;
mod prompt;
pub mod wire;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::SampleId;

pub use client::{BatchError, Gateway};
pub use parse::{parse_label, UNKNOWN};
pub use prompt::{GuidingPrompt, PromptError, SlotSpec, BUILTIN_PROMPTS};

pub const EMBED_URL_ENV: &str = "SEMPROJ_EMBED_URL";
pub const CLASSIFY_URL_ENV: &str = "SEMPROJ_CLASSIFY_URL";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint {url} unavailable after {attempts} attempts: {detail}")]
    EndpointUnavailable {
        url: String,
        attempts: u32,
        detail: String,
    },
    #[error("request to {0} timed out")]
    Timeout(String),
    #[error("payload of {size} bytes exceeds limit of {limit}")]
    OverLimit { size: usize, limit: usize },
    #[error("endpoint answered {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("label for sample {0} has empty text")]
    InvalidLabel(SampleId),
    #[error("no vocabulary match for slot `{0}`")]
    ParseFailure(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot bind mock server: {0}")]
    PortInUse(std::io::Error),
}

/// Classifier output for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextLabel {
    pub sample_id: SampleId,
    /// The full answer sentence; this is what gets embedded.
    pub raw_text: String,
    /// One entry per prompt slot: a vocabulary entry or `"unknown"`.
    pub slot_values: BTreeMap<String, String>,
    pub parse_ok: bool,
    pub prompt_hash: String,
}

impl TextLabel {
    /// Parses `raw_text` against `prompt`.
    pub fn from_answer(
        sample_id: SampleId,
        raw_text: String,
        prompt: &GuidingPrompt,
        strict: bool,
    ) -> Result<Self, GatewayError> {
        let slot_values = parse_label(&raw_text, prompt, strict)?;
        let parse_ok = slot_values.values().all(|v| v != UNKNOWN);
        Ok(TextLabel {
            sample_id,
            raw_text,
            slot_values,
            parse_ok,
            prompt_hash: prompt.prompt_hash(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub embed_url: String,
    pub classify_url: String,
    /// Maximum concurrent requests per gateway.
    pub parallelism: usize,
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub timeout: Duration,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    /// Embedder model tag; part of every embedding cache key.
    pub model_tag: String,
    /// Sent as `model` in chat requests.
    pub classifier_model: String,
    pub expected_dim: usize,
    pub max_image_bytes: usize,
    /// Fail on answers that miss a slot instead of recording `"unknown"`.
    pub strict_parse: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            embed_url: "http://127.0.0.1:8081/embed".into(),
            classify_url: "http://127.0.0.1:8082/v1/chat/completions".into(),
            parallelism: 4,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(250),
            model_tag: "clip-vit-b-32".into(),
            classifier_model: "qwen2.5-vl-7b-instruct".into(),
            expected_dim: 512,
            max_image_bytes: 8 << 20,
            strict_parse: false,
        }
    }
}

impl GatewayConfig {
    /// Applies `SEMPROJ_EMBED_URL` / `SEMPROJ_CLASSIFY_URL` when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(EMBED_URL_ENV) {
            self.embed_url = url;
        }
        if let Ok(url) = std::env::var(CLASSIFY_URL_ENV) {
            self.classify_url = url;
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
