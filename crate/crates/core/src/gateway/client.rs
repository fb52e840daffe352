use std::collections::HashMap;
use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use futures::StreamExt;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::Semaphore;

use super::wire::{ChatMessage, ChatRequest, ChatResponse, ContentPart, EmbedRequest, EmbedResponse};
use super::{GatewayConfig, GatewayError, GuidingPrompt, TextLabel};
use crate::store::{cache::decode_f32, EmbeddingKind, EmbeddingRecord, Payload, Sample};

/// A batch that stopped at its first failure; `completed` holds the results
/// for the inputs before it, in input order.
#[derive(Debug)]
pub struct BatchError<T> {
    pub completed: Vec<T>,
    pub error: GatewayError,
}

impl<T> std::fmt::Display for BatchError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed)", self.error, self.completed.len())
    }
}

impl<T: std::fmt::Debug> std::error::Error for BatchError<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

enum Attempt {
    Fatal(GatewayError),
    Retry { detail: String, timed_out: bool },
}

/// HTTP client for the embedder and classifier endpoints.
///
/// At most `parallelism` requests are in flight at once across all callers
/// sharing one gateway. Batch results come back in input order.
pub struct Gateway {
    cfg: GatewayConfig,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        if cfg.parallelism == 0 {
            return Err(GatewayError::BadResponse("parallelism must be at least 1".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        Ok(Gateway {
            permits: Arc::new(Semaphore::new(cfg.parallelism)),
            cfg,
            http,
            calls: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let jitter = rand::rng().random_range(0.8..=1.2);
        self.cfg.backoff_base.mul_f64(2f64.powi(attempt as i32) * jitter)
    }

    async fn try_post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, Attempt> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        self.calls.fetch_add(1, Ordering::Relaxed);
        let resp = match self.http.post(url).json(body).send().await {
            Ok(r) => r,
            Err(e) => {
                return Err(Attempt::Retry {
                    timed_out: e.is_timeout(),
                    detail: e.to_string(),
                })
            }
        };
        let status = resp.status();
        let bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) => {
                return Err(Attempt::Retry {
                    timed_out: e.is_timeout(),
                    detail: e.to_string(),
                })
            }
        };
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry {
                timed_out: false,
                detail: format!("status {status}"),
            });
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(GatewayError::Rejected {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            }));
        }
        serde_json::from_slice(&bytes).map_err(|e| Attempt::Fatal(GatewayError::BadResponse(e.to_string())))
    }

    async fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.try_post(url, body).await {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry { detail, timed_out }) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(if timed_out {
                            GatewayError::Timeout(url.to_owned())
                        } else {
                            GatewayError::EndpointUnavailable {
                                url: url.to_owned(),
                                attempts: attempt + 1,
                                detail,
                            }
                        });
                    }
                    log::debug!("retrying {url} after: {detail}");
                    tokio::time::sleep(self.backoff(attempt)).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn ordered<T, F, Fut>(&self, n: usize, f: F) -> Result<Vec<T>, BatchError<T>>
    where
        F: Fn(usize) -> Fut,
        Fut: Future<Output = Result<T, GatewayError>>,
    {
        let mut stream = futures::stream::iter(0..n).map(f).buffered(self.cfg.parallelism);
        let mut out = Vec::with_capacity(n);
        while let Some(r) = stream.next().await {
            match r {
                Ok(v) => out.push(v),
                Err(error) => return Err(BatchError { completed: out, error }),
            }
        }
        Ok(out)
    }

    /// Asks the classifier to answer `prompt` about one sample.
    pub async fn classify_sample(&self, sample: &Sample, prompt: &GuidingPrompt) -> Result<TextLabel, GatewayError> {
        let mut content = vec![ContentPart::Text { text: prompt.render() }];
        match &sample.payload {
            Payload::Image(bytes) => {
                if bytes.len() > self.cfg.max_image_bytes {
                    return Err(GatewayError::OverLimit {
                        size: bytes.len(),
                        limit: self.cfg.max_image_bytes,
                    });
                }
                content.push(ContentPart::ImageB64 { data: B64.encode(bytes) });
            }
            Payload::Text(doc) => content.push(ContentPart::Text { text: doc.clone() }),
        }
        let request = ChatRequest {
            model: self.cfg.classifier_model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content,
            }],
        };
        let resp: ChatResponse = self.post_json(&self.cfg.classify_url, &request).await?;
        let answer = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GatewayError::BadResponse("no choices".into()))?;
        TextLabel::from_answer(sample.id.clone(), answer, prompt, self.cfg.strict_parse)
    }

    pub async fn classify_batch(
        &self,
        samples: &[&Sample],
        prompt: &GuidingPrompt,
    ) -> Result<Vec<TextLabel>, BatchError<TextLabel>> {
        self.ordered(samples.len(), |i| self.classify_sample(samples[i], prompt)).await
    }

    async fn embed(&self, request: EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        let resp: EmbedResponse = self.post_json(&self.cfg.embed_url, &request).await?;
        let vector = decode_f32(&resp.vec_b64).ok_or_else(|| GatewayError::BadResponse("bad vec_b64".into()))?;
        if resp.dim != self.cfg.expected_dim || vector.len() != self.cfg.expected_dim {
            return Err(GatewayError::DimMismatch {
                expected: self.cfg.expected_dim,
                got: if resp.dim != self.cfg.expected_dim { resp.dim } else { vector.len() },
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::BadResponse("non-finite embedding".into()));
        }
        Ok(vector)
    }

    pub async fn embed_text(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        self.embed(EmbedRequest {
            model: self.cfg.model_tag.clone(),
            input_b64: None,
            input_text: Some(text.to_owned()),
        })
        .await
    }

    pub async fn embed_sample(&self, sample: &Sample) -> Result<EmbeddingRecord, GatewayError> {
        let request = match &sample.payload {
            Payload::Image(bytes) => EmbedRequest {
                model: self.cfg.model_tag.clone(),
                input_b64: Some(B64.encode(bytes)),
                input_text: None,
            },
            Payload::Text(text) => EmbedRequest {
                model: self.cfg.model_tag.clone(),
                input_b64: None,
                input_text: Some(text.clone()),
            },
        };
        Ok(EmbeddingRecord {
            sample_id: sample.id.clone(),
            kind: EmbeddingKind::Data,
            model_tag: self.cfg.model_tag.clone(),
            vector: self.embed(request).await?,
            prompt_hash: None,
            alpha: None,
        })
    }

    /// Data embeddings `x_i = E(o_i)`, one per sample, in input order.
    pub async fn embed_data(&self, samples: &[&Sample]) -> Result<Vec<EmbeddingRecord>, BatchError<EmbeddingRecord>> {
        self.ordered(samples.len(), |i| self.embed_sample(samples[i])).await
    }

    /// Label embeddings `y_i = E(t_i)` of each label's full answer sentence.
    ///
    /// Each distinct sentence is embedded once, so equal texts get equal vectors.
    pub async fn embed_labels(&self, labels: &[TextLabel]) -> Result<Vec<EmbeddingRecord>, BatchError<EmbeddingRecord>> {
        if let Some(bad) = labels.iter().find(|l| l.raw_text.trim().is_empty()) {
            return Err(BatchError {
                completed: Vec::new(),
                error: GatewayError::InvalidLabel(bad.sample_id.clone()),
            });
        }
        let mut distinct: Vec<&str> = Vec::new();
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        for l in labels {
            slot_of.entry(l.raw_text.as_str()).or_insert_with(|| {
                distinct.push(l.raw_text.as_str());
                distinct.len() - 1
            });
        }
        let to_record = |l: &TextLabel, vector: Vec<f32>| EmbeddingRecord {
            sample_id: l.sample_id.clone(),
            kind: EmbeddingKind::Label,
            model_tag: self.cfg.model_tag.clone(),
            vector,
            prompt_hash: Some(l.prompt_hash.clone()),
            alpha: None,
        };
        match self.ordered(distinct.len(), |i| self.embed_text(distinct[i])).await {
            Ok(vectors) => Ok(labels
                .iter()
                .map(|l| to_record(l, vectors[slot_of[l.raw_text.as_str()]].clone()))
                .collect()),
            Err(BatchError { completed, error }) => {
                let done = labels
                    .iter()
                    .map_while(|l| completed.get(slot_of[l.raw_text.as_str()]).map(|v| to_record(l, v.clone())))
                    .collect();
                Err(BatchError { completed: done, error })
            }
        }
    }
}
