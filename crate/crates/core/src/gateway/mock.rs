//! Deterministic local stand-ins for the embedder and classifier.
//!
//! The embedder maps input bytes to a unit vector seeded by their SHA-256;
//! configured label strings can instead map to mutually orthogonal anchors,
//! and per-sample fixture vectors can override both. The classifier answers
//! from a table keyed by sample id.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tokio::sync::oneshot;

use super::wire::{AnswerMessage, ChatChoice, ChatRequest, ChatResponse, ContentPart, EmbedRequest, EmbedResponse, ErrorBody};
use super::GatewayError;
use crate::hashing::sha256;
use crate::store::cache::encode_f32;
use crate::store::SampleId;

pub const EMBED_PATH: &str = "/embed";
pub const CLASSIFY_PATH: &str = "/v1/chat/completions";

/// Unit vector seeded by the SHA-256 of `bytes`.
pub fn hash_vector(bytes: &[u8], dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::from_seed(sha256(bytes));
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| (v / norm) as f32).collect()
}

/// `count` orthonormal vectors (Gram-Schmidt over seeded Gaussian draws).
///
/// # Panics
/// If `count > dim`.
pub fn anchor_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    assert!(count <= dim, "cannot build {count} orthogonal anchors in {dim} dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect()
}

/// Request counters shared with the test harness.
#[derive(Debug, Default)]
pub struct MockStats {
    requests: AtomicU64,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockStats {
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Highest number of concurrently handled requests observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) -> InFlight<'_> {
        let n = self.requests.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight { stats: self, ordinal: n }
    }
}

struct InFlight<'a> {
    stats: &'a MockStats,
    ordinal: u64,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone)]
pub struct MockEmbedderConfig {
    pub dim: usize,
    /// Texts (matched case-insensitively after trimming) that map to fixed
    /// orthonormal anchors, in anchor order.
    pub anchors: Vec<String>,
    pub anchor_seed: u64,
    /// Vectors returned for specific payloads, keyed by sample id.
    pub fixture: HashMap<SampleId, Vec<f32>>,
    pub latency: Duration,
}

impl Default for MockEmbedderConfig {
    fn default() -> Self {
        MockEmbedderConfig {
            dim: 512,
            anchors: Vec::new(),
            anchor_seed: 7,
            fixture: HashMap::new(),
            latency: Duration::ZERO,
        }
    }
}

/// Embedding function the mock embedder serves.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    anchors: HashMap<String, Vec<f32>>,
    fixture: HashMap<SampleId, Vec<f32>>,
}

impl MockEmbedder {
    pub fn new(cfg: &MockEmbedderConfig) -> Self {
        let vectors = anchor_vectors(cfg.anchors.len(), cfg.dim, cfg.anchor_seed);
        let anchors = cfg
            .anchors
            .iter()
            .map(|a| a.trim().to_lowercase())
            .zip(vectors)
            .collect();
        MockEmbedder {
            dim: cfg.dim,
            anchors,
            fixture: cfg.fixture.clone(),
        }
    }

    pub fn embed_bytes(&self, bytes: &[u8], is_text: bool) -> Vec<f32> {
        if let Some(v) = self.fixture.get(&SampleId::from_payload(bytes)) {
            return v.clone();
        }
        if is_text {
            if let Ok(text) = std::str::from_utf8(bytes) {
                if let Some(v) = self.anchors.get(&text.trim().to_lowercase()) {
                    return v.clone();
                }
            }
        }
        hash_vector(bytes, self.dim)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockClassifierConfig {
    /// Answer sentence per sample id.
    pub answers: HashMap<SampleId, String>,
    pub latency: Duration,
    /// Answer 503 to every request after this many.
    pub fail_after: Option<u64>,
}

fn error_response(status: StatusCode, code: &str, detail: String) -> Response {
    (
        status,
        Json(ErrorBody {
            error: code.to_owned(),
            detail,
        }),
    )
        .into_response()
}

struct EmbedState {
    embedder: MockEmbedder,
    latency: Duration,
    stats: Arc<MockStats>,
}

async fn handle_embed(State(st): State<Arc<EmbedState>>, Json(req): Json<EmbedRequest>) -> Response {
    let _guard = st.stats.enter();
    if !st.latency.is_zero() {
        tokio::time::sleep(st.latency).await;
    }
    let (bytes, is_text) = match (&req.input_b64, &req.input_text) {
        (Some(b64), _) => match B64.decode(b64) {
            Ok(b) => (b, false),
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_input", e.to_string()),
        },
        (None, Some(text)) => (text.as_bytes().to_vec(), true),
        (None, None) => {
            return error_response(StatusCode::BAD_REQUEST, "bad_input", "input_b64 or input_text required".into())
        }
    };
    let v = st.embedder.embed_bytes(&bytes, is_text);
    Json(EmbedResponse {
        dim: v.len(),
        vec_b64: encode_f32(&v),
    })
    .into_response()
}

struct ClassifyState {
    cfg: MockClassifierConfig,
    stats: Arc<MockStats>,
}

/// Sample id of the observation in a chat request: the image part, or the
/// second text part (the document) for text samples.
pub fn request_sample_id(req: &ChatRequest) -> Option<SampleId> {
    let parts = &req.messages.first()?.content;
    for part in parts {
        if let ContentPart::ImageB64 { data } = part {
            return B64.decode(data).ok().map(|b| SampleId::from_payload(&b));
        }
    }
    parts
        .iter()
        .filter_map(|p| match p {
            ContentPart::Text { text } => Some(text),
            _ => None,
        })
        .nth(1)
        .map(|t| SampleId::from_payload(t.as_bytes()))
}

async fn handle_classify(State(st): State<Arc<ClassifyState>>, Json(req): Json<ChatRequest>) -> Response {
    let guard = st.stats.enter();
    if !st.cfg.latency.is_zero() {
        tokio::time::sleep(st.cfg.latency).await;
    }
    if st.cfg.fail_after.is_some_and(|n| guard.ordinal >= n) {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "mock failure".into());
    }
    let Some(id) = request_sample_id(&req) else {
        return error_response(StatusCode::BAD_REQUEST, "bad_input", "no observation in request".into());
    };
    match st.cfg.answers.get(&id) {
        Some(answer) => Json(ChatResponse {
            choices: vec![ChatChoice {
                message: AnswerMessage {
                    role: Some("assistant".into()),
                    content: answer.clone(),
                },
            }],
        })
        .into_response(),
        None => error_response(StatusCode::NOT_FOUND, "not_found", format!("no fixture answer for {id}")),
    }
}

/// A running mock endpoint. Dropping it shuts the server down.
pub struct MockServer {
    pub addr: SocketAddr,
    pub stats: Arc<MockStats>,
    path: &'static str,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockServer {
    pub fn url(&self) -> String {
        format!("http://{}{}", self.addr, self.path)
    }

    pub fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn serve(router: Router, addr: SocketAddr, path: &'static str, stats: Arc<MockStats>) -> Result<MockServer, GatewayError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(GatewayError::PortInUse)?;
    let addr = listener.local_addr().map_err(GatewayError::PortInUse)?;
    let (tx, rx) = oneshot::channel::<()>();
    tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(MockServer {
        addr,
        stats,
        path,
        shutdown: Some(tx),
    })
}

/// Starts the mock embedder on `addr` (port 0 picks a free port).
pub async fn mock_embed_server(cfg: MockEmbedderConfig, addr: SocketAddr) -> Result<MockServer, GatewayError> {
    let stats = Arc::new(MockStats::default());
    let state = Arc::new(EmbedState {
        embedder: MockEmbedder::new(&cfg),
        latency: cfg.latency,
        stats: stats.clone(),
    });
    let router = Router::new().route(EMBED_PATH, post(handle_embed)).with_state(state);
    serve(router, addr, EMBED_PATH, stats).await
}

/// Starts the mock classifier on `addr` (port 0 picks a free port).
pub async fn mock_classify_server(cfg: MockClassifierConfig, addr: SocketAddr) -> Result<MockServer, GatewayError> {
    let stats = Arc::new(MockStats::default());
    let state = Arc::new(ClassifyState {
        cfg,
        stats: stats.clone(),
    });
    let router = Router::new().route(CLASSIFY_PATH, post(handle_classify)).with_state(state);
    serve(router, addr, CLASSIFY_PATH, stats).await
}

pub fn localhost_any() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}
