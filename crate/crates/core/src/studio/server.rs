//! JSON HTTP API over sessions, jobs and bundles.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use log::{error, info};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use super::{
    get_layout, IngestRequest, JobHandle, JobRequest, JobState, LayoutBundle, Pipeline, ProjectJob, Session,
    StudioConfig, StudioError, ThumbnailCache, Workspace,
};
use crate::gateway::{Gateway, GatewayError, GuidingPrompt, SlotSpec};
use crate::projector::ProjectorMethod;
use crate::store::{Dataset, Modality, Payload, SampleId};

/// How a client describes a projection job. The CLI builds the same struct
/// from its flags, so both paths run identical requests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobSpec {
    pub prompt_template: Option<String>,
    pub slots: Option<Vec<SlotSpec>>,
    /// Name of a built-in prompt; alternative to `prompt_template` + `slots`.
    pub builtin_prompt: Option<String>,
    pub method: Option<ProjectorMethod>,
    pub alpha_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub k_neighbors: Option<usize>,
}

impl JobSpec {
    /// Explicit prompt, else the session's default prompt.
    pub fn prompt(&self, fallback: Option<&GuidingPrompt>) -> Result<GuidingPrompt, StudioError> {
        match (&self.builtin_prompt, &self.prompt_template, &self.slots) {
            (Some(_), Some(_), _) => Err(StudioError::BadRequest(
                "give either builtin_prompt or prompt_template, not both".into(),
            )),
            (Some(name), None, _) => Ok(GuidingPrompt::builtin(name)?),
            (None, Some(t), Some(slots)) => Ok(GuidingPrompt::new(t, slots.clone())?),
            (None, Some(_), None) => Err(StudioError::BadRequest("prompt_template needs slots".into())),
            (None, None, _) => fallback
                .cloned()
                .ok_or_else(|| StudioError::BadRequest("no prompt given and the session has none".into())),
        }
    }

    /// The job request for `session`, with unset fields taken from its config.
    pub fn to_request(&self, session: &Session) -> Result<JobRequest, StudioError> {
        let prompt = self.prompt(session.prompt.as_ref())?;
        let mut request = JobRequest::from_config(prompt, &session.config);
        let p = &mut request.projector;
        if let Some(m) = self.method {
            p.method = m;
        }
        if let Some(s) = self.seed {
            p.seed = s;
        }
        if self.perplexity.is_some() {
            p.perplexity = self.perplexity;
        }
        if let Some(i) = self.iterations {
            p.iterations = i;
        }
        if let Some(k) = self.k_neighbors {
            p.k_neighbors = k;
        }
        if let Some(g) = &self.alpha_grid {
            request.alpha_grid = g.clone();
        }
        Ok(request)
    }
}

/// `POST /api/sessions` body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(flatten)]
    pub ingest: IngestRequest,
    #[serde(default)]
    pub prompt: Option<GuidingPrompt>,
    #[serde(default)]
    pub builtin_prompt: Option<String>,
}

struct SessionEntry {
    session: Session,
    dataset: Arc<Dataset>,
    /// At most one pipeline job per session runs at a time.
    run_lock: tokio::sync::Mutex<()>,
}

/// Shared service state.
pub struct AppState {
    pub config: StudioConfig,
    pub pipeline: Arc<Pipeline>,
    pub thumbnails: ThumbnailCache,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    jobs: RwLock<HashMap<String, JobHandle>>,
    bundles: RwLock<HashMap<String, Arc<LayoutBundle>>>,
    next_job: AtomicU64,
}

fn read<T>(lock: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(lock: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    lock.write().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    pub fn new(config: StudioConfig, pipeline: Arc<Pipeline>) -> Arc<Self> {
        Arc::new(AppState {
            config,
            pipeline,
            thumbnails: ThumbnailCache::new(),
            sessions: RwLock::default(),
            jobs: RwLock::default(),
            bundles: RwLock::default(),
            next_job: AtomicU64::new(1),
        })
    }

    /// Builds the gateway and pipeline described by `config`.
    pub fn from_config(config: StudioConfig) -> Result<Arc<Self>, StudioError> {
        let gateway = Arc::new(Gateway::new(config.gateway.clone())?);
        let pipeline = Arc::new(Pipeline::new(gateway, Workspace::new(&config.workdir)));
        Ok(Self::new(config, pipeline))
    }

    fn workspace(&self) -> &Workspace {
        self.pipeline.workspace()
    }

    async fn create_session(&self, req: SessionRequest) -> Result<Session, StudioError> {
        let prompt = match (req.prompt, req.builtin_prompt) {
            (Some(p), None) => {
                p.validate()?;
                Some(p)
            }
            (None, Some(name)) => Some(GuidingPrompt::builtin(&name)?),
            (None, None) => None,
            (Some(_), Some(_)) => return Err(StudioError::BadRequest("give either prompt or builtin_prompt".into())),
        };
        let ingest = req.ingest;
        let dataset = tokio::task::spawn_blocking(move || ingest.load())
            .await
            .map_err(|e| StudioError::Internal(e.to_string()))??;
        let session = self.workspace().open_session(&dataset, &self.config, prompt)?;
        info!("session {} ({} samples)", session.id, dataset.len());
        self.register(session.clone(), Arc::new(dataset));
        Ok(session)
    }

    fn register(&self, session: Session, dataset: Arc<Dataset>) -> Arc<SessionEntry> {
        let entry = Arc::new(SessionEntry {
            session,
            dataset,
            run_lock: tokio::sync::Mutex::new(()),
        });
        write(&self.sessions)
            .entry(entry.session.id.clone())
            .or_insert(entry)
            .clone()
    }

    /// In-memory session, or one saved by an earlier process.
    async fn session(&self, id: &str) -> Result<Arc<SessionEntry>, StudioError> {
        if let Some(e) = read(&self.sessions).get(id) {
            return Ok(e.clone());
        }
        let session = self.workspace().load_session(id)?;
        let manifest = session.manifest.clone();
        let dataset = tokio::task::spawn_blocking(move || Dataset::reload(&manifest))
            .await
            .map_err(|e| StudioError::Internal(e.to_string()))??;
        Ok(self.register(session, Arc::new(dataset)))
    }

    fn bundle(&self, id: &str) -> Result<Arc<LayoutBundle>, StudioError> {
        if let Some(b) = read(&self.bundles).get(id) {
            return Ok(b.clone());
        }
        let bundle = Arc::new(self.workspace().load_bundle(id)?);
        write(&self.bundles).insert(id.to_owned(), bundle.clone());
        Ok(bundle)
    }

    fn job(&self, id: &str) -> Result<ProjectJob, StudioError> {
        read(&self.jobs)
            .get(id)
            .map(JobHandle::snapshot)
            .ok_or_else(|| StudioError::NotFound(format!("job {id}")))
    }

    /// Queues a job; it starts once the session's previous job finished.
    async fn submit(self: &Arc<Self>, session_id: &str, spec: &JobSpec) -> Result<JobHandle, StudioError> {
        let entry = self.session(session_id).await?;
        let request = spec.to_request(&entry.session)?;
        // Reject bad parameters now rather than as a failed job.
        super::pipeline::validate_request(&request, entry.dataset.len())?;
        let job_id = format!("job-{}", self.next_job.fetch_add(1, Ordering::SeqCst));
        let job = JobHandle::new(&job_id, &entry.session.id);
        write(&self.jobs).insert(job_id, job.clone());
        let (state, handle) = (self.clone(), job.clone());
        tokio::spawn(async move {
            let _running = entry.run_lock.lock().await;
            match state.pipeline.run(&entry.session, &entry.dataset, &request, &handle).await {
                Ok(bundle) => {
                    write(&state.bundles).insert(bundle.id.clone(), Arc::new(bundle));
                }
                Err(e) => error!("job {} failed: {e}", handle.snapshot().id),
            }
        });
        Ok(job)
    }

    fn find_sample(&self, id: &SampleId) -> Option<(Arc<SessionEntry>, usize)> {
        read(&self.sessions)
            .values()
            .find_map(|e| e.dataset.position(id).map(|i| (e.clone(), i)))
    }
}

fn status_of(e: &StudioError) -> StatusCode {
    match e {
        StudioError::NotFound(_) => StatusCode::NOT_FOUND,
        StudioError::Gateway(GatewayError::Timeout(_)) => StatusCode::GATEWAY_TIMEOUT,
        StudioError::Gateway(_) => StatusCode::BAD_GATEWAY,
        StudioError::NotAnImage(_) => StatusCode::UNPROCESSABLE_ENTITY,
        e if e.is_user_error() => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl IntoResponse for StudioError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code().to_owned(),
            detail: self.to_string(),
        };
        (status_of(&self), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, StudioError>;

fn json_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| StudioError::BadRequest(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub name: String,
    pub modality: Modality,
    pub n: usize,
}

async fn post_session(State(st): State<Arc<AppState>>, body: axum::body::Bytes) -> ApiResult<Response> {
    let req: SessionRequest = json_body(&body)?;
    let session = st.create_session(req).await?;
    let created = SessionCreated {
        session_id: session.id.clone(),
        name: session.manifest.name.clone(),
        modality: session.manifest.modality,
        n: session.manifest.samples.len(),
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_session(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Session>> {
    let entry = st.session(&id).await?;
    // Bundles may have been added since the session was registered.
    let session = st.workspace().load_session(&id).unwrap_or_else(|_| entry.session.clone());
    Ok(Json(session))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

async fn post_job(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let spec: JobSpec = if body.is_empty() { JobSpec::default() } else { json_body(&body)? };
    let job = st.submit(&id, &spec).await?;
    let accepted = JobAccepted {
        job_id: job.snapshot().id,
    };
    Ok((StatusCode::ACCEPTED, Json(accepted)).into_response())
}

async fn get_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ProjectJob>> {
    Ok(Json(st.job(&id)?))
}

#[derive(Debug, Deserialize)]
struct AlphaQuery {
    alpha: Option<String>,
}

async fn get_bundle_layout(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AlphaQuery>,
) -> ApiResult<Response> {
    let raw = q.alpha.ok_or_else(|| StudioError::BadRequest("missing alpha".into()))?;
    let alpha: f64 = raw
        .parse()
        .map_err(|_| StudioError::BadRequest(format!("alpha {raw:?} is not a number")))?;
    let bundle = st.bundle(&id)?;
    Ok(Json(get_layout(&bundle, alpha)?).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BundleMetrics {
    pub bundle_id: String,
    pub alpha_grid: Vec<f64>,
    pub metrics: Vec<crate::quality::MetricsReport>,
}

async fn get_bundle_metrics(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<BundleMetrics>> {
    let b = st.bundle(&id)?;
    Ok(Json(BundleMetrics {
        bundle_id: b.id.clone(),
        alpha_grid: b.alpha_grid.clone(),
        metrics: b.metrics.clone(),
    }))
}

async fn get_bundle_export(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let b = st.bundle(&id)?;
    Ok(Json(&*b).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleView {
    pub id: SampleId,
    pub session_id: String,
    pub modality: Modality,
    pub origin: String,
    pub truth_label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    /// Slot values per bundle that contains the sample.
    pub labels: BTreeMap<String, BTreeMap<String, String>>,
}

async fn get_sample(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SampleView>> {
    let sid = SampleId::from(id.clone());
    let (entry, pos) = st.find_sample(&sid).ok_or_else(|| StudioError::NotFound(format!("sample {id}")))?;
    let sample = &entry.dataset.samples[pos];
    let (text, image_b64) = match &sample.payload {
        Payload::Text(t) => (Some(t.clone()), None),
        Payload::Image(b) => (None, Some(B64.encode(b))),
    };
    let mut labels = BTreeMap::new();
    let bundle_ids = st
        .workspace()
        .load_session(&entry.session.id)
        .map(|s| s.bundles)
        .unwrap_or_default();
    for bid in bundle_ids {
        if let Ok(b) = st.bundle(&bid) {
            if let Some(i) = b.sample_ids.iter().position(|s| s == &sid) {
                labels.insert(bid, b.labels[i].clone());
            }
        }
    }
    Ok(Json(SampleView {
        id: sid,
        session_id: entry.session.id.clone(),
        modality: sample.modality(),
        origin: sample.origin.clone(),
        truth_label: sample.truth_label.clone(),
        text,
        image_b64,
        labels,
    }))
}

#[derive(Debug, Deserialize)]
struct SizeQuery {
    size: Option<String>,
}

async fn get_thumbnail(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SizeQuery>,
) -> ApiResult<Response> {
    let server = &st.config.server;
    let size = match q.size {
        None => server.thumbnail_size,
        Some(raw) => raw
            .parse()
            .map_err(|_| StudioError::BadRequest(format!("size {raw:?} is not a positive integer")))?,
    };
    if size == 0 || size > server.max_thumbnail_size {
        return Err(StudioError::BadRequest(format!(
            "size must be in 1..={}",
            server.max_thumbnail_size
        )));
    }
    let sid = SampleId::from(id.clone());
    let (entry, pos) = st.find_sample(&sid).ok_or_else(|| StudioError::NotFound(format!("sample {id}")))?;
    let png = st.thumbnails.thumbnail(&entry.dataset.samples[pos], size)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response())
}

async fn health() -> &'static str {
    "ok"
}

async fn api_not_found() -> StudioError {
    StudioError::NotFound("route".into())
}

/// All API routes plus the optional static mount.
pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(post_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/jobs", post(post_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/bundles/{id}/layout", get(get_bundle_layout))
        .route("/api/bundles/{id}/metrics", get(get_bundle_metrics))
        .route("/api/bundles/{id}/export", get(get_bundle_export))
        .route("/api/samples/{id}", get(get_sample))
        .route("/api/thumbnails/{id}", get(get_thumbnail))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found));
    let app = match &state.config.server.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive()).with_state(state)
}

/// A service running in the background. Dropping it stops the server.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Runs until the process is stopped.
    pub async fn wait(mut self) -> Result<(), StudioError> {
        let task = self.task.take().expect("task present until waited on");
        task.await.map_err(|e| StudioError::Internal(e.to_string()))??;
        Ok(())
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `state` in the background.
pub async fn start(state: Arc<AppState>, addr: SocketAddr) -> Result<RunningServer, StudioError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    info!("listening on http://{addr}");
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        task: Some(task),
    })
}

/// Serves the API at the configured bind address until the process exits.
pub async fn serve(config: StudioConfig) -> Result<(), StudioError> {
    let addr: SocketAddr = config
        .server
        .bind
        .parse()
        .map_err(|e| StudioError::Config(format!("bind address {:?}: {e}", config.server.bind)))?;
    if let Some(dir) = &config.server.static_dir {
        if !Path::new(dir).is_dir() {
            return Err(StudioError::Config(format!("static dir {} does not exist", dir.display())));
        }
    }
    let state = AppState::from_config(config)?;
    start(state, addr).await?.wait().await
}

/// Polls a job until it reaches a terminal state.
pub async fn wait_for_job(state: &AppState, job_id: &str) -> Result<ProjectJob, StudioError> {
    loop {
        let job = state.job(job_id)?;
        if job.state.is_terminal() {
            return Ok(job);
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
}

impl AppState {
    /// Submits a job outside HTTP; used by tests and embedding applications.
    pub async fn submit_job(self: &Arc<Self>, session_id: &str, spec: &JobSpec) -> Result<String, StudioError> {
        Ok(self.submit(session_id, spec).await?.snapshot().id)
    }

    pub async fn create(&self, req: SessionRequest) -> Result<Session, StudioError> {
        self.create_session(req).await
    }
}

/// Whether a job finished successfully.
pub fn job_succeeded(job: &ProjectJob) -> bool {
    job.state == JobState::Done
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session_with_prompt(prompt: Option<GuidingPrompt>) -> Session {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, "{\"text\":\"a\"}\n{\"text\":\"b\"}\n").unwrap();
        let ds = IngestRequest::new(&path, Modality::Text).load().unwrap();
        Workspace::new(dir.path().join("w"))
            .open_session(&ds, &StudioConfig::default(), prompt)
            .unwrap()
    }

    #[test]
    fn job_spec_overrides_config() {
        let s = session_with_prompt(Some(GuidingPrompt::builtin("mnist_digits").unwrap()));
        let spec = JobSpec {
            method: Some(ProjectorMethod::Pca),
            alpha_grid: Some(vec![0.0, 1.0]),
            seed: Some(7),
            ..JobSpec::default()
        };
        let r = spec.to_request(&s).unwrap();
        assert_eq!(r.projector.method, ProjectorMethod::Pca);
        assert_eq!(r.projector.seed, 7);
        assert_eq!(r.alpha_grid, vec![0.0, 1.0]);
        assert_eq!(r.prompt, GuidingPrompt::builtin("mnist_digits").unwrap());
    }

    #[test]
    fn job_spec_prompt_rules() {
        let none = session_with_prompt(None);
        assert!(matches!(JobSpec::default().to_request(&none), Err(StudioError::BadRequest(_))));
        let spec = JobSpec {
            prompt_template: Some("Is it {time}?".into()),
            slots: Some(vec![SlotSpec::new("time", ["day", "night"])]),
            ..JobSpec::default()
        };
        assert_eq!(spec.prompt(None).unwrap().render(), "Is it <day | night>?");
        let both = JobSpec {
            builtin_prompt: Some("mnist_digits".into()),
            ..spec
        };
        assert!(both.prompt(None).is_err());
    }

    #[test]
    fn job_spec_json_names() {
        let spec: JobSpec = serde_json::from_str(
            r#"{"prompt_template":"It is {t}.","slots":[{"name":"t","vocabulary":["a","b"]}],"method":"tsne","alpha_grid":[0,0.5,1],"seed":42}"#,
        )
        .unwrap();
        assert_eq!(spec.method, Some(ProjectorMethod::Tsne));
        assert_eq!(spec.seed, Some(42));
    }

    #[test]
    fn error_statuses() {
        assert_eq!(status_of(&StudioError::NotFound("x".into())), StatusCode::NOT_FOUND);
        assert_eq!(
            status_of(&StudioError::AlphaOutOfRange { alpha: 2.0, min: 0.0, max: 1.0 }),
            StatusCode::BAD_REQUEST
        );
        assert_eq!(status_of(&StudioError::Internal("x".into())), StatusCode::INTERNAL_SERVER_ERROR);
    }
}
