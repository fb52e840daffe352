use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{JobHandle, JobState, LabelSource, LayoutBundle, MetricSpace, Session, StudioConfig, StudioError, Workspace};
use crate::fusion::{validate_grid, FusionInputs};
use crate::gateway::{BatchError, Gateway, GuidingPrompt, TextLabel};
use crate::hashing::short_hash;
use crate::projector::{pairwise_distances, procrustes_align, project_points, Layout2D, ProjectorError, ProjectorMethod, ProjectorSpec};
use crate::quality::{pair_budget_for, report_from_distances, shepard_spearman, MetricsReport, ShepardDiagram};
use crate::store::{CacheKey, Dataset, EmbeddingCache, EmbeddingRecord, LabelCache, Sample};

/// What a projection job computes for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequest {
    pub prompt: GuidingPrompt,
    pub projector: ProjectorSpec,
    pub alpha_grid: Vec<f64>,
}

impl JobRequest {
    /// Uses the session's configured projector and grid.
    pub fn from_config(prompt: GuidingPrompt, config: &StudioConfig) -> Self {
        JobRequest {
            prompt,
            projector: config.projector.clone(),
            alpha_grid: config.alpha_grid.clone(),
        }
    }
}

/// A failed run and the stage it failed in.
#[derive(Debug, Error)]
#[error("{} stage failed: {source}", stage.as_str())]
pub struct PipelineError {
    pub stage: JobState,
    #[source]
    pub source: StudioError,
}

fn at(stage: JobState) -> impl FnOnce(StudioError) -> PipelineError {
    move |source| PipelineError { stage, source }
}

/// Stores whatever a batch finished before failing, then reports the failure.
fn keep_partial<T>(result: Result<Vec<T>, BatchError<T>>, mut keep: impl FnMut(T)) -> Result<(), StudioError> {
    match result {
        Ok(items) => {
            items.into_iter().for_each(&mut keep);
            Ok(())
        }
        Err(BatchError { completed, error }) => {
            warn!("batch failed after {} results: {error}", completed.len());
            completed.into_iter().for_each(&mut keep);
            Err(error.into())
        }
    }
}

/// Runs jobs against one gateway and working directory.
pub struct Pipeline {
    gateway: Arc<Gateway>,
    workspace: Workspace,
    /// Serializes cache-file updates across concurrent jobs.
    cache_lock: tokio::sync::Mutex<()>,
    /// Return a saved bundle with the same id instead of recomputing it.
    pub reuse_bundles: bool,
}

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, workspace: Workspace) -> Self {
        Pipeline {
            gateway,
            workspace,
            cache_lock: tokio::sync::Mutex::new(()),
            reuse_bundles: true,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Content hash of everything that determines the bundle.
    pub fn bundle_id(session: &Session, request: &JobRequest) -> String {
        let cfg = &session.config;
        let identity = serde_json::json!({
            "samples": session.manifest.samples,
            "model_tag": cfg.gateway.model_tag,
            "classifier_model": cfg.gateway.classifier_model,
            "expected_dim": cfg.gateway.expected_dim,
            "strict_parse": cfg.gateway.strict_parse,
            "prompt": request.prompt,
            "projector": request.projector,
            "alpha_grid": request.alpha_grid,
            "fusion": cfg.fusion,
            "quality": cfg.quality,
        });
        short_hash(identity.to_string().as_bytes())[..20].to_owned()
    }

    /// Data embeddings for every sample, in dataset order, from the cache or
    /// the embedder.
    pub async fn embed_stage(&self, session: &Session, dataset: &Dataset) -> Result<Vec<EmbeddingRecord>, StudioError> {
        let _guard = self.cache_lock.lock().await;
        let tag = self.gateway.config().model_tag.clone();
        let mut cache = EmbeddingCache::open(&session.caches.embeddings)?;
        let missing: Vec<&Sample> = dataset
            .samples
            .iter()
            .filter(|s| cache.get(&CacheKey::data(&s.id, &tag)).is_none())
            .collect();
        if !missing.is_empty() {
            info!("embedding {} of {} samples", missing.len(), dataset.len());
            let result = self.gateway.embed_data(&missing).await;
            let outcome = keep_partial(result, |r| cache.insert(r));
            cache.save()?;
            outcome?;
        }
        Ok(dataset
            .samples
            .iter()
            .map(|s| cache.get(&CacheKey::data(&s.id, &tag)).expect("embedded above").clone())
            .collect())
    }

    /// Classifier labels and their embeddings for every sample, in dataset order.
    pub async fn classify_stage(
        &self,
        session: &Session,
        dataset: &Dataset,
        prompt: &GuidingPrompt,
    ) -> Result<(Vec<TextLabel>, Vec<EmbeddingRecord>), StudioError> {
        prompt.validate()?;
        let _guard = self.cache_lock.lock().await;
        let hash = prompt.prompt_hash();
        let tag = self.gateway.config().model_tag.clone();

        let mut labels = LabelCache::open(&session.caches.labels)?;
        let missing: Vec<&Sample> = dataset.samples.iter().filter(|s| labels.get(&s.id, &hash).is_none()).collect();
        if !missing.is_empty() {
            info!("classifying {} of {} samples", missing.len(), dataset.len());
            let result = self.gateway.classify_batch(&missing, prompt).await;
            let outcome = keep_partial(result, |l| labels.insert(l));
            labels.save()?;
            outcome?;
        }
        let text_labels: Vec<TextLabel> = dataset
            .samples
            .iter()
            .map(|s| labels.get(&s.id, &hash).expect("classified above").clone())
            .collect();

        let mut cache = EmbeddingCache::open(&session.caches.embeddings)?;
        let missing: Vec<TextLabel> = text_labels
            .iter()
            .filter(|l| cache.get(&CacheKey::label(&l.sample_id, &tag, &hash)).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            info!("embedding {} label sentences", missing.len());
            let result = self.gateway.embed_labels(&missing).await;
            let outcome = keep_partial(result, |r| cache.insert(r));
            cache.save()?;
            outcome?;
        }
        let label_vectors = text_labels
            .iter()
            .map(|l| cache.get(&CacheKey::label(&l.sample_id, &tag, &hash)).expect("embedded above").clone())
            .collect();
        Ok((text_labels, label_vectors))
    }

    /// Distance pairs behind a bundle's Shepard correlation at grid point
    /// `alpha`. Embeddings and labels come from the caches.
    pub async fn shepard_diagram(
        &self,
        session: &Session,
        dataset: &Dataset,
        bundle: &LayoutBundle,
        alpha: f64,
    ) -> Result<ShepardDiagram, StudioError> {
        let i = bundle.grid_index(alpha).ok_or_else(|| {
            StudioError::BadRequest(format!("alpha {alpha} is not a grid point of bundle {}", bundle.id))
        })?;
        let data = self.embed_stage(session, dataset).await?;
        let (_, label_vectors) = self.classify_stage(session, dataset, &bundle.prompt).await?;
        let inputs = FusionInputs::new(&data, &label_vectors, &session.config.fusion)?;
        let dh = match session.config.quality.metric_space {
            MetricSpace::Data => pairwise_distances(inputs.data.view())?,
            MetricSpace::Fused => pairwise_distances(inputs.blend(bundle.alpha_grid[i])?.vectors.view())?,
        };
        let dl = crate::projector::DistanceMatrix::from_points_2d(&bundle.layouts[i].points);
        Ok(shepard_spearman(&dh, &dl, pair_budget_for(dh.n()))?)
    }

    /// Runs every stage, updating `job` as it goes.
    pub async fn run(
        &self,
        session: &Session,
        dataset: &Dataset,
        request: &JobRequest,
        job: &JobHandle,
    ) -> Result<LayoutBundle, PipelineError> {
        let result = self.run_stages(session, dataset, request, job).await;
        match &result {
            Ok(bundle) => job.finish(bundle.id.clone()),
            Err(e) => job.fail(e.to_string()),
        }
        result
    }

    async fn run_stages(
        &self,
        session: &Session,
        dataset: &Dataset,
        request: &JobRequest,
        job: &JobHandle,
    ) -> Result<LayoutBundle, PipelineError> {
        validate_request(request, dataset.len()).map_err(at(JobState::Queued))?;
        if dataset.manifest.samples != session.manifest.samples {
            return Err(at(JobState::Queued)(StudioError::BadRequest(
                "dataset does not match the session manifest".into(),
            )));
        }
        let id = Self::bundle_id(session, request);
        if self.reuse_bundles {
            if let Ok(bundle) = self.workspace.load_bundle(&id) {
                info!("reusing bundle {id}");
                return Ok(bundle);
            }
        }

        job.advance(JobState::Embedding);
        let data = self.embed_stage(session, dataset).await.map_err(at(JobState::Embedding))?;
        job.progress(0.15);

        job.advance(JobState::Classifying);
        let (text_labels, label_vectors) = self
            .classify_stage(session, dataset, &request.prompt)
            .await
            .map_err(at(JobState::Classifying))?;
        job.progress(0.35);

        job.advance(JobState::Fusing);
        let inputs = FusionInputs::new(&data, &label_vectors, &session.config.fusion)
            .map_err(|e| at(JobState::Fusing)(e.into()))?;
        let (sil_labels, label_column) =
            silhouette_labels(session.config.quality.label_source, dataset, &text_labels, &request.prompt)
                .map_err(at(JobState::Fusing))?;
        job.progress(0.4);

        job.advance(JobState::Projecting);
        let layouts = {
            let (inputs, request, job) = (inputs.clone(), request.clone(), job.clone());
            tokio::task::spawn_blocking(move || project_grid(&inputs, &request, &job))
                .await
                .map_err(|e| at(JobState::Projecting)(StudioError::Internal(e.to_string())))?
                .map_err(at(JobState::Projecting))?
        };

        job.advance(JobState::Scoring);
        let metrics = {
            let (quality, grid) = (session.config.quality.clone(), request.alpha_grid.clone());
            let (layouts, job) = (layouts.clone(), job.clone());
            tokio::task::spawn_blocking(move || score_grid(&inputs, &grid, &layouts, &sil_labels, &label_column, &quality, &job))
                .await
                .map_err(|e| at(JobState::Scoring)(StudioError::Internal(e.to_string())))?
                .map_err(at(JobState::Scoring))?
        };

        let cfg = &session.config;
        let bundle = LayoutBundle {
            id,
            session_id: session.id.clone(),
            dataset: session.manifest.name.clone(),
            n: dataset.len(),
            projector: request.projector.clone(),
            alpha_grid: request.alpha_grid.clone(),
            layouts,
            metrics,
            sample_ids: dataset.ids().cloned().collect(),
            labels: text_labels.iter().map(|l| l.slot_values.clone()).collect(),
            label_texts: text_labels.iter().map(|l| l.raw_text.clone()).collect(),
            truth_labels: dataset.truth_labels(),
            prompt: request.prompt.clone(),
            prompt_hash: request.prompt.prompt_hash(),
            model_tag: cfg.gateway.model_tag.clone(),
            classifier_model: cfg.gateway.classifier_model.clone(),
            fusion: cfg.fusion,
        };
        bundle.validate().map_err(at(JobState::Scoring))?;
        self.workspace.save_bundle(&bundle).map_err(at(JobState::Scoring))?;
        // The session file may be gone for ad-hoc runs; the bundle stands alone.
        if let Err(e) = self.workspace.attach_bundle(&session.id, &bundle.id) {
            warn!("cannot record bundle in session {}: {e}", session.id);
        }
        Ok(bundle)
    }
}

pub(crate) fn validate_request(request: &JobRequest, n: usize) -> Result<(), StudioError> {
    request.prompt.validate()?;
    if request.alpha_grid.is_empty() {
        return Err(StudioError::BadRequest("alpha grid is empty".into()));
    }
    validate_grid(&request.alpha_grid)?;
    request.projector.validate(n)?;
    Ok(())
}

/// Labels the silhouette is computed over, and where they came from.
pub(crate) fn silhouette_labels(
    source: LabelSource,
    dataset: &Dataset,
    labels: &[TextLabel],
    prompt: &GuidingPrompt,
) -> Result<(Vec<String>, String), StudioError> {
    let truth: Option<Vec<String>> = dataset.samples.iter().map(|s| s.truth_label.clone()).collect();
    let class = || {
        let slot = &prompt.class_slot().name;
        let values = labels
            .iter()
            .map(|l| l.slot_values.get(slot).cloned().unwrap_or_else(|| crate::gateway::UNKNOWN.to_owned()))
            .collect();
        (values, format!("slot:{slot}"))
    };
    match (source, truth) {
        (LabelSource::Truth, None) => Err(StudioError::BadRequest(
            "label_source = truth but some samples have no truth label".into(),
        )),
        (LabelSource::Truth | LabelSource::Auto, Some(t)) => Ok((t, "truth_label".into())),
        (LabelSource::Auto, None) | (LabelSource::Class, _) => Ok(class()),
    }
}

/// Projects every grid point, highest alpha first. Each layout is
/// Procrustes-aligned to the previous one; t-SNE also starts from it.
pub(crate) fn project_grid(inputs: &FusionInputs, request: &JobRequest, job: &JobHandle) -> Result<Vec<Layout2D>, StudioError> {
    let grid = &request.alpha_grid;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut out: Vec<Option<Layout2D>> = vec![None; grid.len()];
    let mut prev: Option<Layout2D> = None;
    for (step, &i) in order.iter().enumerate() {
        let fused = inputs.blend(grid[i])?;
        let warm = match request.projector.method {
            ProjectorMethod::Tsne => prev.as_ref(),
            _ => None,
        };
        let mut layout = project_points(fused.vectors.view(), &request.projector, warm)?;
        layout.alpha = Some(grid[i]);
        if let Some(reference) = &prev {
            layout = match procrustes_align(&layout, reference) {
                Ok(aligned) => aligned,
                Err(ProjectorError::DegenerateReference) => {
                    layout.flag("unaligned");
                    layout
                }
                Err(e) => return Err(e.into()),
            };
        }
        prev = Some(layout.clone());
        out[i] = Some(layout);
        job.progress(0.4 + 0.45 * (step + 1) as f64 / grid.len() as f64);
    }
    Ok(out.into_iter().map(|l| l.expect("every grid point projected")).collect())
}

pub(crate) fn score_grid(
    inputs: &FusionInputs,
    grid: &[f64],
    layouts: &[Layout2D],
    labels: &[String],
    label_column: &str,
    quality: &super::QualityConfig,
    job: &JobHandle,
) -> Result<Vec<MetricsReport>, StudioError> {
    let data_space = match quality.metric_space {
        MetricSpace::Data => Some(pairwise_distances(inputs.data.view())?),
        MetricSpace::Fused => None,
    };
    // Small sets cannot support the configured K; use the largest valid one.
    let n = inputs.data.nrows();
    let k = quality.k.min(n.saturating_sub(2) / 2).max(1);
    let mut reports = Vec::with_capacity(grid.len());
    for (step, (&alpha, layout)) in grid.iter().zip(layouts).enumerate() {
        let fused_space;
        let dh = match &data_space {
            Some(d) => d,
            None => {
                fused_space = pairwise_distances(inputs.blend(alpha)?.vectors.view())?;
                &fused_space
            }
        };
        let dl = crate::projector::DistanceMatrix::from_points_2d(&layout.points);
        reports.push(report_from_distances(dh, &dl, labels, label_column, k)?);
        job.progress(0.85 + 0.15 * (step + 1) as f64 / grid.len() as f64);
    }
    Ok(reports)
}
