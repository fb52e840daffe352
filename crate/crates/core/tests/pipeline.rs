mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{Mocks, DIGIT_ANSWER};
use semproj::gateway::mock::{MockClassifierConfig, MockEmbedderConfig};
use semproj::gateway::Gateway;
use semproj::projector::procrustes_fit;
use semproj::store::LabelCache;
use semproj::studio::{JobHandle, JobRequest, JobState, LayoutBundle, Pipeline, Workspace};
use semproj::{GuidingPrompt, ProjectorMethod, ProjectorSpec};

fn pipeline(mocks: &Mocks, dim: usize, workdir: &std::path::Path) -> (Pipeline, semproj::studio::StudioConfig) {
    let config = mocks.config(dim, workdir);
    let gw = Gateway::new(config.gateway.clone()).unwrap();
    (Pipeline::new(Arc::new(gw), Workspace::new(workdir)), config)
}

fn digits() -> GuidingPrompt {
    GuidingPrompt::builtin("mnist_digits").unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn image_run_end_to_end_then_fully_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = common::load_images(&common::image_fixture(tmp.path(), 10, 30));
    assert_eq!(dataset.len(), 300);
    let mocks = Mocks::for_dataset(&dataset, DIGIT_ANSWER, 64).await;
    let (mut pipe, config) = pipeline(&mocks, 64, &tmp.path().join("work"));
    let session = pipe.workspace().open_session(&dataset, &config, Some(digits())).unwrap();
    let request = JobRequest::from_config(digits(), &config);
    assert_eq!(request.projector.method, ProjectorMethod::Tsne);
    assert_eq!(request.alpha_grid, vec![0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0]);

    let started = Instant::now();
    let job = JobHandle::new("job-1", &session.id);
    let bundle = pipe.run(&session, &dataset, &request, &job).await.unwrap();
    assert!(started.elapsed().as_secs() < 60, "{:?}", started.elapsed());
    assert_eq!(job.state(), JobState::Done);
    assert_eq!(bundle.layouts.len(), 7);
    assert_eq!(bundle.metrics.len(), 7);
    assert!(bundle.layouts.iter().all(|l| l.points.len() == 300));
    for (m, l) in bundle.metrics.iter().zip(&bundle.layouts) {
        assert!((0.0..=1.0).contains(&m.trustworthiness) && (0.0..=1.0).contains(&m.continuity));
        assert!(l.points.iter().flatten().all(|v| v.is_finite()));
    }
    // Every label parsed to the digit it was answered with.
    for (labels, truth) in bundle.labels.iter().zip(&bundle.truth_labels) {
        assert_eq!(labels.get("class"), truth.as_ref());
    }

    let saved = pipe.workspace().bundle_path(&bundle.id);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&saved).unwrap()).unwrap();
    let schema = jsonschema::validator_for(&LayoutBundle::json_schema()).unwrap();
    assert!(schema.is_valid(&doc));

    let calls = mocks.requests();
    assert_eq!(calls, pipe.gateway().calls());
    // Reused bundle: no work at all.
    let again = pipe.run(&session, &dataset, &request, &JobHandle::new("job-2", &session.id)).await.unwrap();
    assert_eq!(again, bundle);
    // Recomputed bundle: caches answer every request.
    pipe.reuse_bundles = false;
    let recomputed = pipe.run(&session, &dataset, &request, &JobHandle::new("job-3", &session.id)).await.unwrap();
    assert_eq!(mocks.requests(), calls);
    assert_eq!(recomputed.layouts, bundle.layouts);
    assert_eq!(recomputed.metrics, bundle.metrics);
}

#[tokio::test(flavor = "multi_thread")]
async fn grid_layouts_are_chained_by_procrustes() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = common::load_text(&common::text_fixture(&tmp.path().join("news.jsonl"), 15));
    let mocks = Mocks::for_dataset(&dataset, "This is about {label}.", 32).await;
    let (pipe, config) = pipeline(&mocks, 32, &tmp.path().join("work"));
    let prompt = GuidingPrompt::builtin("ag_news_topics").unwrap();
    let session = pipe.workspace().open_session(&dataset, &config, None).unwrap();
    for method in [ProjectorMethod::Pca, ProjectorMethod::Mds, ProjectorMethod::Isomap] {
        let request = JobRequest {
            prompt: prompt.clone(),
            projector: ProjectorSpec::new(method),
            alpha_grid: vec![0.0, 0.5, 1.0],
        };
        let bundle = pipe.run(&session, &dataset, &request, &JobHandle::detached()).await.unwrap();
        // Each layout already sits at its optimal similarity fit to the
        // previous (higher alpha) one, so refitting is the identity.
        for pair in [(1, 2), (0, 1)] {
            let t = procrustes_fit(&bundle.layouts[pair.0].points, &bundle.layouts[pair.1].points).unwrap();
            assert!((t.scale - 1.0).abs() < 1e-9, "{method}: scale {}", t.scale);
            assert!(!t.reflection);
            assert!(t.translation.iter().all(|v| v.abs() < 1e-9), "{method}: {:?}", t.translation);
            assert!((t.linear[0][0] - 1.0).abs() < 1e-9 && t.linear[0][1].abs() < 1e-9, "{method}");
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn classifier_outage_fails_job_and_keeps_partial_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = common::load_text(&common::text_fixture(&tmp.path().join("news.jsonl"), 10));
    let n = dataset.len();
    let mocks = Mocks::start(
        MockEmbedderConfig {
            dim: 16,
            ..MockEmbedderConfig::default()
        },
        MockClassifierConfig {
            answers: common::truth_answers(&dataset, "This is about {label}."),
            fail_after: Some(17),
            ..MockClassifierConfig::default()
        },
    )
    .await;
    let (pipe, mut config) = pipeline(&mocks, 16, &tmp.path().join("work"));
    config.gateway.parallelism = 1;
    let pipe = Pipeline::new(Arc::new(Gateway::new(config.gateway.clone()).unwrap()), pipe.workspace().clone());
    let session = pipe.workspace().open_session(&dataset, &config, None).unwrap();
    let request = JobRequest::from_config(GuidingPrompt::builtin("ag_news_topics").unwrap(), &config);
    let job = JobHandle::new("job-1", &session.id);
    let err = pipe.run(&session, &dataset, &request, &job).await.unwrap_err();
    assert_eq!(err.stage, JobState::Classifying);
    let snap = job.snapshot();
    assert_eq!(snap.state, JobState::Failed);
    assert_eq!(snap.failed_stage, Some(JobState::Classifying));
    assert!(snap.error.is_some());
    let cached = LabelCache::open(&session.caches.labels).unwrap().len();
    assert!(cached > 0 && cached < n, "{cached} of {n}");
    assert_eq!(cached, 17);
}

#[tokio::test]
async fn invalid_requests_fail_before_any_call() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = common::load_text(&common::text_fixture(&tmp.path().join("news.jsonl"), 3));
    let mocks = Mocks::for_dataset(&dataset, "This is about {label}.", 16).await;
    let (pipe, config) = pipeline(&mocks, 16, &tmp.path().join("work"));
    let session = pipe.workspace().open_session(&dataset, &config, None).unwrap();
    let prompt = GuidingPrompt::builtin("ag_news_topics").unwrap();
    for grid in [vec![], vec![0.5, 1.5], vec![f64::NAN]] {
        let request = JobRequest {
            prompt: prompt.clone(),
            projector: ProjectorSpec::new(ProjectorMethod::Pca),
            alpha_grid: grid,
        };
        let err = pipe.run(&session, &dataset, &request, &JobHandle::detached()).await.unwrap_err();
        assert_eq!(err.stage, JobState::Queued);
    }
    // Twelve points cannot support a t-SNE perplexity of 30.
    let mut request = JobRequest::from_config(prompt, &config);
    request.projector.perplexity = Some(30.0);
    assert!(pipe.run(&session, &dataset, &request, &JobHandle::detached()).await.is_err());
    assert_eq!(mocks.requests(), 0);
}
