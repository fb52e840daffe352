//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every check runs against mocks and independent oracles.

mod common;

use std::collections::HashMap;
use std::panic::AssertUnwindSafe;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::oracles;
use common::Mocks;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use semproj::fusion::FusionInputs;
use semproj::gateway::mock::{MockClassifierConfig, MockEmbedderConfig};
use semproj::gateway::{Gateway, SlotSpec};
use semproj::projector::procrustes::sum_sq_residual;
use semproj::projector::tsne::{joint_probabilities, kl_divergence, kl_gradient, trace_at};
use semproj::projector::{
    classical_mds, isomap_from_distances, pairwise_distances, procrustes_align, tsne, tsne_calibrate, DistanceMatrix,
    TsneParams,
};
use semproj::quality::{continuity, full_report, shepard_spearman, silhouette, trustworthiness};
use semproj::store::{Payload, Sample};
use semproj::studio::{JobHandle, JobRequest, LayoutBundle, Pipeline, Workspace};
use semproj::{EmbeddingKind, EmbeddingRecord, FusionConfig, GuidingPrompt, Layout2D, ProjectorMethod, ProjectorSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn to_dm(d: &[Vec<f64>]) -> DistanceMatrix {
    DistanceMatrix::new(d.len(), d.iter().flatten().copied().collect()).unwrap()
}

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Metric-oracle equivalence over random instances.
fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut r = common::rng(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(5..=30);
        let dim = r.random_range(1..=5);
        let k = r.random_range(1..=(n - 2) / 2);
        let x = common::uniform_points(&mut r, n, dim);
        let y = common::uniform_points(&mut r, n, 2);
        let mut labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        labels.shuffle(&mut r);
        let (dh, dl) = (oracles::dist_matrix(&rows(&x)), oracles::dist_matrix(&rows(&y)));
        let (dhm, dlm) = (to_dm(&dh), to_dm(&dl));
        let got = [
            trustworthiness(&dhm, &dlm, k).map_err(|e| e.to_string())?,
            continuity(&dhm, &dlm, k).map_err(|e| e.to_string())?,
            shepard_spearman(&dhm, &dlm, n * (n - 1) / 2).map_err(|e| e.to_string())?.spearman_rho,
            silhouette(&dlm, &labels).map_err(|e| e.to_string())?,
        ];
        let want = [
            oracles::trustworthiness(&dh, &dl, k),
            oracles::continuity(&dh, &dl, k),
            oracles::spearman_no_ties(&dh, &dl),
            oracles::silhouette(&dl, &labels),
        ];
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst <= 1e-9 && secs < 30.0, format!("max |err| {worst:.2e} over 200 instances in {secs:.2} s"))
}

/// Pinned hand values.
fn criterion_2() -> Outcome {
    let dh = to_dm(&oracles::dist_matrix(&[vec![0.0], vec![1.0], vec![3.0], vec![9.0]]));
    let dl = to_dm(&oracles::dist_matrix(&[vec![0.0], vec![1.0], vec![9.0], vec![3.0]]));
    let t = trustworthiness(&dh, &dl, 1).map_err(|e| e.to_string())?;
    let c = continuity(&dh, &dl, 1).map_err(|e| e.to_string())?;
    let line = Layout2D::new(vec![[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]], "copy");
    let s = silhouette(&DistanceMatrix::from_points_2d(&line.points), &["A", "A", "B", "B"]).map_err(|e| e.to_string())?;
    check(
        (t - 0.625).abs() < 1e-12 && (c - 0.625).abs() < 1e-12 && (s - 0.899749).abs() < 1e-6,
        format!("T {t} C {c} S {s:.6}"),
    )
}

/// Copying 2D data as its own layout is perfect.
fn criterion_3() -> Outcome {
    let mut r = common::rng(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(6..=60);
        let x = common::uniform_points(&mut r, n, 2);
        let layout = Layout2D::new(x.rows().into_iter().map(|p| [p[0], p[1]]).collect(), "copy");
        let dh = pairwise_distances(x.view()).map_err(|e| e.to_string())?;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let k = (n - 2) / 2;
        let m = full_report(&dh, &layout, &labels, "parity", k).map_err(|e| e.to_string())?;
        for v in [m.trustworthiness, m.continuity, m.shepard_rho] {
            worst = worst.max((v - 1.0).abs());
        }
    }
    check(worst <= 1e-12, format!("max |1 - metric| {worst:.2e} over 50 datasets"))
}

fn record(i: usize, kind: EmbeddingKind, vector: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord {
        sample_id: semproj::SampleId::from_payload(format!("s{i}").as_bytes()),
        kind,
        model_tag: "oracle".into(),
        vector,
        prompt_hash: None,
        alpha: None,
    }
}

fn normalized(v: &[f32]) -> Vec<f64> {
    let mut sq = 0.0;
    for &a in v {
        sq += a as f64 * a as f64;
    }
    let norm = sq.sqrt();
    v.iter().map(|&a| a as f64 / norm).collect()
}

/// Fusion endpoints and midpoint against elementwise oracles.
fn criterion_4() -> Outcome {
    let mut r = common::rng(4);
    let (n, dim) = (40, 64);
    let data: Vec<EmbeddingRecord> = (0..n)
        .map(|i| record(i, EmbeddingKind::Data, (0..dim).map(|_| common::gaussian(&mut r) as f32).collect()))
        .collect();
    let mut labels: Vec<EmbeddingRecord> = (0..n)
        .map(|i| record(i, EmbeddingKind::Label, (0..dim).map(|_| common::gaussian(&mut r) as f32 * 3.0).collect()))
        .collect();
    labels.reverse();
    let inputs = FusionInputs::new(&data, &labels, &FusionConfig::default()).map_err(|e| e.to_string())?;
    let label_of: HashMap<_, _> = labels.iter().map(|l| (l.sample_id.clone(), &l.vector)).collect();
    let mut errs = [0.0f64; 3];
    for (slot, alpha) in [1.0, 0.0, 0.5].into_iter().enumerate() {
        let fused = inputs.blend(alpha).map_err(|e| e.to_string())?;
        for (i, d) in data.iter().enumerate() {
            let (x, y) = (normalized(&d.vector), normalized(label_of[&d.sample_id]));
            for j in 0..dim {
                let want = match slot {
                    0 => x[j],
                    1 => y[j],
                    _ => 0.5 * x[j] + 0.5 * y[j],
                };
                errs[slot] = errs[slot].max((fused.vectors[[i, j]] - want).abs());
            }
        }
    }
    check(
        errs[0] == 0.0 && errs[1] == 0.0 && errs[2] <= 1e-7,
        format!("alpha=1 err {:.1e}, alpha=0 err {:.1e}, alpha=0.5 err {:.1e}", errs[0], errs[1], errs[2]),
    )
}

/// Steering with anchor label embeddings separates classes buried in noise.
async fn criterion_5() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let classes = ["alpha", "beta", "gamma"];
    let (per, dim) = (100, 512);
    let mut r = common::rng(42);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| common::gaussian(&mut r) * 0.15).collect()).collect();
    let path = tmp.path().join("points.jsonl");
    let mut lines = String::new();
    for i in 0..3 * per {
        let c = classes[i % 3];
        lines.push_str(&serde_json::json!({"text": format!("point {i}"), "label": c}).to_string());
        lines.push('\n');
    }
    std::fs::write(&path, lines).map_err(|e| e.to_string())?;
    let dataset = common::load_text(&path);
    let fixture: HashMap<_, _> = dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = (0..dim).map(|d| (centers[i % 3][d] + common::gaussian(&mut r)) as f32).collect();
            (s.id.clone(), v)
        })
        .collect();
    let answer = "This is class {label}.";
    let mocks = Mocks::start(
        MockEmbedderConfig {
            dim,
            anchors: classes.iter().map(|c| answer.replace("{label}", c)).collect(),
            fixture,
            ..MockEmbedderConfig::default()
        },
        MockClassifierConfig {
            answers: common::truth_answers(&dataset, answer),
            ..MockClassifierConfig::default()
        },
    )
    .await;
    let config = mocks.config(dim, &tmp.path().join("work"));
    let pipe = Pipeline::new(
        Arc::new(Gateway::new(config.gateway.clone()).map_err(|e| e.to_string())?),
        Workspace::new(&config.workdir),
    );
    let session = pipe.workspace().open_session(&dataset, &config, None).map_err(|e| e.to_string())?;
    let prompt = GuidingPrompt::new("Which class is this? Answer: This is class {class}.", vec![SlotSpec::new("class", classes)])
        .map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut ok = true;
    for method in [ProjectorMethod::Tsne, ProjectorMethod::Isomap] {
        let mut projector = ProjectorSpec::new(method);
        projector.seed = 42;
        let request = JobRequest {
            prompt: prompt.clone(),
            projector,
            alpha_grid: vec![0.5, 1.0],
        };
        let bundle = pipe
            .run(&session, &dataset, &request, &JobHandle::detached())
            .await
            .map_err(|e| e.to_string())?;
        let (fused, base) = (&bundle.metrics[0], &bundle.metrics[1]);
        ok &= fused.silhouette > base.silhouette
            && fused.trustworthiness >= base.trustworthiness - 0.02
            && fused.continuity >= base.continuity - 0.02;
        details.push(format!(
            "{method}: S {:.3} -> {:.3}, T {:.3} -> {:.3}, C {:.3} -> {:.3}",
            base.silhouette, fused.silhouette, base.trustworthiness, fused.trustworthiness, base.continuity, fused.continuity
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    check(ok && secs < 120.0, format!("{}; {secs:.1} s", details.join("; ")))
}

/// t-SNE calibration, gradient and convergence.
fn criterion_6() -> Outcome {
    let mut r = common::rng(6);
    let mut worst_h = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(10..=80);
        let dim = r.random_range(2..=10);
        let x = common::uniform_points(&mut r, n, dim);
        let perplexity = r.random_range(2.0..(n - 1) as f64 / 3.0);
        let cal = tsne_calibrate(&pairwise_distances(x.view()).map_err(|e| e.to_string())?, perplexity)
            .map_err(|e| e.to_string())?;
        for h in &cal.entropies {
            worst_h = worst_h.max((h.exp2() - perplexity).abs());
        }
    }

    let x = common::uniform_points(&mut r, 6, 3);
    let p = joint_probabilities(&tsne_calibrate(&pairwise_distances(x.view()).unwrap(), 2.0).map_err(|e| e.to_string())?);
    let y: Vec<[f64; 2]> = (0..6).map(|_| [common::gaussian(&mut r), common::gaussian(&mut r)]).collect();
    let grad = kl_gradient(p.view(), &y, 1.0);
    let h = 1e-5;
    let mut worst_g = 0.0f64;
    for i in 0..6 {
        for c in 0..2 {
            let (mut up, mut down) = (y.clone(), y.clone());
            up[i][c] += h;
            down[i][c] -= h;
            let fd = (kl_divergence(p.view(), &up) - kl_divergence(p.view(), &down)) / (2.0 * h);
            worst_g = worst_g.max((grad[i][c] - fd).abs() / fd.abs().max(1e-8));
        }
    }

    let (blobs, _) = common::blobs(6, 4, 40, 10, 1.0);
    let params = TsneParams {
        iterations: 1000,
        seed: 42,
        ..TsneParams::default()
    };
    let layout = tsne(blobs.view(), &params, None).map_err(|e| e.to_string())?;
    let (kl300, kl1000) = (trace_at(&layout, 300), trace_at(&layout, 1000));
    let kl_ok = matches!((kl300, kl1000), (Some(a), Some(b)) if b < a);
    check(
        worst_h < 1e-4 && worst_g < 1e-4 && kl_ok,
        format!(
            "max |2^H - p| {worst_h:.1e}; max grad rel err {worst_g:.1e}; KL(300) {:.4} KL(1000) {:.4}",
            kl300.unwrap_or(f64::NAN),
            kl1000.unwrap_or(f64::NAN)
        ),
    )
}

/// MDS recovery, Isomap/MDS agreement, quarter-circle geodesic.
fn criterion_7() -> Outcome {
    let mut r = common::rng(7);
    let config: Vec<[f64; 2]> = (0..40).map(|_| [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect();
    let truth = Layout2D::new(config.clone(), "truth");
    let mds = classical_mds(&DistanceMatrix::from_points_2d(&config)).map_err(|e| e.to_string())?;
    let aligned = procrustes_align(&mds, &truth).map_err(|e| e.to_string())?;
    let mds_res = sum_sq_residual(&aligned.points, &truth.points);

    let x = common::uniform_points(&mut r, 30, 5);
    let d = pairwise_distances(x.view()).map_err(|e| e.to_string())?;
    let (iso, _) = isomap_from_distances(&d, 29).map_err(|e| e.to_string())?;
    let plain = classical_mds(&d).map_err(|e| e.to_string())?;
    let iso_aligned = procrustes_align(&iso, &plain).map_err(|e| e.to_string())?;
    let iso_err = iso_aligned
        .points
        .iter()
        .zip(&plain.points)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);

    let n = 100;
    let arc: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let (_, geo) = isomap_from_distances(&to_dm(&oracles::dist_matrix(&arc)), 4).map_err(|e| e.to_string())?;
    let g = geo.get(0, n - 1);
    let rel = (g - std::f64::consts::FRAC_PI_2).abs() / std::f64::consts::FRAC_PI_2;
    check(
        mds_res < 1e-6 && iso_err < 1e-9 && rel < 0.01,
        format!("MDS residual {mds_res:.1e}; Isomap vs MDS {iso_err:.1e}; geodesic {g:.5} ({:.3}% off)", rel * 100.0),
    )
}

/// Full pipeline on 300 images, then an idempotent re-run.
async fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = common::load_images(&common::image_fixture(tmp.path(), 10, 30));
    let mocks = Mocks::for_dataset(&dataset, common::DIGIT_ANSWER, 512).await;
    let config = mocks.config(512, &tmp.path().join("work"));
    let started = Instant::now();
    let mut pipe = Pipeline::new(
        Arc::new(Gateway::new(config.gateway.clone()).map_err(|e| e.to_string())?),
        Workspace::new(&config.workdir),
    );
    let prompt = GuidingPrompt::builtin("mnist_digits").map_err(|e| e.to_string())?;
    let session = pipe
        .workspace()
        .open_session(&dataset, &config, Some(prompt.clone()))
        .map_err(|e| e.to_string())?;
    let request = JobRequest::from_config(prompt, &config);
    let bundle = pipe
        .run(&session, &dataset, &request, &JobHandle::detached())
        .await
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(pipe.workspace().bundle_path(&bundle.id)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let valid = jsonschema::validator_for(&LayoutBundle::json_schema())
        .map_err(|e| e.to_string())?
        .is_valid(&doc);
    let first_calls = mocks.requests();
    pipe.reuse_bundles = false;
    pipe.run(&session, &dataset, &request, &JobHandle::detached())
        .await
        .map_err(|e| e.to_string())?;
    let extra = mocks.requests() - first_calls;
    check(
        secs < 60.0 && valid && extra == 0 && bundle.layouts.len() == request.alpha_grid.len(),
        format!("{} samples, {} layouts in {secs:.1} s; schema valid: {valid}; re-run calls: {extra}", bundle.n, bundle.layouts.len()),
    )
}

/// Classification time is linear in sample count and fast enough.
async fn criterion_9() -> Outcome {
    let counts = [500usize, 1000, 2000, 3000, 4000, 5000];
    let samples: Vec<Sample> = (0..5000)
        .map(|i| Sample::new(Payload::Text(format!("item {i}")), Some(format!("{}", i % 4)), format!("{i}")))
        .collect();
    let answers = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), format!("This is about {}.", common::TOPICS[i % 4])))
        .collect();
    let mocks = Mocks::start(
        MockEmbedderConfig::default(),
        MockClassifierConfig {
            answers,
            latency: Duration::from_millis(4),
            ..MockClassifierConfig::default()
        },
    )
    .await;
    let mut cfg = mocks.gateway(512);
    cfg.parallelism = 4;
    let prompt = GuidingPrompt::builtin("ag_news_topics").map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for &count in &counts {
        // A fresh client per count so connection reuse does not carry over.
        let gw = Gateway::new(cfg.clone()).map_err(|e| e.to_string())?;
        let refs: Vec<&Sample> = samples[..count].iter().collect();
        let started = Instant::now();
        let labels = gw.classify_batch(&refs, &prompt).await.map_err(|e| e.error.to_string())?;
        points.push((count as f64, started.elapsed().as_secs_f64()));
        if labels.len() != count {
            return Err(format!("{} labels for {count} samples", labels.len()));
        }
    }
    let m = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / m,
        points.iter().map(|p| p.1).sum::<f64>() / m,
    );
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let rate = points.iter().map(|p| p.0 / p.1).fold(f64::INFINITY, f64::min);
    check(
        r2 > 0.99 && rate >= 100.0,
        format!("R^2 {r2:.4}; slowest {rate:.0} classifications/s at parallelism 4"),
    )
}

/// Golden label file.
fn criterion_10() -> Outcome {
    let cases = common::label_golden();
    let malformed = cases.iter().filter(|c| c.strict_error.is_some()).count();
    let bad = common::check_label_golden(&cases);
    check(
        cases.len() == 20 && bad.is_empty(),
        format!("{} cases ({malformed} malformed), {} disagreements {bad:?}", cases.len(), bad.len()),
    )
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let criteria: Vec<(u32, Box<dyn FnOnce() -> Outcome>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(|| rt.block_on(criterion_5()))),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(|| rt.block_on(criterion_8()))),
        (9, Box::new(|| rt.block_on(criterion_9()))),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (id, run) in criteria {
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id}: FAIL  {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
