//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Duration;

use image::{DynamicImage, GrayImage, ImageFormat, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use semproj::gateway::mock::{
    localhost_any, mock_classify_server, mock_embed_server, MockClassifierConfig, MockEmbedderConfig, MockServer,
};
use semproj::gateway::GatewayConfig;
use semproj::studio::{IngestRequest, StudioConfig};
use semproj::{Dataset, Modality, SampleId};

pub const DIGIT_ANSWER: &str = "This is digit {label}.";
pub const TOPICS: [&str; 4] = ["World", "Sports", "Business", "Science/Technology"];

/// 28×28 grayscale PNG: a class-dependent bar pattern plus a unique
/// per-image pixel so every file has distinct content.
pub fn digit_png(class: usize, index: usize) -> Vec<u8> {
    let img = GrayImage::from_fn(28, 28, |x, y| {
        let bar = (x as usize + class * 3) % 10 < 3 || (y as usize + class) % 9 == 0;
        let v = if bar { 200 } else { 20 };
        Luma([if x == (index % 28) as u32 && y == (index / 28 % 28) as u32 { 255 } else { v }])
    });
    let mut img = img;
    // Encode the index in the last row so indices ≥ 784 stay distinct.
    for (k, px) in img.rows_mut().last().unwrap().enumerate() {
        px.0[0] = ((index >> (k % 16)) & 1) as u8 * 7 + (k as u8);
    }
    let mut bytes = Vec::new();
    DynamicImage::ImageLuma8(img)
        .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .unwrap();
    bytes
}

/// `<root>/<class>/<i>.png` for `classes × per_class` images.
pub fn image_fixture(root: &Path, classes: usize, per_class: usize) -> PathBuf {
    let dir = root.join("digits");
    for c in 0..classes {
        let sub = dir.join(c.to_string());
        std::fs::create_dir_all(&sub).unwrap();
        for i in 0..per_class {
            std::fs::write(sub.join(format!("{i:04}.png")), digit_png(c, c * per_class + i)).unwrap();
        }
    }
    dir
}

/// JSONL table with `text` and `label` columns, `per_class` rows per topic.
pub fn text_fixture(path: &Path, per_class: usize) -> PathBuf {
    let words = ["market", "match", "election", "chip", "league", "rates", "summit", "orbit"];
    let mut out = String::new();
    for i in 0..per_class {
        for (t, topic) in TOPICS.iter().enumerate() {
            let text = format!(
                "{} report {} on {} and {}",
                topic,
                i,
                words[(i + t) % words.len()],
                words[(3 * i + t) % words.len()]
            );
            out.push_str(&serde_json::json!({"text": text, "label": topic}).to_string());
            out.push('\n');
        }
    }
    std::fs::write(path, out).unwrap();
    path.to_path_buf()
}

pub fn load_images(dir: &Path) -> Dataset {
    IngestRequest::new(dir, Modality::Image).load().unwrap()
}

pub fn load_text(path: &Path) -> Dataset {
    let mut req = IngestRequest::new(path, Modality::Text);
    req.label_field = Some("label".into());
    req.load().unwrap()
}

/// Answer sentences from truth labels, `{label}` substituted.
pub fn truth_answers(dataset: &Dataset, template: &str) -> HashMap<SampleId, String> {
    dataset
        .samples
        .iter()
        .map(|s| (s.id.clone(), template.replace("{label}", s.truth_label.as_deref().unwrap_or("?"))))
        .collect()
}

pub struct Mocks {
    pub embed: MockServer,
    pub classify: MockServer,
}

impl Mocks {
    pub async fn start(embed: MockEmbedderConfig, classify: MockClassifierConfig) -> Mocks {
        Mocks {
            embed: mock_embed_server(embed, localhost_any()).await.unwrap(),
            classify: mock_classify_server(classify, localhost_any()).await.unwrap(),
        }
    }

    /// Mocks answering every sample of `dataset` from its truth label.
    pub async fn for_dataset(dataset: &Dataset, template: &str, dim: usize) -> Mocks {
        Self::start(
            MockEmbedderConfig {
                dim,
                ..MockEmbedderConfig::default()
            },
            MockClassifierConfig {
                answers: truth_answers(dataset, template),
                ..MockClassifierConfig::default()
            },
        )
        .await
    }

    pub fn gateway(&self, dim: usize) -> GatewayConfig {
        GatewayConfig {
            embed_url: self.embed.url(),
            classify_url: self.classify.url(),
            expected_dim: dim,
            backoff_base: Duration::from_millis(1),
            timeout: Duration::from_secs(30),
            ..GatewayConfig::default()
        }
    }

    pub fn config(&self, dim: usize, workdir: &Path) -> StudioConfig {
        StudioConfig {
            workdir: workdir.to_path_buf(),
            gateway: self.gateway(dim),
            ..StudioConfig::default()
        }
    }

    pub fn requests(&self) -> u64 {
        self.embed.stats.requests() + self.classify.stats.requests()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Row-major `n × dim` uniform points in `[0, 1)`.
pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((n, dim), |_| rng.random::<f64>())
}

/// `clusters` Gaussian blobs of `per` points around well-separated centers.
pub fn blobs(seed: u64, clusters: usize, per: usize, dim: usize, spread: f64) -> (ndarray::Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| gaussian(&mut r) * 10.0).collect())
        .collect();
    let mut x = ndarray::Array2::zeros((clusters * per, dim));
    let mut labels = Vec::with_capacity(clusters * per);
    for c in 0..clusters {
        for i in 0..per {
            let row = c * per + i;
            for d in 0..dim {
                x[[row, d]] = centers[c][d] + spread * gaussian(&mut r);
            }
            labels.push(c);
        }
    }
    (x, labels)
}

/// One canned classifier answer with its hand-derived parse.
#[derive(Debug, serde::Deserialize)]
pub struct GoldenLabel {
    pub prompt: String,
    pub answer: String,
    pub slots: std::collections::BTreeMap<String, String>,
    pub strict_error: Option<String>,
}

pub fn label_golden() -> Vec<GoldenLabel> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/label_golden.json");
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Failure descriptions for golden cases that do not parse as recorded;
/// empty when all agree.
pub fn check_label_golden(cases: &[GoldenLabel]) -> Vec<String> {
    use semproj::gateway::{parse_label, GatewayError, GuidingPrompt};
    let mut bad = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let prompt = GuidingPrompt::builtin(&case.prompt).unwrap();
        match parse_label(&case.answer, &prompt, false) {
            Ok(got) if got == case.slots => {}
            other => bad.push(format!("case {i} lenient: {other:?}")),
        }
        match (parse_label(&case.answer, &prompt, true), &case.strict_error) {
            (Ok(got), None) if got == case.slots => {}
            (Err(GatewayError::ParseFailure(slot)), Some(want)) if &slot == want => {}
            (other, _) => bad.push(format!("case {i} strict: {other:?}")),
        }
    }
    bad
}
