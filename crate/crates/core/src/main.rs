use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use semproj::gateway::mock::{mock_classify_server, mock_embed_server, MockClassifierConfig, MockEmbedderConfig};
use semproj::gateway::{Gateway, SlotSpec};
use semproj::projector::ProjectorMethod;
use semproj::store::{read_json, write_json, ClassFrom, Dataset, SampleId, TableFormat};
use semproj::studio::server::{self, BundleMetrics, JobSpec, SessionCreated};
use semproj::studio::{IngestRequest, JobHandle, Pipeline, Session, StudioConfig, StudioError, Workspace};
use semproj::Modality;

#[derive(Debug, Parser)]
#[command(name = "semproj", version, about = "Prompt-steerable dimensionality reduction")]
struct Cli {
    /// TOML configuration file; environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory for sessions, caches and bundles.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a dataset and open a session for it.
    Ingest {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        prompt: PromptArgs,
    },
    /// Compute (or load cached) data embeddings for a session.
    Embed {
        #[arg(long)]
        session: String,
    },
    /// Classify every sample under a guiding prompt and embed the answers.
    Classify {
        #[arg(long)]
        session: String,
        #[command(flatten)]
        prompt: PromptArgs,
    },
    /// Run the full pipeline and write a layout bundle.
    Project {
        /// Existing session; otherwise `--source` opens one.
        #[arg(long)]
        session: Option<String>,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long)]
        method: Option<ProjectorMethod>,
        /// Comma-separated fusion weights, e.g. `0,0.5,1`.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        k_neighbors: Option<usize>,
        /// Also copy the bundle JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a bundle's metrics as JSON.
    Metrics {
        #[arg(long)]
        bundle: String,
        /// Write the Shepard diagram pairs at `--alpha` as CSV.
        #[arg(long, requires = "alpha")]
        shepard_csv: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Serve the HTTP API (and the UI, if a static dir is configured).
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Write a bundle as JSON, optionally with one SVG scatterplot per alpha.
    Export {
        #[arg(long)]
        bundle: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Configuration commands.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Run deterministic mock embedder and classifier endpoints.
    Mock(MockArgs),
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Print the effective configuration as TOML.
    Show,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Image directory or text table (CSV / JSONL).
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long, value_enum)]
    modality: Option<Modality>,
    #[arg(long, value_enum, default_value = "subdir")]
    class_from: ClassFrom,
    #[arg(long, value_enum)]
    format: Option<TableFormat>,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long)]
    label_field: Option<String>,
    /// Skip unreadable or duplicate inputs instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    name: Option<String>,
}

impl SourceArgs {
    fn request(&self) -> Result<Option<IngestRequest>, StudioError> {
        let Some(source) = &self.source else {
            return Ok(None);
        };
        let modality = self.modality.unwrap_or(if source.is_dir() { Modality::Image } else { Modality::Text });
        Ok(Some(IngestRequest {
            source: source.clone(),
            modality,
            class_from: self.class_from,
            format: self.format,
            text_field: self.text_field.clone(),
            label_field: self.label_field.clone(),
            lenient: self.lenient,
            name: self.name.clone(),
        }))
    }
}

#[derive(Debug, Args)]
struct PromptArgs {
    /// Built-in prompt name.
    #[arg(long)]
    prompt_builtin: Option<String>,
    /// Prompt with `{slot}` placeholders; pair with `--slot`.
    #[arg(long)]
    prompt_template: Option<String>,
    /// `name=a|b|c`, repeatable.
    #[arg(long = "slot", value_parser = parse_slot)]
    slots: Vec<SlotSpec>,
}

fn parse_slot(s: &str) -> Result<SlotSpec, String> {
    let (name, vocab) = s.split_once('=').ok_or("expected name=a|b|c")?;
    Ok(SlotSpec::new(name.trim(), vocab.split('|').map(str::trim)))
}

impl PromptArgs {
    fn spec(&self) -> JobSpec {
        JobSpec {
            builtin_prompt: self.prompt_builtin.clone(),
            prompt_template: self.prompt_template.clone(),
            slots: (!self.slots.is_empty()).then(|| self.slots.clone()),
            ..JobSpec::default()
        }
    }

    fn given(&self) -> bool {
        self.prompt_builtin.is_some() || self.prompt_template.is_some()
    }
}

#[derive(Debug, Args)]
struct MockArgs {
    #[arg(long, default_value = "127.0.0.1:8081")]
    embed_addr: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:8082")]
    classify_addr: SocketAddr,
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Texts mapped to fixed orthonormal vectors, `|`-separated.
    #[arg(long, value_delimiter = '|')]
    anchors: Vec<String>,
    /// JSON object mapping sample id to answer sentence.
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Dataset whose truth labels generate answers via `--answer-template`.
    #[command(flatten)]
    truth: SourceArgs,
    /// Answer sentence with a `{label}` placeholder.
    #[arg(long, default_value = "The answer is {label}.")]
    answer_template: String,
}

fn print_json<T: Serialize>(value: &T) -> Result<(), StudioError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| StudioError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

struct Ctx {
    config: StudioConfig,
    workspace: Workspace,
}

impl Ctx {
    fn pipeline(&self) -> Result<Pipeline, StudioError> {
        let gateway = Arc::new(Gateway::new(self.config.gateway.clone())?);
        Ok(Pipeline::new(gateway, self.workspace.clone()))
    }

    fn open(&self, id: &str) -> Result<(Session, Dataset), StudioError> {
        let session = self.workspace.load_session(id)?;
        let dataset = Dataset::reload(&session.manifest)?;
        Ok((session, dataset))
    }

    fn ingest(&self, source: &SourceArgs, prompt: &PromptArgs) -> Result<(Session, Dataset), StudioError> {
        let req = source
            .request()?
            .ok_or_else(|| StudioError::BadRequest("--source is required".into()))?;
        let dataset = req.load()?;
        let default_prompt = if prompt.given() { Some(prompt.spec().prompt(None)?) } else { None };
        let session = self.workspace.open_session(&dataset, &self.config, default_prompt)?;
        for w in &dataset.warnings {
            log::warn!("{w}");
        }
        Ok((session, dataset))
    }
}

async fn run(cli: Cli) -> Result<(), StudioError> {
    let mut config = StudioConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.workdir {
        config.workdir = dir;
    }
    let ctx = Ctx {
        workspace: Workspace::new(&config.workdir),
        config,
    };
    match cli.command {
        Command::Ingest { source, prompt } => {
            let (session, _) = ctx.ingest(&source, &prompt)?;
            print_json(&SessionCreated {
                session_id: session.id.clone(),
                name: session.manifest.name.clone(),
                modality: session.manifest.modality,
                n: session.manifest.samples.len(),
            })
        }
        Command::Embed { session } => {
            let (session, dataset) = ctx.open(&session)?;
            let pipeline = ctx.pipeline()?;
            let records = pipeline.embed_stage(&session, &dataset).await?;
            print_json(&serde_json::json!({
                "session_id": session.id,
                "embedded": records.len(),
                "dim": records.first().map(|r| r.dim()),
                "gateway_calls": pipeline.gateway().calls(),
                "cache": session.caches.embeddings,
            }))
        }
        Command::Classify { session, prompt } => {
            let (session, dataset) = ctx.open(&session)?;
            let prompt = prompt.spec().prompt(session.prompt.as_ref())?;
            let pipeline = ctx.pipeline()?;
            let (labels, _) = pipeline.classify_stage(&session, &dataset, &prompt).await?;
            let mut counts: HashMap<String, usize> = HashMap::new();
            for l in &labels {
                *counts.entry(l.slot_values.get(&prompt.class_slot().name).cloned().unwrap_or_default()).or_default() += 1;
            }
            print_json(&serde_json::json!({
                "session_id": session.id,
                "prompt_hash": prompt.prompt_hash(),
                "classified": labels.len(),
                "parse_failures": labels.iter().filter(|l| !l.parse_ok).count(),
                "class_counts": counts,
                "gateway_calls": pipeline.gateway().calls(),
            }))
        }
        Command::Project {
            session,
            source,
            prompt,
            method,
            alpha_grid,
            seed,
            perplexity,
            iterations,
            k_neighbors,
            out,
        } => {
            let (session, dataset) = match &session {
                Some(id) => ctx.open(id)?,
                None => ctx.ingest(&source, &prompt)?,
            };
            let spec = JobSpec {
                method,
                alpha_grid,
                seed,
                perplexity,
                iterations,
                k_neighbors,
                ..prompt.spec()
            };
            let request = spec.to_request(&session)?;
            let pipeline = ctx.pipeline()?;
            let job = JobHandle::new("cli", &session.id);
            let bundle = pipeline
                .run(&session, &dataset, &request, &job)
                .await
                .map_err(|e| e.source)?;
            let path = ctx.workspace.bundle_path(&bundle.id);
            if let Some(out) = &out {
                write_json(out, &bundle)?;
            }
            info!("bundle {} written to {}", bundle.id, path.display());
            print_json(&serde_json::json!({
                "bundle_id": bundle.id,
                "session_id": session.id,
                "path": path,
                "gateway_calls": pipeline.gateway().calls(),
            }))
        }
        Command::Metrics {
            bundle,
            shepard_csv,
            alpha,
        } => {
            let bundle = ctx.workspace.load_bundle(&bundle)?;
            if let (Some(path), Some(alpha)) = (&shepard_csv, alpha) {
                let (session, dataset) = ctx.open(&bundle.session_id)?;
                let diagram = ctx.pipeline()?.shepard_diagram(&session, &dataset, &bundle, alpha).await?;
                diagram.write_csv(path)?;
            }
            print_json(&BundleMetrics {
                bundle_id: bundle.id.clone(),
                alpha_grid: bundle.alpha_grid.clone(),
                metrics: bundle.metrics.clone(),
            })
        }
        Command::Serve { bind, static_dir } => {
            let mut config = ctx.config;
            if let Some(b) = bind {
                config.server.bind = b;
            }
            if static_dir.is_some() {
                config.server.static_dir = static_dir;
            }
            eprintln!("serving on http://{}", config.server.bind);
            server::serve(config).await
        }
        Command::Export { bundle, out, svg } => {
            let bundle = ctx.workspace.load_bundle(&bundle)?;
            write_json(&out, &bundle)?;
            if let Some(dir) = svg {
                std::fs::create_dir_all(&dir)?;
                for (name, doc) in bundle.svg_exports() {
                    std::fs::write(dir.join(name), doc)?;
                }
            }
            Ok(())
        }
        Command::Config { action: ConfigAction::Show } => {
            print!("{}", ctx.config.to_toml());
            Ok(())
        }
        Command::Mock(args) => run_mock(args).await,
    }
}

fn answers_from_truth(source: &SourceArgs, template: &str) -> Result<HashMap<SampleId, String>, StudioError> {
    let Some(req) = source.request()? else {
        return Ok(HashMap::new());
    };
    let dataset = req.load()?;
    Ok(dataset
        .samples
        .iter()
        .filter_map(|s| {
            s.truth_label
                .as_ref()
                .map(|t| (s.id.clone(), template.replace("{label}", t)))
        })
        .collect())
}

async fn run_mock(args: MockArgs) -> Result<(), StudioError> {
    let mut answers = answers_from_truth(&args.truth, &args.answer_template)?;
    if let Some(path) = &args.answers {
        let file: HashMap<SampleId, String> = read_json(Path::new(path))?;
        answers.extend(file);
    }
    let embed = mock_embed_server(
        MockEmbedderConfig {
            dim: args.dim,
            anchors: args.anchors,
            ..MockEmbedderConfig::default()
        },
        args.embed_addr,
    )
    .await?;
    let classify = mock_classify_server(
        MockClassifierConfig {
            answers,
            ..MockClassifierConfig::default()
        },
        args.classify_addr,
    )
    .await?;
    println!("embed_url = {}", embed.url());
    println!("classify_url = {}", classify.url());
    std::future::pending::<()>().await;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
