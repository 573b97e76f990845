use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use gbqa_core::analytics::{aggregate, parse_period, summarize, TimeStep};
use gbqa_core::chart::{heatmap_svg, line_chart_svg};
use gbqa_core::corpus::{extract_case, DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
use gbqa_core::demo::DemoChat;
use gbqa_core::epw::parse_epw;
use gbqa_core::llm::{ChatClient, RemoteChat, RemoteChatConfig};
use gbqa_core::orchestrator::{Orchestrator, OrchestratorConfig};
use gbqa_core::retrieval::{Embedder, OfflineEmbedder, RemoteEmbedder};
use gbqa_core::session::SessionStore;
use gbqa_core::tools::KnowledgeBase;
use gbqa_core::artifacts::ArtifactStore;
use gbqa_gateway::{kb, router, spawn_eviction, AppState};

#[derive(Parser)]
#[command(name = "gbqa", version, about = "Green-building design QA: weather analysis, case retrieval and a tool-calling chat gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Build a knowledge-base directory from case files and reference texts.
    Ingest(IngestArgs),
    /// Print a summary of an EPW file.
    Summary { file: PathBuf },
    /// Render a chart of one EPW field to an SVG file.
    Chart(ChartArgs),
    /// Turn raw project descriptions into case records with the configured model.
    Extract(ExtractArgs),
}

#[derive(Args)]
struct LlmArgs {
    /// Base URL of a chat-completions API.
    #[arg(long, env = "GBQA_LLM_BASE_URL", default_value = "https://api.openai.com/v1")]
    llm_base_url: String,
    #[arg(long, env = "GBQA_LLM_MODEL")]
    llm_model: Option<String>,
    #[arg(long, env = "GBQA_LLM_API_KEY", hide_env_values = true)]
    llm_api_key: Option<String>,
    /// Forward uploaded images to the model.
    #[arg(long, env = "GBQA_LLM_VISION")]
    llm_vision: bool,
    #[arg(long, env = "GBQA_LLM_TIMEOUT_SECS", default_value_t = 120)]
    llm_timeout_secs: u64,
}

impl LlmArgs {
    fn client(&self) -> Result<RemoteChat, String> {
        let model = self.llm_model.clone().ok_or("no model configured (set GBQA_LLM_MODEL or --llm-model)")?;
        RemoteChat::new(RemoteChatConfig {
            base_url: self.llm_base_url.clone(),
            model,
            api_key: self.llm_api_key.clone(),
            timeout: Duration::from_secs(self.llm_timeout_secs),
            vision: self.llm_vision,
        })
        .map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// Embeddings endpoint base URL; the offline trigram embedder is used when unset.
    #[arg(long, env = "GBQA_EMBED_BASE_URL")]
    embed_base_url: Option<String>,
    #[arg(long, env = "GBQA_EMBED_MODEL", default_value = "text-embedding-3-small")]
    embed_model: String,
    #[arg(long, env = "GBQA_EMBED_API_KEY", hide_env_values = true)]
    embed_api_key: Option<String>,
}

impl EmbedArgs {
    fn embedder(&self) -> Result<Arc<dyn Embedder>, String> {
        match &self.embed_base_url {
            None => Ok(Arc::new(OfflineEmbedder)),
            Some(url) => RemoteEmbedder::new(url, &self.embed_model, self.embed_api_key.clone(), Duration::from_secs(60))
                .map(|e| Arc::new(e) as Arc<dyn Embedder>)
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "GBQA_BIND", default_value = "127.0.0.1:8000")]
    bind: String,
    /// Uploads and artifacts are kept here.
    #[arg(long, env = "GBQA_DATA_DIR", default_value = "gbqa-data")]
    data_dir: PathBuf,
    /// Knowledge-base directory produced by `gbqa ingest`.
    #[arg(long, env = "GBQA_KB_DIR")]
    kb_dir: Option<PathBuf>,
    /// Answer with the built-in keyword demo model instead of a remote one.
    #[arg(long, env = "GBQA_MOCK_LLM")]
    mock_llm: bool,
    /// Allowed cross-origin callers, comma separated; `*` allows any.
    #[arg(long, env = "GBQA_CORS_ORIGINS", value_delimiter = ',', default_value = "http://localhost:5173")]
    cors_origins: Vec<String>,
    #[arg(long, env = "GBQA_MAX_UPLOAD_MB", default_value_t = 20)]
    max_upload_mb: usize,
    #[arg(long, env = "GBQA_SESSION_TTL_SECS", default_value_t = 7200)]
    session_ttl_secs: u64,
    #[arg(long, env = "GBQA_MAX_TOOL_ROUNDS", default_value_t = 5)]
    max_tool_rounds: usize,
    #[command(flatten)]
    llm: LlmArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of case JSON files.
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Directory with textbooks/, standards/ and manuals/ subfolders of .txt or .md files.
    #[arg(long)]
    texts: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    #[arg(long, default_value_t = DEFAULT_CHUNK_OVERLAP)]
    overlap: usize,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Args)]
struct ChartArgs {
    file: PathBuf,
    #[arg(long, default_value = "daily")]
    step: String,
    #[arg(long, default_value = "YEAR")]
    period: String,
    #[arg(long, default_value = "dry_bulb_temperature")]
    field: String,
    /// Hour-of-day by day grid instead of a line chart.
    #[arg(long)]
    heatmap: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Raw text files, one project each.
    files: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
}

async fn serve(args: ServeArgs) -> Result<(), String> {
    let llm: Arc<dyn ChatClient> = if args.mock_llm { Arc::new(DemoChat) } else { Arc::new(args.llm.client()?) };
    let embedder = args.embed.embedder()?;
    let knowledge = match &args.kb_dir {
        Some(dir) => kb::load(dir, embedder).map_err(|e| e.to_string())?,
        None => KnowledgeBase::empty(embedder),
    };
    let artifacts = ArtifactStore::open(args.data_dir.join("artifacts")).map_err(|e| e.to_string())?;
    let config = OrchestratorConfig {
        max_tool_rounds: args.max_tool_rounds,
        max_upload_bytes: args.max_upload_mb * 1024 * 1024,
        ..OrchestratorConfig::default()
    };
    let orchestrator = Orchestrator::new(llm, Arc::new(knowledge), artifacts, config);
    let sessions = SessionStore::new(args.data_dir.join("uploads"), Duration::from_secs(args.session_ttl_secs));
    let state = AppState::new(sessions, orchestrator);
    spawn_eviction(state.clone(), Duration::from_secs(300));

    let listener = tokio::net::TcpListener::bind(&args.bind).await.map_err(|e| format!("bind {}: {e}", args.bind))?;
    eprintln!("gbqa listening on http://{}", args.bind);
    axum::serve(listener, router(state, &args.cors_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}

async fn ingest(args: IngestArgs) -> Result<(), String> {
    let embedder = args.embed.embedder()?;
    let report = kb::ingest(
        args.cases.as_deref(),
        args.texts.as_deref(),
        &args.out,
        embedder.as_ref(),
        args.chunk_size,
        args.overlap,
    )
    .await
    .map_err(|e| e.to_string())?;
    println!(
        "{} cases ({} chunks), {} reference-text chunks -> {}",
        report.cases,
        report.case_chunks,
        report.text_chunks,
        args.out.display()
    );
    Ok(())
}

fn read_epw(path: &PathBuf) -> Result<gbqa_core::epw::WeatherSeries, String> {
    let raw = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_epw(&raw).map_err(|e| format!("{}: {e}", path.display()))
}

fn chart(args: ChartArgs) -> Result<(), String> {
    let series = read_epw(&args.file)?;
    let period = parse_period(&args.period).map_err(|e| e.to_string())?;
    let station = series.header().station_name.clone();
    let svg = if args.heatmap {
        let title = format!("Hourly {}, {period}, {station}", args.field);
        heatmap_svg(&series, &args.field, period, &title).map_err(|e| e.to_string())?.0
    } else {
        let step: TimeStep = args.step.parse().map_err(|e: gbqa_core::analytics::AnalyticsError| e.to_string())?;
        let agg = aggregate(&series, &args.field, step, period).map_err(|e| e.to_string())?;
        let title = format!("{step} {}, {period}, {station}", args.field);
        line_chart_svg(&agg, &title).map_err(|e| e.to_string())?
    };
    std::fs::write(&args.out, svg).map_err(|e| format!("{}: {e}", args.out.display()))
}

async fn extract(args: ExtractArgs) -> Result<(), String> {
    let llm = args.llm.client()?;
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let mut failures = 0;
    for file in &args.files {
        let raw = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
        match extract_case(&raw, &llm).await {
            Ok(case) => {
                let path = args.out.join(format!("{}.json", case.case_id));
                let json = serde_json::to_vec_pretty(&case).map_err(|e| e.to_string())?;
                std::fs::write(&path, json).map_err(|e| e.to_string())?;
                println!("{} -> {}", file.display(), path.display());
            }
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", file.display());
            }
        }
    }
    if failures > 0 {
        return Err(format!("{failures} of {} files could not be extracted", args.files.len()));
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Serve(args) => serve(args).await,
        Command::Ingest(args) => ingest(args).await,
        Command::Summary { file } => read_epw(&file).and_then(|s| summarize(&s).map_err(|e| e.to_string())).map(|s| print!("{s}")),
        Command::Chart(args) => chart(args),
        Command::Extract(args) => extract(args).await,
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
