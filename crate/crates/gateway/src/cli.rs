//! The `shroud` command line.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shroud_core::anonymizer::AnonymizedPayload;
use shroud_core::corpus::{ChunkConfig, Corpus, HeuristicExtractor, LlmMetadataExtractor, MetadataExtractor};
use shroud_core::detection::EntityKey;
use shroud_core::mapping::{new_session_id, SessionMapping};
use shroud_core::metrics::{load_fixture, run_harness, HarnessConfig, Strategy};
use shroud_core::pipeline::{Pipeline, PipelineError, Prepared};
use shroud_core::provider::{AnswerProvider, LocalEndpoint, ProviderTag};
use shroud_core::synth::{harness_fixture, HarnessShape, HARNESS_SEED};

use crate::app::{self, AppState};
use crate::config::GatewayConfig;
use crate::{build_pipeline, build_providers};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_LEAK_GUARD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shroud", version, about = "Privacy gateway for question answering over contracts")]
pub struct Cli {
    /// TOML config file; `SHROUD_*` variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus directory, overriding the config.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest every .txt file in a directory and write its metadata index.
    Ingest { dir: PathBuf },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Answer one question.
    Ask {
        #[arg(long)]
        question: String,
        /// Send the payload without asking for confirmation.
        #[arg(long)]
        approve_auto: bool,
        #[arg(long, default_value = "mock")]
        provider: ProviderTag,
        /// Chunks to retrieve.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Interactive question loop over one session.
    Repl {
        #[arg(long, default_value = "mock")]
        provider: ProviderTag,
    },
    /// Run the anonymization metrics harness.
    Eval {
        #[arg(long)]
        harness: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long, default_value_t = HARNESS_SEED)]
        seed: u64,
    },
    /// Generate the synthetic harness fixture.
    HarnessGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = HARNESS_SEED)]
        seed: u64,
    },
}

/// Streams the CLI reads from and writes to.
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
    fn pipeline(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_PIPELINE, message: message.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_leak_guard() { EXIT_LEAK_GUARD } else { EXIT_PIPELINE };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::pipeline(e)
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { write!(io.err, "{rendered}") } else { write!(io.out, "{rendered}") };
            return code;
        }
    };
    match dispatch(cli, io) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(io.err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<GatewayConfig, Failure> {
    let mut config = GatewayConfig::load(cli.config.as_deref()).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(dir) = &cli.corpus {
        config.corpus_dir = dir.clone();
    }
    Ok(config)
}

fn load_pipeline(config: &GatewayConfig) -> Result<Pipeline, Failure> {
    let corpus = Corpus::load(&config.corpus_dir, ChunkConfig::default()).map_err(Failure::pipeline)?;
    build_pipeline(config, corpus).map_err(|e| Failure::usage(e.to_string()))
}

fn session_rng(config: &GatewayConfig) -> ChaCha8Rng {
    match config.seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_rng(&mut rand::rng()),
    }
}

fn provider_for(config: &GatewayConfig, tag: ProviderTag) -> Result<Arc<dyn AnswerProvider>, Failure> {
    build_providers(config)
        .get(tag)
        .ok_or_else(|| Failure::usage(format!("provider {tag} is not configured (set SHROUD_{}_URL)", tag.to_string().to_uppercase())))
}

fn dispatch(cli: Cli, io: &mut Io<'_>) -> CliResult {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { dir } => ingest(&config, dir, io),
        Command::Serve { port } => serve(config, port),
        Command::Ask { question, approve_auto, provider, k } => {
            let pipeline = load_pipeline(&config)?;
            let provider = provider_for(&config, provider)?;
            let mut session = SessionMapping::empty(new_session_id());
            let mut rng = session_rng(&config);
            let result = ask_once(&pipeline, &question, k, &mut session, &mut rng, provider.as_ref(), approve_auto, io);
            session.close();
            result
        }
        Command::Repl { provider } => repl(&config, provider, io),
        Command::Eval { harness, format, seed } => eval(&config, harness, format, seed, io),
        Command::HarnessGen { out, seed } => harness_gen(out, seed, io),
    }
}

fn ingest(config: &GatewayConfig, dir: PathBuf, io: &mut Io<'_>) -> CliResult {
    let extractor: Box<dyn MetadataExtractor> = match &config.local {
        Some(local) => Box::new(LlmMetadataExtractor::new(LocalEndpoint::new(local.clone()))),
        None => Box::new(HeuristicExtractor),
    };
    let (corpus, outcomes) =
        Corpus::ingest_dir(&dir, ChunkConfig::default(), extractor.as_ref()).map_err(Failure::pipeline)?;
    for o in &outcomes {
        let doc = corpus.document(&o.doc_id).expect("ingested document is stored");
        write!(io.out, "{}  {}  {} chunks", o.doc_id, doc.source_path, corpus.chunks(&o.doc_id).len())?;
        if let Some(w) = &o.warning {
            write!(io.out, "  (metadata extraction failed: {w})")?;
        }
        writeln!(io.out)?;
    }
    writeln!(io.out, "{} documents ingested into {}", corpus.len(), dir.display())?;
    Ok(())
}

fn serve(mut config: GatewayConfig, port: Option<u16>) -> CliResult {
    if let Some(p) = port {
        config.port = p;
    }
    let pipeline = load_pipeline(&config)?;
    let state = AppState::new(pipeline, build_providers(&config), config.seed);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let every = (config.ttl() / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
        app::spawn_purger(Arc::clone(&state.store), config.ttl(), every);
        let addr = SocketAddr::from(([127, 0, 0, 1], config.port));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, documents = state.pipeline.corpus().len(), "gateway listening");
        axum::serve(listener, app::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn print_review(prepared: &Prepared, session: &SessionMapping, payload: &AnonymizedPayload, io: &mut Io<'_>) -> CliResult {
    if let Some(w) = &prepared.warning {
        writeln!(io.out, "warning: {w}")?;
    }
    writeln!(io.out, "Entities:")?;
    for key in prepared.entities.keys() {
        let original = prepared.entities.original_surface(key).unwrap_or(&key.surface);
        let chosen = session.chosen(key).map_err(Failure::pipeline)?;
        writeln!(io.out, "  [{key}] {original} -> {chosen}")?;
    }
    writeln!(io.out, "Payload preview:")?;
    writeln!(io.out, "  Q: {}", payload.query_text())?;
    for c in payload.chunks() {
        writeln!(io.out, "  {}: {}", c.doc_ref, c.text.replace('\n', " "))?;
    }
    Ok(())
}

/// Shows the review and reads decisions until the payload is approved or
/// declined. Returns the payload to send, if any.
fn review(
    pipeline: &Pipeline,
    prepared: &Prepared,
    session: &mut SessionMapping,
    rng: &mut ChaCha8Rng,
    mut payload: AnonymizedPayload,
    io: &mut Io<'_>,
) -> Result<Option<AnonymizedPayload>, Failure> {
    loop {
        print_review(prepared, session, &payload, io)?;
        write!(io.out, "Send this payload? [y]es / [n]o / reroll <entity-key>: ")?;
        io.out.flush()?;
        let mut line = String::new();
        if io.input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let line = line.trim();
        match line {
            "y" | "yes" => return Ok(Some(payload)),
            "n" | "no" | "" => return Ok(None),
            _ => {
                let Some(raw) = line.strip_prefix("reroll ") else {
                    writeln!(io.out, "unrecognized answer {line:?}")?;
                    continue;
                };
                let key: EntityKey = match raw.trim().parse() {
                    Ok(k) if prepared.entities.contains(&k) => k,
                    _ => {
                        writeln!(io.out, "no entity {:?} in this query", raw.trim())?;
                        continue;
                    }
                };
                session.reroll(&key, rng).map_err(PipelineError::from)?;
                payload = pipeline.anonymize(prepared, session)?;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ask_once(
    pipeline: &Pipeline,
    question: &str,
    k: Option<usize>,
    session: &mut SessionMapping,
    rng: &mut ChaCha8Rng,
    provider: &dyn AnswerProvider,
    approve_auto: bool,
    io: &mut Io<'_>,
) -> CliResult {
    let prepared = pipeline.prepare(question, k)?;
    let payload = pipeline.bind(&prepared, session, rng)?;
    let payload = if approve_auto {
        payload
    } else {
        match review(pipeline, &prepared, session, rng, payload, io)? {
            Some(p) => p,
            None => {
                writeln!(io.out, "Not sent.")?;
                return Ok(());
            }
        }
    };
    let pair = pipeline.answer(&prepared, &payload, session, provider)?;
    writeln!(io.out, "Anonymized answer: {}", pair.anonymized)?;
    writeln!(io.out, "Answer: {}", pair.recovered)?;
    for u in &pair.unresolved {
        writeln!(io.out, "  unresolved {} mention left as is: {}", u.entity_type, u.surface)?;
    }
    Ok(())
}

fn repl(config: &GatewayConfig, tag: ProviderTag, io: &mut Io<'_>) -> CliResult {
    let pipeline = load_pipeline(config)?;
    let provider = provider_for(config, tag)?;
    let mut session = SessionMapping::empty(new_session_id());
    let mut rng = session_rng(config);
    writeln!(io.out, "Session {} ({} documents). Empty line or \"quit\" ends it.", session.session_id(), pipeline.corpus().len())?;
    let result = loop {
        write!(io.out, "question> ")?;
        io.out.flush()?;
        let mut line = String::new();
        if io.input.read_line(&mut line)? == 0 {
            break Ok(());
        }
        let question = line.trim();
        if question.is_empty() || question == "quit" {
            break Ok(());
        }
        match ask_once(&pipeline, question, None, &mut session, &mut rng, provider.as_ref(), false, io) {
            Ok(()) => {}
            // a leak-guard abort ends the session; other failures only the question
            Err(f) if f.code == EXIT_LEAK_GUARD => break Err(f),
            Err(f) => writeln!(io.err, "error: {}", f.message)?,
        }
    };
    session.close();
    writeln!(io.out, "Session closed; mappings discarded.")?;
    result
}

fn eval(config: &GatewayConfig, harness: PathBuf, format: Format, seed: u64, io: &mut Io<'_>) -> CliResult {
    let fixture = load_fixture(&harness).map_err(|e| Failure::usage(e.to_string()))?;
    let harness_config = HarnessConfig { mapping: config.mapping(), ..HarnessConfig::new(seed) };
    let report = run_harness(&fixture, &[Strategy::SessionMapping, Strategy::FixedDictionary], &harness_config)
        .map_err(Failure::pipeline)?;
    match format {
        Format::Json => write!(io.out, "{}", report.to_json())?,
        Format::Table => write!(io.out, "{}", report.to_table())?,
    }
    Ok(())
}

fn harness_gen(out: PathBuf, seed: u64, io: &mut Io<'_>) -> CliResult {
    let fixture = harness_fixture(seed, HarnessShape::default());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out, render_fixture(&fixture))?;
    writeln!(io.out, "wrote {} pairs ({:.1} entities per pair) to {}", fixture.pairs.len(), fixture.mean_entities_per_pair(), out.display())?;
    Ok(())
}

/// Canonical on-disk form of a harness fixture.
pub fn render_fixture(fixture: &shroud_core::synth::HarnessFixture) -> String {
    let mut s = serde_json::to_string_pretty(fixture).expect("fixture serializes");
    s.push('\n');
    s
}
