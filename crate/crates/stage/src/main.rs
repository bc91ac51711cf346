use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use improv_core::corpus::{build_vocab, corpus_files, ingest};
use improv_core::dialogue::{Generators, SceneConfig};
use improv_core::generation::{DocFreqs, NgramGenerator, DEFAULT_ORDER, DEFAULT_SMOOTHING};
use improv_stage::config::{self, ServerConfig, DEFAULT_MAX_VOCAB};
use improv_stage::rehearsal::{rehearse, Script};
use improv_stage::runtime::{self, RuntimeOptions, StageRuntime, SystemClock};
use improv_stage::Stage;
use tracing_subscriber::EnvFilter;

/// Stage server for a live improv show with an AI performer.
///
/// Without a subcommand, runs the server.
#[derive(Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    /// Directory of corpus `*.txt` files.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Sentiment lexicon TSV (defaults to the bundled one).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Serialized n-gram model (see `train`).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "IMPROV_OPERATOR_KEY")]
    operator_key: Option<String>,
    /// HTTP endpoint of an external candidate generator.
    #[arg(long)]
    remote_generator: Option<String>,
    /// TOML config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where finished transcripts and game results are written.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and tokenize a corpus directory; write the corpus and vocabulary files.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
        max_vocab: usize,
    },
    /// Train an n-gram model on a corpus directory and write it out.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
        smoothing: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
        max_vocab: usize,
    },
    /// Play a scripted scene against a model and print the transcript as JSON lines.
    Rehearse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Suggestion on the first line, then the human lines.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Write the selection traces as JSON lines here.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        None => serve(cli.serve),
        Some(Command::Ingest { corpus, out, vocab_out, max_vocab }) => {
            let corpus = ingest(&corpus_files(&corpus)?)?;
            std::fs::write(&out, corpus.to_text()).with_context(|| format!("cannot write {}", out.display()))?;
            if let Some(path) = vocab_out {
                let vocab = build_vocab(&corpus, max_vocab)?;
                std::fs::write(&path, vocab.to_text()).with_context(|| format!("cannot write {}", path.display()))?;
            }
            tracing::info!(films = corpus.films().len(), pairs = corpus.pair_count(), "corpus written");
            Ok(())
        }
        Some(Command::Train { corpus, out, order, smoothing, max_vocab }) => {
            let model = config::train_from_dir(&corpus, max_vocab, order, smoothing)?;
            std::fs::write(&out, model.to_text()).with_context(|| format!("cannot write {}", out.display()))?;
            tracing::info!(vocab = model.vocab().len(), order, "model written");
            Ok(())
        }
        Some(Command::Rehearse { model, lexicon, seed, script, traces }) => {
            let model = config::load_model(&model)?;
            let lexicon = config::load_lexicon(lexicon.as_deref())?;
            let script = match script {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                    Script::parse(&text).context("script has no suggestion line")?
                }
                None => Script::default(),
            };
            let generators = Generators::in_process(Arc::new(NgramGenerator::new(Arc::new(model))));
            let config = SceneConfig { seed, ..SceneConfig::default() };
            let show = rehearse(&script, config, &generators, &lexicon, &DocFreqs::default())?;
            print!("{}", show.transcript_jsonl());
            if let Some(path) = traces {
                let lines: String = show.traces.iter().map(|t| serde_json::to_string(t).expect("trace serializes") + "\n").collect();
                std::fs::write(&path, lines).with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    cfg.port = args.port.unwrap_or(cfg.port);
    cfg.corpus = args.corpus.or(cfg.corpus);
    cfg.lexicon = args.lexicon.or(cfg.lexicon);
    cfg.model = args.model.or(cfg.model);
    cfg.remote_generator = args.remote_generator.or(cfg.remote_generator);
    cfg.export_dir = args.export_dir.or(cfg.export_dir);
    cfg.stage.seed = args.seed.unwrap_or(cfg.stage.seed);
    cfg.stage.operator_key = args.operator_key.or(cfg.stage.operator_key);
    if cfg.stage.operator_key.is_none() {
        tracing::warn!("no operator key configured; operator clients will be refused");
    }

    let resources = config::load_resources(&cfg)?;
    let stage = Stage::new(cfg.stage.clone(), resources)?;
    let options = RuntimeOptions {
        tick: std::time::Duration::from_millis(cfg.tick_ms.max(1)),
        audience_outbox: cfg.audience_outbox,
        export_dir: cfg.export_dir.clone(),
        record_log: false,
    };
    let engine = StageRuntime::spawn(stage, Arc::new(SystemClock), options);
    let handle = engine.handle();

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", cfg.port))
            .await
            .with_context(|| format!("cannot listen on port {}", cfg.port))?;
        tracing::info!(addr = %listener.local_addr()?, "stage server listening");
        runtime::serve(listener, handle).await?;
        anyhow::Ok(())
    })?;
    engine.shutdown();
    Ok(())
}
