use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use covergen_core::augment::{generate_new_titles, Sampling};
use covergen_core::metrics::{fid_from_features, inception_score, read_matrix, FeatureMatrix, ProbMatrix};
use covergen_core::pipeline::{run_pipeline, RunContext, RunParams, RunStatus};
use covergen_core::train::{preset, table1_presets};
use covergen_core::wndb::{load_lexicon, LoadMode};
use serde_json::json;
use uuid::Uuid;

use crate::config::{read_vocabulary, ServiceConfig};
use crate::server::{self, AugmentCandidate, AugmentResponse};

#[derive(Debug, Parser)]
#[command(name = "covergen", version, about = "Book cover generation from titles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ConfigArg),
    /// Generate, score, rank and store covers for one title.
    Run(RunArgs),
    /// Preview candidate titles without generating images.
    Augment(AugmentArgs),
    #[command(subcommand)]
    Vocab(VocabCommand),
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    #[command(subcommand)]
    Metrics(MetricsCommand),
    #[command(subcommand)]
    Presets(PresetsCommand),
    /// Serve the deterministic stub generator/discriminator over HTTP.
    StubBackend {
        #[arg(long, default_value = "127.0.0.1:8700")]
        addr: String,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML config file; `COVERGEN_CONFIG` takes precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub title: String,
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the in-process stub backend regardless of config.
    #[arg(long)]
    pub stub: bool,
    /// Run store root; defaults to the configured one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub title: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub roundrobin: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Subcommand)]
pub enum VocabCommand {
    /// Build a vocabulary JSON from a titles file (one title per line).
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Parse a WNDB directory and write the graph as JSON.
    Dump {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Fréchet distance between two feature files.
    Fid {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
    },
    /// Inception score of a class-probability file.
    Is {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long, default_value_t = 1)]
        splits: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetsCommand {
    /// Write training presets as JSON: one preset with `--name`, all of them otherwise.
    Export {
        #[arg(long)]
        name: Option<String>,
        /// Output file (single preset) or directory (all presets); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs one command, writing results to `out`. Returns the process exit status.
pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    match cli.command {
        Command::Serve(c) => {
            let cfg = ServiceConfig::resolve(c.config.as_deref())?;
            tokio_runtime()?.block_on(server::serve(cfg))?;
        }
        Command::StubBackend { addr } => {
            tokio_runtime()?.block_on(server::serve_router(server::stub_backend_app(), &addr))?;
        }
        Command::Run(args) => return run(args, out),
        Command::Augment(args) => augment(args, out)?,
        Command::Vocab(VocabCommand::Build { input, out: path }) => {
            let vocab = read_vocabulary(&input)?;
            std::fs::write(&path, vocab.to_json()).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "{}", json!({ "words": vocab.len(), "out": path }))?;
        }
        Command::Lexicon(LexiconCommand::Dump { dir, out: path, strict }) => {
            let mode = if strict { LoadMode::Strict } else { LoadMode::Lenient };
            let lex = load_lexicon(&dir, mode).with_context(|| format!("loading {}", dir.display()))?;
            std::fs::write(&path, lex.to_dump()).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "{}", json!({ "synsets": lex.len(), "out": path }))?;
        }
        Command::Metrics(MetricsCommand::Fid { real, fake }) => {
            let real = FeatureMatrix::from_rows(&read_matrix(&real)?)?;
            let fake = FeatureMatrix::from_rows(&read_matrix(&fake)?)?;
            let value = fid_from_features(&real, &fake)?;
            writeln!(
                out,
                "{}",
                json!({ "metric": "fid", "value": value, "n_real": real.rows(), "n_fake": fake.rows() })
            )?;
        }
        Command::Metrics(MetricsCommand::Is { probs, splits }) => {
            let probs = ProbMatrix::from_rows(&read_matrix(&probs)?)?;
            let score = inception_score(&probs, splits)?;
            writeln!(
                out,
                "{}",
                json!({ "metric": "is", "value": score.mean, "std": score.std, "n": probs.rows(), "splits": splits })
            )?;
        }
        Command::Presets(PresetsCommand::Export { name, out: path }) => export_presets(name, path, out)?,
    }
    Ok(0)
}

fn tokio_runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(args: RunArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut cfg = ServiceConfig::resolve(args.config.config.as_deref())?;
    if args.stub {
        cfg.stub = true;
    }
    if let Some(root) = args.out {
        cfg.run_store = root;
    }
    let variants = args.variants.unwrap_or(cfg.num_variants);
    cfg.num_variants = variants;
    cfg.top_k = args.top_k.unwrap_or(cfg.top_k.min(variants + 1));
    cfg.validate()?;
    let lexicon = cfg.load_lexicon()?;
    let vocab = cfg.load_vocabulary()?;
    let backend = cfg.backend()?;

    let mut params = RunParams::new(args.title);
    params.num_variants = variants;
    params.top_k = cfg.top_k;
    params.seed = args.seed;
    params.image_size = (cfg.image_size, cfg.image_size);
    params.batch_cap = cfg.batch_cap;
    params.parallelism = cfg.parallelism;

    let ctx = RunContext::new(Uuid::new_v4(), Utc::now());
    let outcome = run_pipeline(&params, &lexicon, &vocab, backend.as_ref(), ctx, &cfg.run_store)?;
    writeln!(out, "{}", outcome.manifest.to_json())?;
    Ok(match outcome.manifest.status {
        RunStatus::Completed => 0,
        RunStatus::Failed => 2,
    })
}

fn augment(args: AugmentArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = ServiceConfig::resolve(args.config.config.as_deref())?;
    let lexicon = cfg.load_lexicon()?;
    let vocab = cfg.load_vocabulary()?;
    let sampling = if args.roundrobin { Sampling::RoundRobin } else { Sampling::Random };
    let titles = generate_new_titles(&args.title, args.count, &lexicon, &vocab, args.seed, sampling)?;
    let resp = AugmentResponse {
        title: args.title,
        candidates: titles
            .into_iter()
            .map(|c| AugmentCandidate {
                title: c.text(),
                tokens: c.tokens,
                provenance: c.provenance,
            })
            .collect(),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&resp)?)?;
    Ok(())
}

fn export_presets(name: Option<String>, path: Option<PathBuf>, out: &mut dyn Write) -> anyhow::Result<()> {
    match (name, path) {
        (Some(name), None) => writeln!(out, "{}", preset(&name)?.export_json())?,
        (Some(name), Some(path)) => {
            std::fs::write(&path, preset(&name)?.export_json()).with_context(|| format!("writing {}", path.display()))?
        }
        (None, None) => {
            let all: Vec<serde_json::Value> = table1_presets()
                .iter()
                .map(|p| serde_json::from_str(&p.export_json()))
                .collect::<Result<_, _>>()?;
            writeln!(out, "{}", serde_json::to_string_pretty(&all)?)?;
        }
        (None, Some(dir)) => {
            if dir.is_file() {
                bail!("{} is a file; exporting all presets needs a directory", dir.display());
            }
            std::fs::create_dir_all(&dir)?;
            for p in table1_presets() {
                let file = dir.join(format!("{}.json", p.name));
                std::fs::write(&file, p.export_json()).with_context(|| format!("writing {}", file.display()))?;
            }
        }
    }
    Ok(())
}
