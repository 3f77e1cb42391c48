//! `latentmc` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentmc::ingest::{generate_synthetic_corpus, write_reviews_jsonl, SyntheticConfig};
use latentmc::pipeline::{run_all, run_stage, PipelineConfig, Stage, Workdir, WORKDIR_ENV};
use latentmc::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "latentmc", version, about = "Latent multi-criteria ratings from review text")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Work directory; overrides the config file.
    #[arg(long, global = true, env = WORKDIR_ENV)]
    workdir: Option<PathBuf>,

    /// Log stage progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, filter and tokenise the review corpus.
    Ingest(CorpusArg),
    /// Train the review autoencoder.
    TrainEncoder,
    /// Embed every review with the trained encoder.
    Embed,
    /// Learn discrete codes for the embeddings.
    Compress(CompressArgs),
    /// Fit every configured recommender on the full corpus.
    Recommend,
    /// Cross-validate all recommenders and write the reports.
    Evaluate,
    /// Run every stage in order.
    RunAll(CorpusArg),
    /// Write a planted synthetic corpus as JSON lines.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct CorpusArg {
    /// Review file (.jsonl or .csv); overrides the config file.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    gamma_start: Option<f64>,
    #[arg(long)]
    gamma_end: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Synthetic corpus settings (TOML); defaults otherwise.
    #[arg(long)]
    synth_config: Option<PathBuf>,
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match (&cli.config, cli.seed) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(seed)) => PipelineConfig::new(seed),
        (None, None) => return Err(Error::Config("pass --seed or a --config with a seed".into())),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(wd) = &cli.workdir {
        config.workdir = Some(wd.clone());
    }
    Ok(config)
}

fn workdir(config: &PipelineConfig) -> Result<Workdir> {
    config
        .workdir
        .clone()
        .map(Workdir::new)
        .ok_or_else(|| Error::Config(format!("no work directory; pass --workdir or set {WORKDIR_ENV}")))
}

fn stage_only(config: PipelineConfig, stage: Stage) -> Result<()> {
    let wd = workdir(&config)?;
    let outcome = run_stage(stage, &config, &wd)?;
    for p in &outcome.outputs {
        println!("{}", wd.relative(p));
    }
    if let Some(report) = outcome.report {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Synth(args) = &cli.command {
        let seed = match (cli.seed, &cli.config) {
            (Some(s), _) => s,
            (None, Some(path)) => PipelineConfig::load(path)?.seed,
            (None, None) => return Err(Error::Config("pass --seed or a --config with a seed".into())),
        };
        let synth = match &args.synth_config {
            Some(p) => SyntheticConfig::load(p)?,
            None => SyntheticConfig::default(),
        };
        let reviews = generate_synthetic_corpus(&synth, seed)?;
        write_reviews_jsonl(&args.out, &reviews)?;
        println!("{} reviews written to {}", reviews.len(), args.out.display());
        return Ok(());
    }

    let mut config = pipeline_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => {
            if let Some(c) = &a.corpus {
                config.corpus = Some(c.clone());
            }
            stage_only(config, Stage::Ingest)
        }
        Command::TrainEncoder => stage_only(config, Stage::TrainEncoder),
        Command::Embed => stage_only(config, Stage::Embed),
        Command::Compress(a) => {
            let c = &mut config.compression;
            c.k = a.k.unwrap_or(c.k);
            c.m = a.m.unwrap_or(c.m);
            c.gamma_start = a.gamma_start.unwrap_or(c.gamma_start);
            c.gamma_end = a.gamma_end.unwrap_or(c.gamma_end);
            c.epochs = a.epochs.unwrap_or(c.epochs);
            stage_only(config, Stage::Compress)
        }
        Command::Recommend => stage_only(config, Stage::Recommend),
        Command::Evaluate => stage_only(config, Stage::Evaluate),
        Command::RunAll(a) => {
            if let Some(c) = &a.corpus {
                config.corpus = Some(c.clone());
            }
            let wd = workdir(&config)?;
            let report = run_all(&config, &wd)?;
            print!("{}", report.render_table());
            Ok(())
        }
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::MissingArtifact { .. } => 3,
        Error::Numerical(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
