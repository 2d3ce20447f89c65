use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deidbench::pipeline::{self, LearnerMode, RunConfig, RunOptions};
use deidbench::Error;

#[derive(Parser)]
#[command(name = "deidbench", version, about = "Privacy/utility benchmark of de-identification techniques")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "deidbench.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute artifacts that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides the configured learner selection.
    #[arg(long, global = true, value_enum)]
    learners: Option<LearnerMode>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tune parameters and write every variant plus the manifest.
    Transform,
    /// Write a re-identification risk report per variant.
    Risk,
    /// Score original data and variants.
    Evaluate,
    /// Emit rank tables, Bayesian comparisons and summaries.
    Analyze,
    /// Run every stage.
    All,
}

fn load_config(cli: &Cli) -> deidbench::Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(l) = cli.learners {
        cfg.learners = l;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &RunConfig, opts: RunOptions) -> deidbench::Result<()> {
    match cmd {
        Command::Transform => pipeline::cmd_transform(cfg, opts).map(drop),
        Command::Risk => pipeline::cmd_risk(cfg, opts).map(drop),
        Command::Evaluate => pipeline::cmd_evaluate(cfg, opts).map(drop),
        Command::Analyze => pipeline::cmd_analyze(cfg, opts).map(drop),
        Command::All => pipeline::run_all(cfg, opts).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(1);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            log::error!("thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { force: cli.force };
    match pool.install(|| run(cli.command, &cfg, opts)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
