//! `ttsd`: corpus pipeline, evaluation, Elo, augmentation, codec and prompt tools.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::EngineConfig;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Finished, but some items failed; see the written reports.
    Partial,
}

#[derive(Parser)]
#[command(name = "ttsd", version, about = "Dialogue TTS corpus and evaluation engine")]
struct Cli {
    /// TOML engine configuration.
    #[arg(long, global = true, env = "TTSD_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training corpus from diarization segments.
    Pipeline {
        #[command(subcommand)]
        action: commands::PipelineAction,
    },
    /// Objective evaluation of generated dialogue.
    Eval {
        #[command(subcommand)]
        action: commands::EvalAction,
    },
    /// Elo ratings from pairwise judgments.
    Elo {
        #[command(subcommand)]
        action: commands::EloAction,
    },
    /// Punctuation augmentation.
    Augment {
        #[command(subcommand)]
        action: commands::AugmentAction,
    },
    /// Delay-pattern token grids.
    Codec {
        #[command(subcommand)]
        action: commands::CodecAction,
    },
    /// Chat-template prompts.
    Prompt {
        #[command(subcommand)]
        action: commands::PromptAction,
    },
}

pub struct Globals {
    pub config: EngineConfig,
    pub seed: u64,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let config = EngineConfig::load(cli.config.as_deref())?;
    let threads = cli.parallelism.map(|p| p as usize).or(config.parallelism);
    let globals = Globals {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::Pipeline { action } => commands::pipeline(action, &globals),
        Command::Eval { action } => commands::eval(action, &globals),
        Command::Elo { action } => commands::elo(action, &globals),
        Command::Augment { action } => commands::augment(action, &globals),
        Command::Codec { action } => commands::codec(action),
        Command::Prompt { action } => commands::prompt(action),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
