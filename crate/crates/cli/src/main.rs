mod chat;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Few-shot knowledge-grounded dialogue generation: data preparation,
/// two-stage training, evaluation, experiments and an interactive chat.
#[derive(Debug, Parser)]
#[command(name = "kbdialog", version)]
pub struct Cli {
    /// Experiment config file (key=value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides `experiment.seed`. Defaults to 1234.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

/// Config overrides shared by the training commands.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Any config key, e.g. `--set latent.m=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Target domain; overrides `experiment.target_domain`.
    #[arg(long)]
    pub target_domain: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an SMD or MetaLWOz file into the normalized corpus schema.
    PrepareData {
        #[arg(long)]
        input: PathBuf,
        /// smd, metalwoz or normalized.
        #[arg(long)]
        format: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train DI-VAE and LAED on the transfer corpus (minus overlapping domains).
    TrainStage1 {
        /// Output directory; checkpoints go to `di-vae/`, `laed/` (and `vae/`).
        #[arg(long)]
        output: PathBuf,
        /// Transfer corpus; overrides `data.transfer`.
        #[arg(long)]
        transfer: Option<PathBuf>,
        /// Format of `--transfer`; overrides `data.transfer_format`.
        #[arg(long)]
        transfer_format: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a response generator on source domains plus sampled target seed data.
    TrainStage2 {
        #[arg(long)]
        output: PathBuf,
        /// Stage-1 output directory (needed by HRED_VAE, HRED_LAED, DIKTNET).
        #[arg(long)]
        stage1: Option<PathBuf>,
        /// HRED, HRED_VAE, HRED_LAED or DIKTNET; defaults to the first configured variant.
        #[arg(long)]
        variant: Option<String>,
        /// Seed-data ratio; defaults to the first configured ratio.
        #[arg(long)]
        ratio: Option<f64>,
        /// Main corpus; overrides `data.main`.
        #[arg(long)]
        main: Option<PathBuf>,
        /// Format of `--main`; overrides `data.main_format`.
        #[arg(long)]
        main_format: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a generator with BLEU and Entity F1 on one domain of a corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// smd, metalwoz or normalized.
        #[arg(long, default_value = "normalized")]
        format: String,
        #[arg(long)]
        domain: String,
    },
    /// Run the seeded variant x ratio x run grid and write the report.
    RunExperiment {
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the discrete codes of a stage-1 checkpoint, optionally with example utterances.
    InspectCodes {
        /// A stage-1 checkpoint directory (di-vae, laed or vae).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "normalized")]
        format: String,
        /// Number of codes to show.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Chat with a generator: `:reset` clears the context, `:quit` exits.
    Chat {
        #[arg(long)]
        checkpoint: PathBuf,
        /// KB attribute for the session, e.g. `--kb address=12 main st`. Repeatable.
        #[arg(long, value_name = "KEY=VALUE")]
        kb: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.log_level {
        LogLevel::Quiet => log::LevelFilter::Error,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
