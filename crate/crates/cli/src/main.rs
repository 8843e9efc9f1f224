//! `zae`: preprocessing, training, evaluation and analysis runs.
//!
//! Exit status: 0 success, 1 usage, 2 data or parse error, 3 numerical failure.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod analyze;
mod error;
mod eval;
mod manifest;
mod prep;
mod settings;
mod train;

use error::{CliError, CliResult};
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "zae", version, about = "Zero-bias autoencoder experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Root seed for every random stream [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps [default: 1].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Contrast-normalize, crop and PCA-project CIFAR-10 batches or videos.
    Prep(prep::PrepArgs),
    /// Train an autoencoder or K-means model.
    Train(train::TrainArgs),
    /// Feature extraction and classification drivers.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Weight diagnostics and synthetic data.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
    /// Repeat the run recorded in a manifest.
    Replay { manifest: String },
}

/// What every command needs besides its own flags.
pub struct Ctx {
    pub settings: Settings,
    pub force: bool,
    pub argv: Vec<String>,
    seed_flag: Option<u64>,
    jobs_flag: Option<usize>,
}

impl Ctx {
    pub fn seed(&self) -> CliResult<u64> {
        self.settings.value("seed", self.seed_flag, 0)
    }

    pub fn jobs(&self) -> CliResult<usize> {
        let jobs = self.settings.value("jobs", self.jobs_flag, 1)?;
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be positive"));
        }
        Ok(jobs)
    }
}

fn run(argv: Vec<String>) -> CliResult<()> {
    let cli = match Cli::try_parse_from(std::iter::once("zae".to_string()).chain(argv.clone())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            return Err(CliError::usage(e.render().to_string().trim_end()));
        }
    };
    if let Command::Replay { manifest } = &cli.command {
        let m = manifest::read_manifest(std::path::Path::new(manifest))?;
        if m.command_line.first().is_some_and(|c| c == "replay") {
            return Err(CliError::usage("manifest records another replay"));
        }
        let mut args = m.command_line;
        if cli.global.force && !args.iter().any(|a| a == "--force") {
            args.push("--force".into());
        }
        return run(args);
    }
    let ctx = Ctx {
        settings: Settings::load(cli.global.config.as_deref().map(std::path::Path::new))?,
        force: cli.global.force,
        argv,
        seed_flag: cli.global.seed,
        jobs_flag: cli.global.jobs,
    };
    match cli.command {
        Command::Prep(a) => prep::run(&ctx, a),
        Command::Train(a) => train::run(&ctx, a),
        Command::Eval(c) => eval::run(&ctx, c),
        Command::Analyze(c) => analyze::run(&ctx, c),
        Command::Replay { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zae: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
