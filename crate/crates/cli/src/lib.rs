//! Command-line front end: file formats, configuration and the experiment
//! commands built on the core library.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{Config, Overrides};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "debiasfirst", version, about = "Positional-bias mitigation for listwise reranking")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit
    #[arg(long = "dump-config", global = true)]
    dump_config: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic candidate lists and qrels
    Synth,
    /// Estimate transition propensities from a reference scorer on shuffled inputs
    EstimatePropensity,
    /// Expand a training set with shuffled or rotated orderings
    Augment,
    /// Fine-tune a scorer
    Train,
    /// Rerank candidate lists into a run file
    Rerank,
    /// Evaluate NDCG@10 on original and shuffled input orders
    Eval,
    /// Positional sweep of the relevant passage
    Sweep,
    /// Fuse run files (Kemeny or reciprocal rank fusion)
    Aggregate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// NDCG@10 of a run file against qrels
    ScoreRun {
        #[arg(id = "run_file", value_name = "RUN")]
        run_file: PathBuf,
    },
    /// Histogram of relevant-passage input positions
    Diagnose,
    /// Train and measure every recipe of the reference benchmark
    Benchmark,
    /// Synthetic data through aggregated evaluation, all artifacts in out_dir
    Pipeline,
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_file(path, &text)?;
    }
    cli.overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage("no command given; see --help".into()));
    };
    match command {
        Command::Synth => commands::synth(&cfg),
        Command::EstimatePropensity => commands::estimate_propensity(&cfg),
        Command::Augment => commands::augment(&cfg),
        Command::Train => commands::train(&cfg).map(drop),
        Command::Rerank => commands::rerank(&cfg),
        Command::Eval => commands::eval(&cfg).map(drop),
        Command::Sweep => commands::sweep(&cfg).map(drop),
        Command::Aggregate { runs } => commands::aggregate(&cfg, &runs),
        Command::ScoreRun { run_file } => commands::score_run(&cfg, Path::new(&run_file)).map(drop),
        Command::Diagnose => commands::diagnose(&cfg).map(drop),
        Command::Benchmark => commands::benchmark(&cfg),
        Command::Pipeline => commands::pipeline(&cfg),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
