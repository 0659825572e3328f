use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmcmc::harness::runs::{analyze_coverage, analyze_survival};
use rmcmc::harness::{execute, tune, ModelKind, RunConfig, RunRequest};

#[derive(Parser)]
#[command(
    name = "rmcmc",
    version,
    about = "Rolling MCMC with controlled Monte Carlo error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the system over a data stream.
    Run(RunArgs),
    /// Choose the subsampling interval from a pilot chain.
    TuneSubsample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        pilot_steps: usize,
        /// Largest acceptable variance inflation of the thinned chain.
        #[arg(long, default_value_t = 2.0)]
        target_rho: f64,
    },
    /// Post-process the files of a finished run.
    Analyze {
        #[arg(long)]
        survival: bool,
        #[arg(long)]
        coverage: bool,
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// lgm, football or football-synth.
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Match CSV or LGM observation CSV. Synthetic data are written here
    /// when the file does not exist.
    #[arg(long)]
    data: Option<PathBuf>,
    /// single, 7d or 30d.
    #[arg(long)]
    batch_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    db_path: Option<PathBuf>,
    /// Continue from the checkpoint at --db-path.
    #[arg(long)]
    resume: bool,
    /// Stop after this many revealed batches and checkpoint.
    #[arg(long)]
    stop_after: Option<usize>,
}

fn request(common: Common, out: PathBuf) -> rmcmc::Result<RunRequest> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = common.batch_mode {
        config.batch_mode = mode;
    }
    Ok(RunRequest {
        model: common.model,
        config,
        data: common.data,
        out,
        db_path: None,
        resume: false,
        stop_after: None,
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rmcmc: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> rmcmc::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut req = request(args.common, args.out)?;
            req.db_path = args.db_path;
            req.resume = args.resume;
            req.stop_after = args.stop_after;
            let s = execute(&req)?;
            println!(
                "batches={} resumes={} total_steps={} avg_new={:.1}% final_N={} final_A={:.5}",
                s.batches, s.resumes, s.total_steps, s.avg_new_percent, s.final_n, s.final_accuracy
            );
        }
        Command::TuneSubsample {
            common,
            pilot_steps,
            target_rho,
        } => {
            let req = request(common, PathBuf::new())?;
            let r = tune(&req, pilot_steps, target_rho)?;
            println!(
                "subsample={} statistics={} pilot_steps={}",
                r.subsample, r.statistics, r.pilot_steps
            );
        }
        Command::Analyze {
            survival,
            coverage,
            dir,
        } => {
            if !survival && !coverage {
                return Err(rmcmc::Error::Config(
                    "pass --survival and/or --coverage".into(),
                ));
            }
            if survival {
                let points = analyze_survival(&dir)?;
                println!("survival.csv: {points} points");
            }
            if coverage {
                for row in analyze_coverage(&dir)? {
                    println!(
                        "level={} avg_mass={:.4} realized_coverage={:.4} intervals={}",
                        row.level, row.avg_mass, row.realized_coverage, row.intervals
                    );
                }
            }
        }
    }
    Ok(())
}
