use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use bregtv::config::OUTPUT_DIR_ENV;
use bregtv::formats::{self, PgmEncoding};
use bregtv::{make_phantom, plot, run_experiment, ExperimentConfig, PhantomKind};

/// Bregman-iterated TV reconstruction experiments.
#[derive(Parser)]
#[command(version, about, after_help = format!("Set {OUTPUT_DIR_ENV} to override the output directory of `run`."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key=value config file.
    Run { config: PathBuf },
    /// Write a phantom image as 16-bit PGM.
    Phantom {
        kind: PhantomKind,
        size: usize,
        out: PathBuf,
        /// Write plain (P2) instead of binary (P5) PGM.
        #[arg(long)]
        plain: bool,
    },
    /// Emit a gnuplot script and data file for a trace.csv.
    Plot { trace: PathBuf, outdir: PathBuf },
}

const EXIT_DIVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg).with_context(|| format!("running {}", config.display()))?;
            print!("{}", report.summary);
            println!("artifacts in {}", report.output_dir.display());
            if report.diverged() {
                return Ok(ExitCode::from(EXIT_DIVERGED));
            }
        }
        Command::Phantom { kind, size, out, plain } => {
            let img = make_phantom(kind, size, size)?;
            let enc = if plain { PgmEncoding::Plain } else { PgmEncoding::Binary };
            formats::write_pgm(&out, &img, enc)?;
        }
        Command::Plot { trace, outdir } => {
            let (data, gp) = plot::emit_profile_plots(&trace, &outdir)?;
            println!("{}\n{}", data.display(), gp.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
