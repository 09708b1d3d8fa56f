//! csmri: batch driver for simulated compressed-sensing MR reconstruction.
//!
//! A single key-value manifest describes the experiment; subcommands run its
//! stages. Exit code 0 on success; any failure prints exactly one
//! machine-parsable line to stderr: `error[<category>]: <message>` with
//! category one of input | format | io | solver.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use csmri::error::{Error, Result};
use csmri::solver::Variant;

use csmri_cli::manifest::RunManifest;
use csmri_cli::pipeline;

#[derive(Parser)]
#[command(name = "csmri", version, about = "Simulate, reconstruct and evaluate undersampled MR acquisitions")]
struct Cli {
    /// Worker threads for the data-parallel loops (ignored by sequential builds).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write phantom, coil, trajectory and k-space files.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        /// Override the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the manifest's noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct one (variant, factor) pair from simulate outputs.
    Reconstruct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        factor: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics table plus center-slice exports for existing reconstructions.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// simulate + all variants x factors + evaluate.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-export the center slice of one reconstruction as a PGM image.
    ExportSlice {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        factor: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_n: usize) -> Result<()> {
    Ok(())
}

fn load(path: &PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunManifest> {
    let mut m = RunManifest::load(path)?;
    if let Some(o) = out {
        m.out = o;
    }
    if let Some(s) = seed {
        m.noise_seed = s;
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        set_threads(n)?;
    }
    match cli.cmd {
        Cmd::Simulate { manifest, out, seed } => {
            pipeline::cmd_simulate(&load(&manifest, out, seed)?)
        }
        Cmd::Reconstruct { manifest, variant, factor, out } => {
            let m = load(&manifest, out, None)?;
            pipeline::cmd_reconstruct(&m, Variant::from_str(&variant)?, factor)
        }
        Cmd::Evaluate { manifest, out } => pipeline::cmd_evaluate(&load(&manifest, out, None)?),
        Cmd::Sweep { manifest, out, seed } => pipeline::cmd_sweep(&load(&manifest, out, seed)?),
        Cmd::ExportSlice { manifest, variant, factor, out } => {
            let m = load(&manifest, out, None)?;
            pipeline::cmd_export_slice(&m, Variant::from_str(&variant)?, factor)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // First line only, so failures stay one-line machine-parsable.
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[input]: {}", first.trim_start_matches("error: "));
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
