//! Command line front end for the sub-frame tracking pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CmdResult;
use config::Config;

/// Sub-frame appearance, shape, and pose recovery for motion-blurred
/// spherical objects in low-frame-rate video.
#[derive(Parser)]
#[command(
    name = "deblat",
    version,
    after_help = "Exit codes: 0 success, 2 input error, 3 processing stage failure \
                  (partial outputs retained), 4 evaluation misalignment, 1 unexpected error."
)]
struct Cli {
    /// Flat `key = value` config file; defaults apply for missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for frame-level parallelism (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    jobs: usize,
    /// Overrides the `seed` config key.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Write solver diagnostics (objective per iteration, per stage).
    #[arg(long, global = true)]
    diagnostics: bool,
    /// Shortcut selecting the ground-truth trajectory source.
    #[arg(long, global = true)]
    oracle: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene: frames plus ground truth.
    Synth,
    /// Recover snapshots, 3D trajectory, and spin from frames.
    Track,
    /// Score tracking outputs against ground truth.
    Eval {
        /// Directory holding track outputs.
        est_dir: PathBuf,
        /// Directory holding the matching ground truth.
        gt_dir: PathBuf,
    },
    /// Re-render the sequence at `factor` frames per input frame.
    Superres {
        /// Output frames per input frame.
        factor: usize,
    },
}

fn effective_config(cli: &Cli) -> CmdResult<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p).map_err(commands::input_error)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.oracle {
        cfg.trajectory_oracle = true;
        cfg.trajectory_file.clear();
        cfg.trajectory_estimate = false;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CmdResult<()> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.dump_annotated());
        return Ok(());
    }
    if cli.jobs > 0 {
        // Only the first global pool in a process takes effect; that is the
        // one built here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match &cli.command {
        Cmd::Synth => commands::synth::run(&cfg, cli.diagnostics),
        Cmd::Track => commands::track::run(&cfg, cli.diagnostics),
        Cmd::Eval { est_dir, gt_dir } => commands::eval::run(est_dir, gt_dir),
        Cmd::Superres { factor } => commands::superres::run(&cfg, *factor, cli.diagnostics),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
