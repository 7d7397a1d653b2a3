//! `texmat`: dataset generation, training, painting, relighting, evaluation
//! and verification from one binary.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or environment error.

mod config;
mod eval;
mod gen_data;
mod paint;
mod relight;
mod train;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{Config, Overrides};

#[derive(Parser, Debug)]
#[command(name = "texmat", version, about = "PBR material generation for meshes")]
struct Cli {
    /// `key=value` configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for dataset generation and rendering (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the procedural training corpus and its manifest.
    GenData(gen_data::Args),
    /// Train the material estimator or the UV refiner.
    Train(train::Args),
    /// Paint a mesh view by view, bake to UV and fill holes.
    Paint(paint::Args),
    /// Render a textured mesh under a lighting rig.
    Relight(relight::Args),
    /// Per-material RMSE of predicted UV maps against ground truth.
    Eval(eval::Args),
    /// Run the invariant battery and report pass/fail per check.
    Verify(verify::Args),
}

/// Resolves the layered configuration, applies the thread cap and prints
/// the effective settings.
pub fn setup(file: Option<&Path>, threads: Option<usize>, mut overrides: Overrides) -> Result<Config> {
    overrides.set("threads", threads);
    let cfg = config::resolve(file, &overrides)?;
    if cfg.threads > 0 {
        // a pool can only be installed once per process; later calls keep the first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    cfg.print();
    Ok(cfg)
}

/// The error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = cli.config.as_deref();
    let outcome = match cli.command {
        Command::GenData(a) => gen_data::run(a, file, cli.threads).map(|_| true),
        Command::Train(a) => train::run(a, file, cli.threads).map(|_| true),
        Command::Paint(a) => paint::run(a, file, cli.threads).map(|_| true),
        Command::Relight(a) => relight::run(a, file, cli.threads).map(|_| true),
        Command::Eval(a) => eval::run(a, file, cli.threads).map(|_| true),
        Command::Verify(a) => verify::run(a, file, cli.threads),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
