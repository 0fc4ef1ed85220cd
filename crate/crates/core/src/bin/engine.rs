use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use quantum_otto::cli::{parse_config, run, Mode, RunError};

/// Two-spin quantum Otto engine simulator.
#[derive(Debug, Parser)]
#[command(name = "engine", version)]
struct Args {
    /// What to run; overrides `[run] mode`.
    mode: Mode,
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to ENGINE_THREADS, then all cores).
    #[arg(long, env = "ENGINE_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("engine: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<Vec<String>, RunError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Io(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text, Some(args.mode))?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.noise.seed = seed;
        cfg.optimizer.seed = seed;
    }
    run(&cfg)
}
