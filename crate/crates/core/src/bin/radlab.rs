use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radlab::experiments::{emit_report, load_config, run_timed, Command};

/// Environment variable fixing the worker-thread count.
const THREADS_VAR: &str = "RADLAB_THREADS";

#[derive(Parser)]
#[command(name = "radlab", version, about = "Stationary states, diffusions and radiative forces from one config")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, in place of `output_dir` from the config. It is
    /// not recorded in the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Full chain: solve, simulate, kernel, force.
    Verify(Common),
    /// Stationary solve across the `[sweep]` values.
    Sweep(Common),
    /// Stationary solve only.
    Solve(Common),
    /// Solve then the SDE stage.
    Simulate(Common),
    /// Solve then the kernel stage.
    Kernel(Common),
    /// Solve then the force stage.
    Force(Common),
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    configure_threads()?;
    let (command, args) = match cli.command {
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Kernel(a) => (Command::Kernel, a),
        Sub::Force(a) => (Command::Force, a),
    };
    let mut cfg = load_config(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (bundle, info) = run_timed(&cfg, command).map_err(|e| e.to_string())?;
    let dir = args.out.unwrap_or_else(|| cfg.output_dir.clone());
    let written = emit_report(&bundle, Some(&info), &dir).map_err(|e| e.to_string())?;
    for c in &bundle.checks {
        println!(
            "{:<4} {:<10} {:<40} {:>12.4e} (tolerance {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.stage,
            c.check,
            c.value,
            c.tolerance
        );
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("{} in {:.1} s: {}", command.name(), info.elapsed_seconds, if bundle.all_pass { "all checks passed" } else { "some checks failed" });
    Ok(bundle.all_pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
