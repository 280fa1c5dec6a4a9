use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volterra_ldp_cli::commands;
use volterra_ldp_cli::output::{sha256_hex, ArtifactDir, Manifest};
use volterra_ldp_cli::{parse_config_at, CliError, Command, Result};

const DEFAULT_OUT: &str = "vldp-out";

#[derive(Debug, Parser)]
#[command(
    name = "vldp",
    version,
    about = "Simulation and rate functions for multifactor Volterra volatility models"
)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Kernel values, L2 slices and Hölder constants on the grid.
    KernelTable,
    /// Euler paths of the log-price and its drivers.
    Simulate,
    /// Path rate functional along a straight line or a given path.
    Rate,
    /// Rate function of the terminal value at the configured points.
    TerminalRate,
    /// Monte Carlo tail estimates and their large-deviation slope.
    VerifyLdp,
    /// Short-time rescaling: rescaled-kernel route against direct simulation.
    ShortTime,
    /// Randomized property suites.
    Selftest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::KernelTable => Command::KernelTable,
            Cmd::Simulate => Command::Simulate,
            Cmd::Rate => Command::Rate,
            Cmd::TerminalRate => Command::TerminalRate,
            Cmd::VerifyLdp => Command::VerifyLdp,
            Cmd::ShortTime => Command::ShortTime,
            Cmd::Selftest => Command::Selftest,
        }
    }
}

fn execute(args: Args) -> Result<()> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let (text, base) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (text, base)
        }
        None => (String::new(), PathBuf::from(".")),
    };
    let cfg = parse_config_at(&text, &base)?;
    let command = Command::from(args.command);
    cfg.require(command)?;
    let seed = args.seed.or(cfg.seed).ok_or_else(|| {
        CliError::config(
            "seed",
            "no seed given; set `seed` in the config or pass --seed",
        )
    })?;
    let root = args
        .out
        .or(cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let mut out = ArtifactDir::create(&root)?;
    let outcome = commands::run(command, &cfg, seed, &mut out)?;
    out.write_bytes("config.toml", text.as_bytes())?;
    let manifest = Manifest {
        command: command.name().to_string(),
        seed,
        config_sha256: sha256_hex(text.as_bytes()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: out.written().to_vec(),
    };
    out.write_bytes("manifest.toml", manifest.render().as_bytes())?;

    for line in &outcome.summary {
        println!("{line}");
    }
    println!("artifacts written to {}", out.root().display());
    match outcome.failure {
        Some(msg) => Err(CliError::Check(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{category}]: {e}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
