//! Experiment runner for the ZP-AFDM simulation library.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure,
//! 4 enumeration cap exceeded.

mod commands;
mod config;
mod csvout;
mod selftest;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use commands::{cmd_ber_sim, cmd_ber_theory, cmd_complexity, emit_gnuplot, OutputNaming};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

/// Directory override honoured when `--out` is absent.
const OUT_DIR_ENV: &str = "ZP_AFDM_OUT_DIR";

#[derive(Parser)]
#[command(name = "zp-afdm", version, about = "ZP-AFDM link-level experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set sim.master_seed=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $ZP_AFDM_OUT_DIR, then the current dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; never changes results, only wall time.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Override sim.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// File-name stem (default: config file stem).
    #[arg(long)]
    name: Option<String>,
    /// Fixed header timestamp (unix seconds) for byte-reproducible output.
    #[arg(long)]
    timestamp: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo BER sweep; one CSV per arm and detector.
    BerSim {
        #[command(flatten)]
        run: RunArgs,
        /// Also emit a gnuplot script plotting the produced curves.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Analytical BER curves (ML union bound or MMSE SINR closed form).
    BerTheory {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Detector multiplication-count census over an N grid.
    Complexity {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Built-in oracle/consistency checks; exit 0 iff all pass.
    Selftest,
}

fn resolve_naming(run: &RunArgs) -> (PathBuf, String, u64) {
    let dir = run
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = run.name.clone().unwrap_or_else(|| {
        run.config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let ts = run.timestamp.unwrap_or_else(|| {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    });
    (dir, stem, ts)
}

fn load_config(run: &RunArgs) -> Result<RunConfig> {
    let mut sets = run.sets.clone();
    if let Some(seed) = run.seed {
        sets.push(format!("sim.master_seed={seed}"));
    }
    RunConfig::load(&run.config, &sets)
}

/// Maps an error chain onto the documented exit codes.
fn classify(err: &anyhow::Error) -> u8 {
    use zp_afdm::analysis::AnalysisError;
    use zp_afdm::detectors::DetectorError;
    use zp_afdm::numerics::NumericsError;
    use zp_afdm::simulator::SimError;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::CapExceeded(_) => 4,
                SimError::InvalidSpec(_) => 2,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<DetectorError>() {
            return match e {
                DetectorError::SearchSpaceExceeded { .. } => 4,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return match e {
                AnalysisError::EnumerationCapExceeded { .. } => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<NumericsError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    // Everything else surfaced before any computation ran: config trouble.
    2
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::BerSim { run, gnuplot } => {
            let cfg = load_config(&run)?;
            let (dir, stem, ts) = resolve_naming(&run);
            let naming = OutputNaming { dir: &dir, stem: &stem, timestamp_unix: ts };
            let files = cmd_ber_sim(&cfg, &naming, run.workers)?;
            if gnuplot {
                emit_gnuplot(&files, &dir.join(format!("{stem}.gp")))?;
            }
            Ok(files)
        }
        Command::BerTheory { run } => {
            let cfg = load_config(&run)?;
            let (dir, stem, ts) = resolve_naming(&run);
            let naming = OutputNaming { dir: &dir, stem: &stem, timestamp_unix: ts };
            cmd_ber_theory(&cfg, &naming)
        }
        Command::Complexity { run } => {
            let cfg = load_config(&run)?;
            let (dir, stem, ts) = resolve_naming(&run);
            let naming = OutputNaming { dir: &dir, stem: &stem, timestamp_unix: ts };
            cmd_complexity(&cfg, &naming)
        }
        Command::Selftest => unreachable!("handled before run()"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, Command::Selftest) {
        let scratch = std::env::temp_dir().join(format!("zp-afdm-selftest-{}", std::process::id()));
        let results = selftest::run_selftest(&scratch);
        let _ = std::fs::remove_dir_all(&scratch);
        let mut failed = 0usize;
        for (name, result) in &results {
            match result {
                Ok(()) => println!("PASS  {name}"),
                Err(msg) => {
                    failed += 1;
                    println!("FAIL  {name}: {msg}");
                }
            }
        }
        println!("selftest: {} checks, {failed} failed", results.len());
        return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) };
    }
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
