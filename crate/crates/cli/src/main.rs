use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metabandit::error::Error;
use metabandit::experiment::{emit_results, run_experiment, ExperimentConfig};
use metabandit::verify::{run_all, Scale};

#[derive(Parser)]
#[command(name = "meta-bandit", version, about = "Meta-learned bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV/JSON results.
    Run {
        /// Experiment config (TOML, or JSON with a .json extension).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Replace the replica seeds with consecutive seeds from this one.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Number of replicas, with consecutive seeds.
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Run the randomized invariant suites.
    Verify {
        /// Smaller suite sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
}

const VALIDATION: u8 = 2;
const RUNTIME: u8 = 1;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) => ExitCode::from(VALIDATION),
        _ => ExitCode::from(RUNTIME),
    }
}

fn run(config: PathBuf, out: PathBuf, seed_override: Option<u64>, replicas: Option<usize>) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e @ Error::Io { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(VALIDATION);
        }
        Err(e) => return fail(&e),
    };
    if let Some(n) = replicas {
        if n == 0 {
            eprintln!("error: --replicas must be positive");
            return ExitCode::from(VALIDATION);
        }
        cfg.set_replica_count(n);
    }
    if let Some(s) = seed_override {
        cfg.override_seed(s);
    }
    let bundle = match run_experiment(&cfg) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit_results(&bundle, &out) {
        return fail(&e);
    }
    match bundle.summary() {
        Ok(s) => {
            println!("tasks per replica: {}, replicas: {}, grid points: {}", cfg.env.t(), s.replicas.len(), s.grid_size);
            println!("mean task-averaged regret (meta): {:.6}", s.mean_meta_avg_regret);
            for (name, v) in &s.mean_baseline_avg_regret {
                println!("mean task-averaged regret ({name}): {v:.6}");
            }
            println!("results written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn verify(quick: bool, seed: u64) -> ExitCode {
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let reports = match run_all(scale, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUNTIME);
        }
    };
    let mut ok = true;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} ({} cases): {}", r.name, r.cases, r.detail);
        ok &= r.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(VALIDATION)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed_override, replicas } => run(config, out, seed_override, replicas),
        Command::Verify { quick, seed } => verify(quick, seed),
    }
}
