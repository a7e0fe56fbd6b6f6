use std::path::PathBuf;
use std::process::ExitCode;

use bgk_core::config::{parse_config_with_env, ExperimentKind};
use bgk_core::experiment::run_experiment;
use bgk_core::BgkError;
use clap::Parser;

/// BGK discrete-velocity solver and verification lab.
///
/// Exit status: 0 success, 1 invariant check failed, 2 bad configuration,
/// 3 run aborted.
#[derive(Parser, Debug)]
#[command(name = "bgk-lab", version)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, required_unless_present = "list_experiments")]
    config: Option<PathBuf>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, default_value = "bgk-out")]
    out: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the experiment kinds and exit.
    #[arg(long)]
    list_experiments: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_experiments {
        for k in ExperimentKind::ALL {
            println!("{:<20} {}", k.name(), k.description());
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let path = cli.config.expect("clap enforces --config");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let mut spec = match parse_config_with_env(&text, std::env::vars()) {
        Ok(s) => s,
        Err(BgkError::Parse { line, message }) if line > 0 => {
            eprintln!("error: {}:{line}: {message}", path.display());
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.out_dir = Some(cli.out.clone());
    match run_experiment(&spec, &cli.out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("FAILED: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e @ (BgkError::Config(_) | BgkError::Parse { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
