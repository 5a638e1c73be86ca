use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cookiewalk::cli::{load_config, run, CliError, Experiment, Num, Overrides};

/// Batch experiments on multi-excited random walks and their diffusion
/// limits. Writes results.csv, report.json and manifest.json.
#[derive(Debug, Parser)]
#[command(name = "cookiewalk", version, about, after_help = experiments_help())]
struct Args {
    /// JSON experiment config; omitted fields take the experiment defaults
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Replicates per sample (applies to every sample of the experiment)
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
    /// Worker threads (results do not depend on this)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Experiment name, overriding the config
    #[arg(long, value_name = "NAME")]
    experiment: Option<String>,
}

fn experiments_help() -> String {
    format!("Experiments: {}", Experiment::names())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let overrides = Overrides { experiment: args.experiment, seed: args.seed, reps: args.reps, out_dir: args.out };
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcome = load_config(args.config.as_deref(), &overrides).and_then(|c| run(&c, threads).map(|o| (c, o)));
    match outcome {
        Ok((config, outcome)) => {
            for c in &outcome.output.checks {
                println!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, Num(c.value), c.condition);
            }
            println!("wrote {} (content hash {})", config.out_dir.display(), outcome.manifest.content_hash);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Config(_)) {
                eprintln!("usage: cookiewalk [--config PATH] [--experiment NAME] [--out DIR] [--seed U64] [--reps N] [--threads N]");
                eprintln!("{}", experiments_help());
            }
            ExitCode::from(1)
        }
    }
}
