use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ncergodic_cli::{execute, load_config, CliError};

/// Runs one experiment described by a TOML config.
#[derive(Parser, Debug)]
#[command(name = "ncergodic", version)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory receiving `<experiment>.csv` and `<experiment>.report.toml`.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<bool, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let w = execute(&cfg, &args.out)?;
    let passed = w.outcome.passed();
    if !args.quiet || !passed {
        for line in &w.outcome.lines {
            println!("{line}");
        }
        let r = &w.outcome.report;
        let n0 = r.n0.map_or("none".to_string(), |n| n.to_string());
        println!(
            "{}: verdict {}  n0 {}  eps {}  delta {}  horizon {}  seed {}",
            cfg.experiment.name(),
            r.verdict,
            n0,
            r.eps,
            r.delta,
            r.horizon,
            r.seed
        );
        for f in &r.failures {
            println!("  violated: {f}");
        }
        println!("wrote {} and {}", w.csv.display(), w.report.display());
    }
    Ok(passed)
}
