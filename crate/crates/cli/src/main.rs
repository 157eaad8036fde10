//! `bridgestab`: run one experiment described by a TOML file.
//!
//! Exit status: 0 all reports pass, 1 some report fails, 2 bad config or
//! input, 3 numerical failure (no convergence, violated precondition).

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Scenario, Severity};
use runner::{RunError, Runner};

#[derive(Parser, Debug)]
#[command(name = "bridgestab", version, about = "Stability diagnostics for Schrödinger bridges")]
struct Args {
    /// Experiment file (TOML).
    #[arg(short, long, required_unless_present = "list_scenarios")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the scenario names and exit.
    #[arg(long)]
    list_scenarios: bool,
    /// Validate the config and exit.
    #[arg(long)]
    check: bool,
}

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_scenarios {
        for s in Scenario::ALL {
            println!("{:<16} {}", s.name(), s.summary());
        }
        return ExitCode::SUCCESS;
    }
    let path = args.config.expect("clap enforces --config");
    let mut cfg = match config::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let diags = config::validate(&cfg);
    for d in &diags {
        eprintln!("{d}");
    }
    if diags.iter().any(|d| d.severity == Severity::Violation) {
        return ExitCode::from(EXIT_INPUT);
    }
    if args.check {
        println!("{}: ok ({})", path.display(), cfg.digest());
        return ExitCode::SUCCESS;
    }
    let warnings: Vec<_> = diags.into_iter().filter(|d| d.severity == Severity::Warning).collect();

    let out = args.out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(EXIT_INPUT);
    }

    let result = Runner::new(&cfg, &out).and_then(|r| r.run());
    let res = match result {
        Ok(res) => res,
        Err(e) => {
            let (class, code) = match e {
                RunError::Input(_) => ("input", EXIT_INPUT),
                RunError::Numerical(_) => ("numerical", EXIT_NUMERICAL),
            };
            eprintln!("error: {}", e.message());
            if let Err(io) = output::write_error(&out, &cfg, &warnings, class, e.message()) {
                eprintln!("error: {}: {io}", out.display());
            }
            return ExitCode::from(code);
        }
    };
    if let Err(e) = output::write_report(&out, &cfg, &warnings, &res) {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(EXIT_INPUT);
    }
    let text = output::summary(&cfg, &res);
    if let Err(e) = output::write_summary(&out, &text) {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(EXIT_INPUT);
    }
    print!("{text}");
    if res.reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
