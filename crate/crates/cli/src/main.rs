use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hcg::{exit, run_experiment, validate_config, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Analyze,
    Match,
    Vsi,
    Classify,
    Slice,
    Singer,
    Variable,
    /// Use the config's `command` key.
    Run,
}

/// Curvature homogeneity experiments driven by a config file.
#[derive(Debug, Parser)]
#[command(name = "hcg", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Config file (`key = value` lines).
    #[arg(long, short)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override the config's `tol`.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the config's `level`.
    #[arg(long)]
    k: Option<usize>,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return code(exit::CONFIG);
        }
    };
    let requested = match cli.command {
        Cmd::Run => None,
        other => Command::parse(&format!("{other:?}").to_lowercase()),
    };
    let cfg = match validate_config(&text, requested).and_then(|c| c.with_overrides(cli.tol, cli.k)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return code(exit::CONFIG);
        }
    };
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::CONFIG);
        }
    };
    let rendered = hcg::report::render(&outcome.report);
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &rendered) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return code(exit::CONFIG);
            }
        }
        None => print!("{rendered}"),
    }
    match outcome.meets_expectation(&cfg) {
        Some(false) => {
            eprintln!(
                "verdict `{}` differs from expected `{}`",
                outcome.verdict,
                cfg.expect_verdict.as_deref().unwrap_or_default()
            );
            code(exit::MISMATCH)
        }
        _ => code(exit::OK),
    }
}
