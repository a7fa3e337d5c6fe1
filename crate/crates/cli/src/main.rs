use std::path::PathBuf;
use std::process::ExitCode;

use chernflow::config::parse_mode;
use chernflow::{parse_config_file, run_scenario, CliError, Overrides, RunOptions, EXIT_CHECKS_FAILED, EXIT_CONFIG};
use clap::Parser;

/// Normalized Chern-Ricci flow on a genus-2 elliptic bundle.
#[derive(Debug, Parser)]
#[command(name = "chernflow", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Resume from a `.crfl` checkpoint written by the same configuration.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write base-grid and reference-geometry CSV files under `dumps/`.
    #[arg(long)]
    dump_geometry: bool,
    /// Fiber mode override: `reduced` or `full`.
    #[arg(long)]
    mode: Option<String>,
    /// End time override.
    #[arg(long)]
    t_end: Option<f64>,
    /// Accepted for compatibility; runs are deterministic.
    #[arg(long)]
    seedless: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("chernflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let ov = Overrides {
        mode: cli.mode.as_deref().map(parse_mode).transpose()?,
        t_end: cli.t_end,
        output_dir: cli.output.clone(),
    };
    let cfg = parse_config_file(&cli.config, &ov)?;
    let opts = RunOptions { resume: cli.resume.clone(), dump_geometry: cli.dump_geometry };
    let started = std::time::Instant::now();
    let outcome = run_scenario(&cfg, &opts)?;
    eprintln!(
        "chernflow: {} reached t = {} in {} steps, {} records, {:.1} s",
        cfg.scenario.kind,
        outcome.final_t,
        outcome.steps,
        outcome.series.len(),
        started.elapsed().as_secs_f64()
    );
    match &outcome.report {
        Ok(rep) => {
            for c in rep.checks.iter().filter(|c| c.asserted && !c.pass) {
                eprintln!("chernflow: check {} failed: observed {:e} vs {}", c.name, c.observed, c.bound);
            }
        }
        Err(msg) => eprintln!("chernflow: checks not evaluated: {msg}"),
    }
    Ok(if outcome.all_pass() { 0 } else { EXIT_CHECKS_FAILED })
}
