use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use critp::cli::{parse_config_with, run, Mode, Overrides, RunOutcome};

/// Equivariant critical p-Laplace solver and diagnostics.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent solves in sweep-j mode.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        mode: args.mode,
        output_dir: args.output_dir,
        seed: args.seed,
        workers: args.workers,
    };
    let config = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(outcome) => {
            report(&outcome);
            eprintln!("artifacts in {}", config.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn report(outcome: &RunOutcome) {
    match outcome {
        RunOutcome::Solve(s) => println!(
            "{:?} after {} iterations: J = {}, relative defect = {:e}, sign change = {}",
            s.termination, s.iterations, s.energy, s.relative_defect, s.sign.changes_sign
        ),
        RunOutcome::ValidateBubble { levels } => {
            for l in levels {
                println!(
                    "h = {}: sup residual {:e}, l1 residual {:e}",
                    l.survey.h, l.survey.residual.sup_residual, l.survey.residual.l1_residual
                );
            }
        }
        RunOutcome::Diagnose(d) => println!("{:?}: eps = {}, xi = {:?}", d.classification.kind, d.eps, d.xi),
        RunOutcome::CheckHypotheses { reports } => {
            for r in reports {
                println!("N = {}, j = {}: all passed = {}", r.dim, r.j, r.all_passed());
            }
        }
        RunOutcome::SweepJ(s) => {
            for r in &s.runs {
                println!("j = {:?}: {:?}, J = {}", r.j, r.termination, r.energy);
            }
            for e in &s.distinctness {
                println!(
                    "W_{} vs W_{}: margin {:e}, distinct = {}",
                    e.i, e.j, e.witness.measured_margin, e.distinct
                );
            }
        }
    }
}
