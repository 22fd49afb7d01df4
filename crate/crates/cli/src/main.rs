//! `romcbf`: runs experiment configs, certificate reports and scripted
//! command replays.
//!
//! Exit codes: 0 on success (unsafe or diverged runs are flagged in the
//! summaries, not in the exit code), 2 on configuration errors, 3 on internal
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use romcbf::experiment::{certify_experiment, run_experiment, run_replay, CommandScript, ExperimentConfig};
use romcbf::Error;

#[derive(Parser, Debug)]
#[command(name = "romcbf", version, about = "Reduced-order safety filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampling and certificate fitting.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify and roll out every sweep item.
    Run { config: PathBuf },
    /// Certificate checks and invariance certification only.
    Certify { config: PathBuf },
    /// Replay timestamped velocity commands through the filtered arena.
    Replay { config: PathBuf, commands: PathBuf },
}

fn output_dir(cli_out: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn label(l: &Option<String>) -> &str {
    l.as_deref().unwrap_or("-")
}

fn run(cli: &Cli) -> romcbf::Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = output_dir(&cli.out, &cfg);
            let outcomes = run_experiment(&cfg, &out, cli.seed)?;
            if outcomes.is_empty() {
                println!("empty sweep, nothing to run");
            }
            for o in &outcomes {
                let s = o.summary.as_ref().expect("run produces summaries");
                println!(
                    "{:<16} alpha={:<6} gain_margin={:+.4} invariance={:?} min_h={:+.5} safe={}{}",
                    label(&o.label),
                    s.alpha,
                    s.gain_margin,
                    o.report.invariance.status,
                    s.min_h,
                    s.safe,
                    if s.diverged { " DIVERGED" } else { "" }
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Certify { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = output_dir(&cli.out, &cfg);
            for o in certify_experiment(&cfg, &out, cli.seed)? {
                let r = &o.report;
                println!(
                    "{:<16} lower_bound={} decrease={} gain_margin={:+.4} delta={:.3e} invariance={:?}",
                    label(&o.label),
                    r.lower_bound.pass,
                    r.decrease.pass,
                    r.gain.margin,
                    r.delta,
                    r.invariance.status
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Replay { config, commands } => {
            let cfg = ExperimentConfig::load(config)?;
            let script = CommandScript::load(commands)?;
            let out = output_dir(&cli.out, &cfg);
            let (_, summary) = run_replay(&cfg, &script, Some(Path::new(&out)))?;
            println!(
                "alpha={} min_h={:+.5} safe={} max_tracking_error={:.3e}{}",
                summary.alpha,
                summary.min_h,
                summary.safe,
                summary.max_tracking_error,
                if summary.diverged { " DIVERGED" } else { "" }
            );
            println!("artifacts in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
