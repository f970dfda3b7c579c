use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use evsched_cli::{cmd_audit, cmd_simulate, cmd_solve, ConfigSource};

#[derive(Parser)]
#[command(name = "evsched", version, about = "EV charging scheduling: MDP solver, simulator and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Simulation seed (overrides `simulate.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation horizon in periods (overrides `simulate.horizon`).
    #[arg(long)]
    horizon: Option<u64>,
    /// `key=value` override, e.g. `model.e_max=inf`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn source(&self) -> Result<ConfigSource> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("simulate.seed={s}"));
        }
        if let Some(h) = self.horizon {
            overrides.push(format!("simulate.horizon={h}"));
        }
        Ok(ConfigSource::from_path(&self.config)?.with_overrides(&overrides))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured policy (with sweeps and curves if configured).
    Simulate(Common),
    /// Solve the configured MDP and write policy/value tables.
    Solve(Common),
    /// Check a policy against the optimality conditions.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Policy table CSV.
        #[arg(long)]
        policy: PathBuf,
        /// Value table CSV.
        #[arg(long)]
        values: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate(c) => {
            let rows = cmd_simulate(&c.source()?, &c.out_dir)?;
            for r in &rows {
                println!(
                    "{} {}={} cost {:.4} ± {:.4}  queue {:.4} ± {:.4}  clamps {}",
                    r.curve, r.sweep_key, r.sweep_value, r.eval.cost, r.eval.cost_halfwidth, r.eval.delay, r.eval.delay_halfwidth, r.eval.clamps
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(c) => {
            let o = cmd_solve(&c.source()?, &c.out_dir)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { common, policy, values } => {
            let o = cmd_audit(&common.source()?, &policy, &values, &common.out_dir)?;
            println!(
                "{} states, {} defined checks, {} overflow violations, {} states with sandwich violations",
                o.states, o.defined_checks, o.overflow_violations, o.sandwich_violations
            );
            Ok(if o.overflow_violations > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}
