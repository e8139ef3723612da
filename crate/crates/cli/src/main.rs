//! `bdris`: solve scenarios, run parameter sweeps and evaluate metrics.
//!
//! Exit codes: 0 converged, 2 QoS threshold infeasible, 3 iteration cap
//! reached, 1 any other failure.

mod metrics;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bdris_dfrc::admm::{solve, SolveStatus, SolverConfig};
use bdris_dfrc::report::ResultFile;
use bdris_dfrc::{load_scenario_file, ArchTag, Error, Scenario};
use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_MAX_ITERS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bdris",
    version,
    about = "Joint waveform / BD-RIS / receive-filter design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write `result.json` and `convergence.csv`.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// CW-SC, CW-GC, CW-FC, DOUBLE-RIS or RADAR-ONLY; defaults to the file's.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's QoS threshold.
        #[arg(long)]
        qos_db: Option<f64>,
        /// Overrides the scenario's power budget.
        #[arg(long)]
        power_w: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run an experiment sweep described by a TOML spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Evaluate stored results.
    Metrics {
        /// A result file, or a directory searched for result files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target for the space-range pattern, counted from 1.
        #[arg(long, default_value_t = 1)]
        target: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        pfa: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Ber,
    Txbp,
    Srbp,
    Pd,
    Convergence,
}

#[derive(clap::Args, Clone, Debug)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
}

impl SolverArgs {
    pub fn config(&self, seed: u64) -> SolverConfig {
        let mut c = SolverConfig {
            rng_seed: seed,
            ..SolverConfig::default()
        };
        if let Some(n) = self.max_iters {
            c.max_iters = n;
        }
        if let Some(r) = self.rho {
            c.penalty = r;
        }
        c
    }
}

/// Scenario file with command-line overrides applied.
pub fn resolve_scenario(
    path: &Path,
    arch: Option<&str>,
    groups: Option<usize>,
    qos_db: Option<f64>,
    power_w: Option<f64>,
) -> Result<Scenario> {
    let mut s =
        load_scenario_file(path).with_context(|| format!("loading scenario {}", path.display()))?;
    if let Some(q) = qos_db {
        s.qos_db = q;
        for u in &mut s.users {
            u.qos_db = None;
        }
    }
    if let Some(e) = power_w {
        s.power_budget = e;
    }
    if arch.is_some() || groups.is_some() {
        let tag: ArchTag = match arch {
            Some(a) => a.parse()?,
            None if groups.is_some() => ArchTag::Gc,
            None => unreachable!(),
        };
        s = s.with_architecture(tag, groups)?;
    }
    s.validate()?;
    Ok(s)
}

fn cmd_solve(scenario: &Scenario, config: &SolverConfig, out: &Path) -> Result<SolveStatus> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let r = solve(scenario, config)?;
    let file = ResultFile::new(scenario, config.rng_seed, &r);
    file.write(out.join("result.json"))?;
    std::fs::write(out.join("convergence.csv"), file.convergence_csv())?;
    eprintln!(
        "{}: min SCNR {:.3} dB after {} iterations ({:?})",
        scenario.arch, file.min_scnr_db, r.iterations, r.status
    );
    Ok(r.status)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            scenario,
            arch,
            groups,
            seed,
            out,
            qos_db,
            power_w,
            solver,
        } => {
            let s = resolve_scenario(&scenario, arch.as_deref(), groups, qos_db, power_w)?;
            let status = cmd_solve(&s, &solver.config(seed), &out)?;
            Ok(match status {
                SolveStatus::Converged => ExitCode::SUCCESS,
                SolveStatus::MaxIterations => ExitCode::from(EXIT_MAX_ITERS),
            })
        }
        Command::Sweep { spec } => {
            sweep::cmd_sweep(&spec)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics {
            input,
            which,
            out,
            target,
            trials,
            pfa,
            seed,
        } => {
            let opts = metrics::Options {
                which,
                target,
                trials,
                pfa,
                seed,
            };
            let out = out.unwrap_or_else(|| {
                if input.is_dir() {
                    input.clone()
                } else {
                    input.parent().map(Path::to_path_buf).unwrap_or_default()
                }
            });
            metrics::cmd_metrics(&input, &out, &opts)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::QosInfeasible { .. }) => ExitCode::from(EXIT_INFEASIBLE),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
