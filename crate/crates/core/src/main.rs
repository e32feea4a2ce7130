use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use momentum_mpc::check::check_scenario;
use momentum_mpc::config::{load_scenario, PushConfig, ScenarioConfig};
use momentum_mpc::error::{ConfigError, SimError};
use momentum_mpc::output::write_run;
use momentum_mpc::sim::{run_scenario, RunLog, RunOutcome};

const EXIT_FALL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(version, about = "Momentum-based MPC push-recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario (a TOML file or a bundled scenario name).
    Run {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a scenario once per push magnitude, in parallel.
    Sweep {
        config: String,
        /// Comma-separated magnitudes in newtons.
        #[arg(long, value_delimiter = ',', required = true)]
        push_magnitudes: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Validate a scenario and check the first controller cycle without simulating.
    Check {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the bundled scenarios.
    List,
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<(), ConfigError> {
        if let Some(dir) = &self.out_dir {
            config.output.directory = dir.clone();
        }
        if let Some(seed) = self.seed {
            config.simulation.seed = seed;
        }
        if let Some(dt) = self.dt {
            config.controller.dt = dt;
        }
        if let Some(h) = self.horizon {
            config.controller.horizon = h;
        }
        config.validate()
    }
}

fn load(source: &str, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let mut config = load_scenario(source)?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn outcome_code(log: &RunLog) -> u8 {
    match log.summary.outcome {
        RunOutcome::Completed => 0,
        RunOutcome::Fell { .. } => EXIT_FALL,
        RunOutcome::SolverFailure { .. } => EXIT_SOLVER,
    }
}

fn error_code(err: &SimError) -> u8 {
    match err {
        SimError::Config(_) => EXIT_CONFIG,
        SimError::Fall { .. } => EXIT_FALL,
        SimError::Output(_) => EXIT_CONFIG,
        SimError::SolverFailure { .. } | SimError::Controller(_) => EXIT_SOLVER,
    }
}

fn run_one(config: &ScenarioConfig, dir: &Path) -> Result<u8, SimError> {
    let log = run_scenario(config)?;
    write_run(&log, dir)?;
    let s = &log.summary;
    match &s.outcome {
        RunOutcome::Completed => println!(
            "{}: completed, step {}, final distance to support centroid {:.4} m",
            s.scenario,
            if s.step_taken { "taken" } else { "not taken" },
            s.final_distance_to_centroid
        ),
        RunOutcome::Fell { time, height } => {
            eprintln!("{}: fall at t = {time:.3} s, CoM height {height:.4} m", s.scenario)
        }
        RunOutcome::SolverFailure { time, count } => {
            eprintln!("{}: {count} consecutive solver failures at t = {time:.3} s", s.scenario)
        }
    }
    println!("  output written to {}", dir.display());
    Ok(outcome_code(&log))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => {
            for name in momentum_mpc::config::bundled_scenario_names() {
                println!("{name}");
            }
            0
        }
        Command::Run { config, overrides } => match load(&config, &overrides) {
            Err(e) => {
                eprintln!("config error: {e}");
                EXIT_CONFIG
            }
            Ok(cfg) => {
                let dir = cfg.output.directory.clone();
                run_one(&cfg, &dir).unwrap_or_else(|e| {
                    eprintln!("error: {e}");
                    error_code(&e)
                })
            }
        },
        Command::Sweep {
            config,
            push_magnitudes,
            overrides,
        } => match load(&config, &overrides) {
            Err(e) => {
                eprintln!("config error: {e}");
                EXIT_CONFIG
            }
            Ok(base) => {
                let codes: Vec<u8> = push_magnitudes
                    .par_iter()
                    .map(|&magnitude| {
                        let mut cfg = base.clone();
                        if cfg.simulation.pushes.is_empty() {
                            cfg.simulation.pushes.push(PushConfig::default());
                        }
                        for p in &mut cfg.simulation.pushes {
                            p.magnitude = magnitude;
                        }
                        cfg.name = format!("{}_{magnitude}N", base.name);
                        let dir = base.output.directory.join(format!("push_{magnitude}N"));
                        match cfg.validate() {
                            Err(e) => {
                                eprintln!("config error: {e}");
                                EXIT_CONFIG
                            }
                            Ok(()) => run_one(&cfg, &dir).unwrap_or_else(|e| {
                                eprintln!("error: {e}");
                                error_code(&e)
                            }),
                        }
                    })
                    .collect();
                [EXIT_CONFIG, EXIT_SOLVER, EXIT_FALL]
                    .into_iter()
                    .find(|c| codes.contains(c))
                    .unwrap_or(0)
            }
        },
        Command::Check { config, overrides } => match load(&config, &overrides) {
            Err(e) => {
                eprintln!("config error: {e}");
                EXIT_CONFIG
            }
            Ok(cfg) => match check_scenario(&cfg) {
                Err(e) => {
                    eprintln!("error: {e}");
                    error_code(&e)
                }
                Ok(results) => {
                    let mut failed = false;
                    for r in &results {
                        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                        failed |= !r.passed;
                    }
                    if failed {
                        EXIT_SOLVER
                    } else {
                        0
                    }
                }
            },
        },
    };
    ExitCode::from(code)
}
