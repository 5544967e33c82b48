use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use deskcar_core::control::ControllerKind;
use deskcar_sim::config::{Gains, SensorNoise};
use deskcar_sim::runner::{simulate, RunConfig};
use deskcar_sim::scenario::{bundled_names, Scenario};
use deskcar_sim::{log, svg, tools};

const EXIT_FAILURE_RECORD: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "deskcar", version, about = "Closed-loop desk-scale car simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the log, transitions, summary, map and plot.
    Simulate {
        /// Scenario JSON file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = parse_controller)]
        controller: ControllerKind,
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Step length in seconds, overriding the scenario.
        #[arg(long)]
        dt: Option<f64>,
        /// Run length in seconds, overriding the scenario.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a run's final occupancy map as PGM with a text header.
    MapDump {
        #[arg(long)]
        run: PathBuf,
    },
    /// Fit a range correction from (estimated_mm, true_mm) samples.
    CalibrateRange {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bundled scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
}

#[derive(Subcommand)]
enum ScenariosAction {
    List,
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Failure split into the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

fn io_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_IO,
        error: error.into(),
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = PathBuf::from(arg);
    if path.exists() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        Scenario::from_json(&text)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(config_err)
    } else {
        deskcar_sim::scenario::bundled(arg).map_err(config_err)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    scenario: String,
    controller: ControllerKind,
    gains: Option<PathBuf>,
    dt: Option<f64>,
    duration: Option<f64>,
    seed: Option<u64>,
    noise: Option<PathBuf>,
    out: PathBuf,
) -> Result<u8, Failure> {
    let scenario = load_scenario(&scenario)?;
    let mut cfg = RunConfig::new(controller);
    if let Some(p) = gains {
        cfg.gains = Gains::load(&p).map_err(config_err)?;
    }
    if let Some(p) = noise {
        cfg.noise = SensorNoise::load(&p).map_err(config_err)?;
    }
    cfg.dt_s = dt;
    cfg.duration_s = duration;
    cfg.seed = seed;
    let run = simulate(&scenario, &cfg).map_err(|e| match e {
        deskcar_sim::runner::RunError::Config(_) => config_err(e),
        other => io_err(other),
    })?;
    let plot = svg::render(&run, &scenario);
    log::write_run(&out, &run, &plot).map_err(io_err)?;
    let summary = log::summary(&run);
    println!(
        "{}: {} steps, controller {}, outcome {}",
        run.scenario,
        summary.steps,
        summary.controller,
        serde_json::to_string(&run.outcome).unwrap_or_default()
    );
    Ok(if run.outcome.is_failure() { EXIT_FAILURE_RECORD } else { 0 })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Simulate {
            scenario,
            controller,
            gains,
            dt,
            duration,
            seed,
            noise,
            out,
        } => run_simulate(scenario, controller, gains, dt, duration, seed, noise, out),
        Command::MapDump { run } => {
            tools::map_dump(&run).map_err(io_err)?;
            Ok(0)
        }
        Command::CalibrateRange { samples, out } => {
            let text = std::fs::read_to_string(&samples)
                .with_context(|| format!("reading {}", samples.display()))
                .map_err(io_err)?;
            let corr = tools::calibrate(&text).map_err(config_err)?;
            let json = serde_json::to_string_pretty(&corr).map_err(io_err)?;
            std::fs::write(&out, json + "\n")
                .with_context(|| format!("writing {}", out.display()))
                .map_err(io_err)?;
            Ok(0)
        }
        Command::Scenarios {
            action: ScenariosAction::List,
        } => {
            for name in bundled_names() {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version are not errors.
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
