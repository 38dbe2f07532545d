//! Command-line driver for the dual-voltage evolution experiments.
//!
//! `evolve` runs and archives the seeded experiment, `reevaluate` re-scores
//! candidates from the fast-voltage fronts at a reduced voltage, `analyze`
//! compares the pooled final populations statistically, and `plot` renders
//! figures plus the underlying CSV. Every command is deterministic given
//! its config and the archive contents.
//!
//! Exit codes: 0 on success, 2 for configuration or precondition problems
//! (including plotting an empty archive set), 3 for IO failures and
//! missing or aborted run data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quadrevo::archive::{self, ArchiveError, StoredRun};
use quadrevo::config::{ConfigError, ExperimentConfig};
use quadrevo::experiment::{self, HarnessError};
use quadrevo::plot::{self, PlotError};

#[derive(Parser)]
#[command(
    name = "quadrevo",
    version,
    about = "Evolve quadruped gaits and morphologies at two servo supply voltages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for archives, reports, and figures.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and archive every run.
    Evolve {
        #[command(flatten)]
        shared: Shared,
        /// Base seed; run i uses base + i.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Evolve at this single voltage instead of the configured set.
        #[arg(long, value_name = "V")]
        voltage: Option<f64>,
        /// Independent runs per voltage.
        #[arg(long, value_name = "N")]
        runs: Option<usize>,
        /// Generations per run, initial population included.
        #[arg(long, value_name = "N")]
        generations: Option<usize>,
        /// Population size.
        #[arg(long, value_name = "N")]
        population: Option<usize>,
    },
    /// Re-evaluate front candidates from the fastest-voltage archives.
    Reevaluate {
        #[command(flatten)]
        shared: Shared,
        /// Target voltage; defaults to the lowest archived one.
        #[arg(long, value_name = "V")]
        voltage: Option<f64>,
    },
    /// Compare the pooled final populations of the two voltage groups.
    Analyze {
        #[command(flatten)]
        shared: Shared,
    },
    /// Render figures and the evaluations CSV from the archives.
    Plot {
        #[command(flatten)]
        shared: Shared,
    },
}

/// Failure classes behind the documented exit codes.
enum CliError {
    /// Bad configuration or unmet precondition: exit 2.
    Config(String),
    /// IO failure or missing data: exit 3.
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        match err {
            ConfigError::Read { .. } => CliError::Io(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

impl From<ArchiveError> for CliError {
    fn from(err: ArchiveError) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(err: HarnessError) -> Self {
        match err {
            HarnessError::Config(inner) => inner.into(),
            HarnessError::Stats(inner) => CliError::Config(inner.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

fn load_config(shared: &Shared) -> Result<ExperimentConfig, CliError> {
    let mut config = match &shared.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &shared.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn load_runs(config: &ExperimentConfig) -> Result<Vec<StoredRun>, CliError> {
    Ok(archive::discover_runs(&config.output_dir)?)
}

/// Distinct archived voltages, ascending.
fn archived_voltages(runs: &[StoredRun]) -> Vec<f64> {
    let mut voltages: Vec<f64> = Vec::new();
    for run in runs {
        if !voltages.iter().any(|&v| (v - run.meta.voltage).abs() < 1e-6) {
            voltages.push(run.meta.voltage);
        }
    }
    voltages.sort_by(|a, b| a.partial_cmp(b).expect("finite voltages"));
    voltages
}

fn cmd_evolve(
    shared: &Shared,
    seed: Option<u64>,
    voltage: Option<f64>,
    runs: Option<usize>,
    generations: Option<usize>,
    population: Option<usize>,
) -> Result<(), CliError> {
    let mut config = load_config(shared)?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    if let Some(voltage) = voltage {
        config.voltages = vec![voltage];
    }
    if let Some(runs) = runs {
        config.runs_per_voltage = runs;
    }
    if let Some(generations) = generations {
        config.evo.generations = generations;
    }
    if let Some(population) = population {
        config.evo.population = population;
    }
    config.validate()?;

    let outcomes = experiment::run_experiment(&config)?;
    for outcome in &outcomes {
        println!(
            "archived {} run{} seed {} -> {}",
            archive::voltage_label(outcome.voltage),
            outcome.run_index,
            outcome.seed,
            outcome.dir.display()
        );
    }
    println!(
        "{} runs archived under {}",
        outcomes.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn cmd_reevaluate(shared: &Shared, voltage: Option<f64>) -> Result<(), CliError> {
    let config = load_config(shared)?;
    let runs = load_runs(&config)?;
    let voltages = archived_voltages(&runs);
    let source = *voltages.last().expect("discover_runs is non-empty");
    let target = match voltage {
        Some(v) => v,
        None if voltages.len() >= 2 => voltages[0],
        None => {
            return Err(CliError::Config(
                "archives hold a single voltage; pass --voltage to pick a target".into(),
            ))
        }
    };

    let report = experiment::reevaluation_report(&runs, source, target, 5, 10)?;
    let path = config.output_dir.join("reevaluation.json");
    experiment::write_json_report(&path, &report)?;

    println!(
        "re-evaluated {} candidates {:.1} V -> {:.1} V ({} samples each)",
        report.rows.len(),
        report.source_voltage,
        report.target_voltage,
        report.samples_per_individual
    );
    for row in &report.rows {
        let star = if row.speed_significant { "*" } else { "" };
        println!(
            "q={:.2} run{} speed {:.2}±{:.2} -> {:.2}±{:.2} m/min ({:+.1}%{star}) stability {:.3} -> {:.3} ({:+.1}%{})",
            row.quantile,
            row.source_run,
            row.source_speed_mean,
            row.source_speed_std,
            row.target_speed_mean,
            row.target_speed_std,
            row.speed_change_pct,
            row.source_stability_mean,
            row.target_stability_mean,
            row.stability_change_pct,
            if row.stability_significant { "*" } else { "" },
        );
    }
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_analyze(shared: &Shared) -> Result<(), CliError> {
    let config = load_config(shared)?;
    let runs = load_runs(&config)?;
    let voltages = archived_voltages(&runs);
    if voltages.len() < 2 {
        return Err(CliError::Config(
            "analysis needs archives from at least two voltages".into(),
        ));
    }
    let (low, high) = (voltages[0], *voltages.last().unwrap());

    let report = experiment::analysis_report(&runs, high, low)?;
    let path = config.output_dir.join("analysis.json");
    experiment::write_json_report(&path, &report)?;

    for cmp in &report.comparisons {
        let star = if cmp.significant { "*" } else { "" };
        println!(
            "{}: U={:.1} p={:.4} (holm {:.4}{star}) delta={:+.3} n={}x{}",
            cmp.label, cmp.u, cmp.p_raw, cmp.p_holm, cmp.cliffs_delta, cmp.samples_a, cmp.samples_b
        );
    }
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_plot(shared: &Shared) -> Result<(), CliError> {
    let config = load_config(shared)?;
    let runs = match archive::discover_runs(&config.output_dir) {
        Ok(runs) => runs,
        Err(ArchiveError::Empty(path)) => {
            eprintln!("warning: no archives under {}, nothing to plot", path.display());
            return Err(CliError::Config("empty archive set".into()));
        }
        Err(other) => return Err(other.into()),
    };
    let figures = config.output_dir.join("figures");
    let written = plot::emit_all(&runs, &figures).map_err(|err| match err {
        PlotError::NoArchives => CliError::Config("empty archive set".into()),
        PlotError::Io { .. } => CliError::Io(err.to_string()),
    })?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Evolve {
            shared,
            seed,
            voltage,
            runs,
            generations,
            population,
        } => cmd_evolve(shared, *seed, *voltage, *runs, *generations, *population),
        Command::Reevaluate { shared, voltage } => cmd_reevaluate(shared, *voltage),
        Command::Analyze { shared } => cmd_analyze(shared),
        Command::Plot { shared } => cmd_plot(shared),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("config error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Io(message)) => {
            eprintln!("io error: {message}");
            ExitCode::from(3)
        }
    }
}
