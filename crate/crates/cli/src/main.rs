//! `pass-thb`: experiment runner for tri-hybrid pinching-antenna beamforming.
//!
//! Subcommands: `run` (execute the configured runs), `sweep` (same, but over
//! the configured parameter sweep) and `landscape` (map a position objective
//! over the two-waveguide toy grid). All output is deterministic per
//! (config, seed); the `PASS_THB_THREADS` environment variable caps the
//! evaluation concurrency without affecting results.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pass_thb_cli::config::{load_config, Algorithm, ExperimentConfig, LoadedConfig};
use pass_thb_cli::landscape::{landscape_scan, LandscapeObjective};
use pass_thb_cli::runner::{run, sample_users};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pass-thb",
    version,
    about = "Beamforming experiments for fully connected tri-hybrid pinching-antenna systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run per configured seed and write runs.csv + summary.json.
    Run(RunArgs),
    /// Execute the configured parameter sweep: one run per value per seed.
    Sweep(RunArgs),
    /// Map an objective over the (x1, x2) grid of the two-waveguide,
    /// single-antenna-per-waveguide configuration and count its local maxima.
    Landscape(LandscapeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for runs.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured algorithm (fp, zf, sc, mimo, grid).
    #[arg(long)]
    algorithm: Option<Algorithm>,
}

#[derive(Args)]
struct LandscapeArgs {
    /// JSON experiment config; when omitted, the two-waveguide toy system is
    /// used directly.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the random user positions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for the frozen anchor state of the position surrogate.
    #[arg(long, default_value_t = 1)]
    anchor_seed: u64,
    /// Objective to map: position-surrogate or zf-rate.
    #[arg(long, default_value = "position-surrogate")]
    objective: LandscapeObjective,
    /// Grid resolution in meters; falls back to the config's grid_step, then
    /// to 5 mm.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Output CSV path; defaults to <output_dir>/landscape.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Run(args) => execute_runs(args, false),
        Command::Sweep(args) => execute_runs(args, true),
        Command::Landscape(args) => execute_landscape(args),
    }
}

/// Applies `PASS_THB_THREADS` before any parallel work starts.
fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("PASS_THB_THREADS") {
        let threads: usize = raw
            .trim()
            .parse()
            .context("PASS_THB_THREADS must be a positive integer")?;
        if threads == 0 {
            bail!("PASS_THB_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the global thread pool")?;
    }
    Ok(())
}

fn load_or_default(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let LoadedConfig {
        experiment,
        warnings,
    } = match path {
        Some(path) => load_config(path)?,
        None => LoadedConfig {
            experiment: ExperimentConfig::default(),
            warnings: Vec::new(),
        },
    };
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    Ok(experiment)
}

fn execute_runs(args: RunArgs, sweeping: bool) -> Result<ExitCode> {
    let mut exp = load_or_default(args.config.as_ref())?;
    if let Some(seed) = args.seed {
        exp.seeds = vec![seed];
    }
    if let Some(out) = args.out {
        exp.output_dir = out;
    }
    if let Some(algorithm) = args.algorithm {
        exp.algorithm = algorithm;
    }
    if sweeping && exp.sweep.is_none() {
        bail!("the sweep subcommand needs a `sweep` block in the config");
    }
    if !sweeping && exp.sweep.is_some() {
        eprintln!("warning: `run` ignores the config's sweep block; use the sweep subcommand");
        exp.sweep = None;
    }

    let outcome = run(&exp)?;
    for record in &outcome.records {
        match (&record.error, record.final_wsr) {
            (Some(message), _) => println!("{}: FAILED ({message})", record.run_id),
            (None, Some(wsr)) => {
                let convergence = match record.converged_at {
                    Some(iter) => format!("converged at iteration {iter}"),
                    None => "hit the iteration cap".to_string(),
                };
                println!(
                    "{}: wsr {:.6} bits/s/Hz, ee {:.6} bits/s/Hz/W, {}",
                    record.run_id,
                    wsr,
                    record.final_energy_efficiency.unwrap_or(f64::NAN),
                    convergence
                );
            }
            (None, None) => println!("{}: no result", record.run_id),
        }
    }
    let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} run(s), {} failed; wrote {} and {}",
        outcome.records.len(),
        failed,
        outcome.csv_path.display(),
        outcome.summary_path.display()
    );
    Ok(if outcome.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn execute_landscape(args: LandscapeArgs) -> Result<ExitCode> {
    let exp = match args.config.as_ref() {
        Some(_) => load_or_default(args.config.as_ref())?,
        None => {
            // The scan is only defined for the two-waveguide toy, so that is
            // the sensible default system when no config is given.
            let mut exp = ExperimentConfig::default();
            exp.system.num_waveguides = Some(2);
            exp.system.pas_per_waveguide = Some(1);
            exp
        }
    };
    let cfg = exp.system_config()?;
    let users = sample_users(&cfg, args.seed);
    let grid_step = args.grid_step.or(exp.grid_step).unwrap_or(0.005);
    let out_path = args
        .out
        .unwrap_or_else(|| exp.output_dir.join("landscape.csv"));
    let outcome = landscape_scan(&cfg, &users, args.objective, grid_step, args.anchor_seed, &out_path)?;
    println!(
        "landscape ({}): {} points per axis, {} rows, {} strict local maxima; wrote {}",
        args.objective.name(),
        outcome.points_per_axis,
        outcome.rows,
        outcome.strict_local_maxima,
        outcome.path.display()
    );
    Ok(ExitCode::SUCCESS)
}
