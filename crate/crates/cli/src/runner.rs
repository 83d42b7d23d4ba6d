//! Run planning, algorithm dispatch and result collection.
//!
//! A configuration expands into a deterministic list of run specifications
//! (one per sweep value per seed). Runs execute concurrently; every run is a
//! pure function of its specification, and the records are emitted in plan
//! order, so the output files are byte-identical across reruns.

use crate::config::{apply_sweep, Algorithm, ExperimentConfig, StopRules};
use crate::record::{emit_csv, emit_summary, IterationRow, RunRecord};
use anyhow::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use pass_thb::benchmarks::{mimo_optimize, sc_pass_optimize};
use pass_thb::fp::{optimize, AoConfig, PinchingRule};
use pass_thb::manifold::RcgConfig;
use pass_thb::model::{
    energy_efficiency, ComponentCounts, ComponentPowers, PinchLayout, SystemConfig, SystemParams,
    UserSet,
};
use pass_thb::shade::ShadeConfig;
use pass_thb::zf::zf_pipeline;
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;

/// Draws the user positions for one run: uniform over the service region on
/// the ground plane, deterministic per `(config, seed)`.
pub fn sample_users(cfg: &SystemConfig, seed: u64) -> UserSet {
    UserSet::sample(cfg, seed)
}

/// Everything one run needs, resolved from the experiment config.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub params: SystemParams,
    pub sweep: Option<(String, f64)>,
    shade: crate::config::ShadeOverrides,
    rcg: RcgConfig,
    stop: StopRules,
    grid_step: Option<f64>,
    timings: bool,
}

/// Expands the configuration into its deterministic run list.
pub fn build_plan(exp: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    exp.validate()?;
    let base = exp.system_params();
    let rcg = exp.rcg.apply(RcgConfig::default());
    let mut plan = Vec::new();
    let variants: Vec<(Option<(String, f64)>, SystemParams)> = match &exp.sweep {
        None => vec![(None, base)],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&value| {
                let mut params = base.clone();
                apply_sweep(&mut params, &sweep.parameter, value)?;
                Ok((Some((sweep.parameter.clone(), value)), params))
            })
            .collect::<Result<_>>()?,
    };
    for (sweep, params) in variants {
        for &seed in &exp.seeds {
            let run_id = match &sweep {
                None => format!("{}-seed{seed}", exp.algorithm),
                Some((name, value)) => format!("{}-{name}={value}-seed{seed}", exp.algorithm),
            };
            plan.push(RunSpec {
                run_id,
                seed,
                algorithm: exp.algorithm,
                params: params.clone(),
                sweep: sweep.clone(),
                shade: exp.shade.clone(),
                rcg: rcg.clone(),
                stop: exp.stop.clone(),
                grid_step: exp.grid_step,
                timings: exp.timings,
            });
        }
    }
    Ok(plan)
}

/// The algorithm-independent facts extracted from one solver outcome.
struct Solved {
    trace: Vec<f64>,
    wsr: f64,
    converged_at: Option<usize>,
    transmit: DMatrix<Complex64>,
    layout: Option<PinchLayout>,
    counts: ComponentCounts,
}

fn dispatch(spec: &RunSpec, cfg: &SystemConfig, users: &UserSet) -> Result<Solved, pass_thb::Error> {
    let shade_cfg = spec
        .shade
        .apply(ShadeConfig::for_system(cfg, spec.seed));
    let ao = AoConfig {
        max_outer: spec.stop.max_outer,
        rel_tol: spec.stop.rel_tol,
        rcg: spec.rcg.clone(),
        pinching: PinchingRule::Custom(shade_cfg.clone()),
        seed: spec.seed,
        init_layout: None,
    };
    let (m, n, n_rf) = (cfg.num_waveguides, cfg.pas_per_waveguide, cfg.num_rf_chains);
    match spec.algorithm {
        Algorithm::Fp => {
            let out = optimize(cfg, users, &ao)?;
            Ok(Solved {
                trace: out.trace,
                wsr: out.wsr,
                converged_at: out.converged_at,
                transmit: out.beamformers.transmit(),
                layout: Some(out.layout),
                counts: ComponentCounts::fully_connected(n_rf, m, n),
            })
        }
        Algorithm::Grid => {
            let step = spec.grid_step.unwrap_or(0.1 * cfg.wavelength);
            let out = optimize(
                cfg,
                users,
                &AoConfig {
                    pinching: PinchingRule::Grid { step },
                    ..ao
                },
            )?;
            Ok(Solved {
                trace: out.trace,
                wsr: out.wsr,
                converged_at: out.converged_at,
                transmit: out.beamformers.transmit(),
                layout: Some(out.layout),
                counts: ComponentCounts::fully_connected(n_rf, m, n),
            })
        }
        Algorithm::Zf => {
            let out = zf_pipeline(cfg, users, &shade_cfg, &spec.rcg, spec.seed)?;
            Ok(Solved {
                // The pipeline is one-shot: a single trace entry, the rate the
                // factored beamformers actually realize.
                trace: vec![out.realized_wsr],
                wsr: out.realized_wsr,
                converged_at: None,
                transmit: out.beamformers.transmit(),
                layout: Some(out.layout),
                counts: ComponentCounts::fully_connected(n_rf, m, n),
            })
        }
        Algorithm::Sc => {
            let out = sc_pass_optimize(cfg, users, &ao)?;
            Ok(Solved {
                trace: out.trace,
                wsr: out.wsr,
                converged_at: out.converged_at,
                transmit: out.digital,
                layout: Some(out.layout),
                counts: ComponentCounts::sub_connected(m, n),
            })
        }
        Algorithm::Mimo => {
            let out = mimo_optimize(cfg, users, &ao)?;
            Ok(Solved {
                trace: out.trace,
                wsr: out.wsr,
                converged_at: out.converged_at,
                transmit: &out.analog * &out.digital,
                layout: None,
                counts: ComponentCounts::mimo(m, n),
            })
        }
    }
}

/// Executes one run; failures become records rather than propagating, so the
/// rest of the plan continues.
pub fn execute(spec: &RunSpec) -> RunRecord {
    let started = Instant::now();
    let mut record = RunRecord {
        run_id: spec.run_id.clone(),
        seed: spec.seed,
        algorithm: spec.algorithm.name().to_string(),
        sweep_parameter: spec.sweep.as_ref().map(|(name, _)| name.clone()),
        sweep_value: spec.sweep.as_ref().map(|&(_, value)| value),
        iterations: Vec::new(),
        final_wsr: None,
        final_energy_efficiency: None,
        converged_at: None,
        final_layout: Vec::new(),
        power_residual: None,
        layout_feasible: true,
        error: None,
    };
    let solved = SystemConfig::new(spec.params.clone())
        .and_then(|cfg| {
            let users = sample_users(&cfg, spec.seed);
            dispatch(spec, &cfg, &users).map(|s| (cfg, s))
        });
    match solved {
        Err(e) => record.error = Some(e.to_string()),
        Ok((cfg, solved)) => {
            let elapsed_ms = if spec.timings {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            record.iterations = solved
                .trace
                .iter()
                .enumerate()
                .map(|(i, &objective)| IterationRow {
                    iteration: i + 1,
                    objective,
                    elapsed_ms,
                })
                .collect();
            record.final_wsr = Some(solved.wsr);
            record.final_energy_efficiency = Some(energy_efficiency(
                solved.wsr,
                &solved.counts,
                &ComponentPowers::default(),
            ));
            record.converged_at = solved.converged_at;
            record.power_residual = Some(
                (solved.transmit.norm_squared() - cfg.transmit_power_mw).abs()
                    / cfg.transmit_power_mw,
            );
            if let Some(layout) = &solved.layout {
                record.layout_feasible = layout.is_feasible(&cfg.feasible_box());
                record.final_layout = (0..cfg.num_waveguides)
                    .map(|m| layout.positions().column(m).iter().copied().collect())
                    .collect();
            }
        }
    }
    record
}

/// Paths and records produced by [`run`].
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    /// True when every run succeeded with a finite rate: the process exit
    /// criterion.
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(RunRecord::is_ok)
    }
}

/// Executes the whole plan concurrently and writes `runs.csv` and
/// `summary.json` into the configured output directory.
pub fn run(exp: &ExperimentConfig) -> Result<RunOutcome> {
    let plan = build_plan(exp)?;
    // Indexed parallel iteration keeps plan order in the collected records.
    let records: Vec<RunRecord> = plan.par_iter().map(execute).collect();
    let csv_path = exp.output_dir.join("runs.csv");
    let summary_path = exp.output_dir.join("summary.json");
    emit_csv(&records, &csv_path)?;
    emit_summary(&records, &summary_path)?;
    Ok(RunOutcome {
        records,
        csv_path,
        summary_path,
    })
}
