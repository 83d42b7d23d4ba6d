//! Run records and their CSV / JSON persistence.
//!
//! All floating-point values are printed with 12 significant digits in a
//! fixed scientific format, so emitted files are byte-stable across reruns
//! and parsing a file recovers exactly the printed values.

use anyhow::{Context, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// One outer iteration of a run's convergence trace.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRow {
    /// Outer iteration number, 1-based.
    pub iteration: usize,
    /// Objective (weighted sum rate surrogate) after this iteration.
    pub objective: f64,
    /// Wall-clock duration of the whole run in milliseconds, repeated on
    /// every row (the optimizers report their traces after the fact, so
    /// iteration-level timing is not collected). Zero unless the config
    /// enables timing, because wall-clock values break byte-identical reruns.
    pub elapsed_ms: f64,
}

/// Everything recorded about a single optimizer run.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub algorithm: String,
    /// Sweep parameter name, when this run belongs to a sweep.
    pub sweep_parameter: Option<String>,
    /// Sweep parameter value, when this run belongs to a sweep.
    pub sweep_value: Option<f64>,
    /// Convergence trace, one row per outer iteration; empty for failed runs.
    pub iterations: Vec<IterationRow>,
    /// Exact weighted sum rate of the returned beamformers, bits/s/Hz.
    pub final_wsr: Option<f64>,
    /// Energy efficiency of the final solution, bits/s/Hz per watt.
    pub final_energy_efficiency: Option<f64>,
    /// Outer iteration (1-based) at which the relative-change test fired.
    pub converged_at: Option<usize>,
    /// Final antenna positions, one inner list per waveguide; empty when the
    /// architecture has no pinching stage.
    pub final_layout: Vec<Vec<f64>>,
    /// Relative deviation of the transmit power from its budget.
    pub power_residual: Option<f64>,
    /// Whether the final layout satisfies the box and spacing constraints.
    pub layout_feasible: bool,
    /// Failure message when the run did not produce a solution.
    pub error: Option<String>,
}

impl RunRecord {
    /// A run counts as successful when it produced a finite rate.
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.final_wsr.map_or(false, f64::is_finite)
    }
}

/// Fixed CSV header for convergence traces.
pub const CSV_HEADER: &str = "run_id,seed,algorithm,outer_iter,wsr_bits_per_hz,elapsed_ms";

/// Formats a float with 12 significant digits (scientific notation). This is
/// the single formatting routine used for every float the harness emits.
pub fn format_sig12(value: f64) -> String {
    format!("{value:.11e}")
}

/// Rounds a float to the 12 significant digits it would be printed with, so
/// JSON numbers agree exactly with their CSV counterparts.
pub fn round_sig12(value: f64) -> f64 {
    if value.is_finite() {
        format_sig12(value).parse().expect("round-trip of finite float")
    } else {
        value
    }
}

/// Writes `bytes` to `path` atomically: the content lands in a temporary
/// file in the same directory and is renamed over the target, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)
            .with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)
            .and_then(|()| f.sync_all())
            .with_context(|| format!("cannot write {}", tmp.display()))?;
    }
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

/// Emits the convergence-trace CSV: one row per (run, outer iteration) in
/// record order, header only when there are no rows.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for record in records {
        for row in &record.iterations {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                record.run_id,
                record.seed,
                record.algorithm,
                row.iteration,
                format_sig12(row.objective),
                format_sig12(row.elapsed_ms),
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Serialize)]
struct WsrStats {
    runs: usize,
    mean: f64,
    median: f64,
    /// 95% confidence interval for the mean under the normal approximation
    /// (`mean ± 1.96 sd / sqrt(n)`); collapses to the mean for a single run.
    ci95_lower: f64,
    ci95_upper: f64,
}

fn wsr_stats(mut finals: Vec<f64>) -> WsrStats {
    let n = finals.len();
    assert!(n > 0);
    finals.sort_by(f64::total_cmp);
    let mean = finals.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        finals[n / 2]
    } else {
        0.5 * (finals[n / 2 - 1] + finals[n / 2])
    };
    let sd = if n > 1 {
        (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half_width = 1.96 * sd / (n as f64).sqrt();
    WsrStats {
        runs: n,
        mean: round_sig12(mean),
        median: round_sig12(median),
        ci95_lower: round_sig12(mean - half_width),
        ci95_upper: round_sig12(mean + half_width),
    }
}

#[derive(Serialize)]
struct SummaryRun<'a> {
    run_id: &'a str,
    seed: u64,
    algorithm: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_parameter: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_value: Option<f64>,
    outer_iterations: usize,
    converged_at: Option<usize>,
    final_wsr: Option<f64>,
    final_energy_efficiency: Option<f64>,
    power_residual: Option<f64>,
    layout_feasible: bool,
    final_layout: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct Summary<'a> {
    total_runs: usize,
    failed_runs: usize,
    /// Final-WSR statistics per algorithm over successful runs.
    algorithms: std::collections::BTreeMap<String, WsrStats>,
    runs: Vec<SummaryRun<'a>>,
}

/// Emits the JSON summary: per-algorithm statistics of the final WSR over
/// successful runs plus one entry per run (including failures).
pub fn emit_summary(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut by_algorithm: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for record in records {
        if let Some(wsr) = record.final_wsr.filter(|v| v.is_finite()) {
            by_algorithm
                .entry(record.algorithm.clone())
                .or_default()
                .push(wsr);
        }
    }
    let summary = Summary {
        total_runs: records.len(),
        failed_runs: records.iter().filter(|r| !r.is_ok()).count(),
        algorithms: by_algorithm
            .into_iter()
            .map(|(name, finals)| (name, wsr_stats(finals)))
            .collect(),
        runs: records
            .iter()
            .map(|r| SummaryRun {
                run_id: &r.run_id,
                seed: r.seed,
                algorithm: &r.algorithm,
                sweep_parameter: r.sweep_parameter.as_deref(),
                sweep_value: r.sweep_value.map(round_sig12),
                outer_iterations: r.iterations.len(),
                converged_at: r.converged_at,
                final_wsr: r.final_wsr.map(round_sig12),
                final_energy_efficiency: r.final_energy_efficiency.map(round_sig12),
                power_residual: r.power_residual.map(round_sig12),
                layout_feasible: r.layout_feasible,
                final_layout: r
                    .final_layout
                    .iter()
                    .map(|wg| wg.iter().copied().map(round_sig12).collect())
                    .collect(),
                error: r.error.as_deref(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).context("serializing summary")?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
