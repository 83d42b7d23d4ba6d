//! Position-landscape scans for the two-waveguide, one-antenna-per-waveguide
//! configuration: evaluate an objective over the full (x1, x2) grid, persist
//! it as CSV and count its strict local maxima. The scan is what motivates a
//! global position optimizer — even this smallest instance is littered with
//! local optima.

use crate::record::{format_sig12, write_atomic};
use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use pass_thb::benchmarks::anchored_position_objective;
use pass_thb::model::{PinchLayout, SystemConfig, UserSet};
use pass_thb::zf::zf_wsr;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which function of the antenna positions to map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LandscapeObjective {
    /// The frozen single-round surrogate the position stage of the main
    /// optimizer maximizes (anchored at a seeded random state).
    PositionSurrogate,
    /// The ideal zero-forcing weighted sum rate at each layout.
    ZeroForcingRate,
}

impl LandscapeObjective {
    pub fn name(self) -> &'static str {
        match self {
            LandscapeObjective::PositionSurrogate => "position-surrogate",
            LandscapeObjective::ZeroForcingRate => "zf-rate",
        }
    }
}

impl FromStr for LandscapeObjective {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position-surrogate" | "surrogate" => Ok(LandscapeObjective::PositionSurrogate),
            "zf-rate" | "zf" => Ok(LandscapeObjective::ZeroForcingRate),
            other => bail!(
                "unknown landscape objective {other:?}; expected position-surrogate or zf-rate"
            ),
        }
    }
}

/// What a scan produced.
#[derive(Debug)]
pub struct LandscapeOutcome {
    pub path: PathBuf,
    /// Grid points along each axis.
    pub points_per_axis: usize,
    /// Data rows in the CSV (`points_per_axis` squared).
    pub rows: usize,
    /// Interior grid points strictly greater than all four neighbors.
    pub strict_local_maxima: usize,
}

/// Inclusive grid `0, step, 2 step, ..` over `[0, length]`, tolerating the
/// usual floating-point slop in `length / step`, with the last point clamped
/// onto the boundary.
fn axis_points(length: f64, step: f64) -> Vec<f64> {
    let steps = (length / step + 1e-9).floor() as usize;
    (0..=steps).map(|i| (i as f64 * step).min(length)).collect()
}

/// Interior points strictly greater than their four axis neighbors.
pub fn count_strict_local_maxima(values: &[Vec<f64>]) -> usize {
    let rows = values.len();
    if rows < 3 {
        return 0;
    }
    let cols = values[0].len();
    let mut count = 0;
    for i in 1..rows - 1 {
        for j in 1..cols.saturating_sub(1) {
            let v = values[i][j];
            if v > values[i - 1][j]
                && v > values[i + 1][j]
                && v > values[i][j - 1]
                && v > values[i][j + 1]
            {
                count += 1;
            }
        }
    }
    count
}

/// Maps `objective` over the (x1, x2) position grid at `grid_step` meters,
/// writes the CSV (`x1,x2,value` with 12 significant digits) atomically to
/// `out_path` and reports the strict-local-maxima count.
///
/// `anchor_seed` selects the frozen anchor state of the position surrogate;
/// it is unused for the zero-forcing objective.
pub fn landscape_scan(
    cfg: &SystemConfig,
    users: &UserSet,
    objective: LandscapeObjective,
    grid_step: f64,
    anchor_seed: u64,
    out_path: &Path,
) -> Result<LandscapeOutcome> {
    if cfg.num_waveguides != 2 || cfg.pas_per_waveguide != 1 {
        bail!(
            "landscape scans need num_waveguides = 2 and pas_per_waveguide = 1 \
             (got num_waveguides = {}, pas_per_waveguide = {})",
            cfg.num_waveguides,
            cfg.pas_per_waveguide
        );
    }
    if !(grid_step > 0.0) {
        bail!("grid_step must be positive (got {grid_step})");
    }
    let f: Box<dyn Fn(&PinchLayout) -> f64 + Sync> = match objective {
        LandscapeObjective::PositionSurrogate => Box::new(
            anchored_position_objective(cfg, users, anchor_seed)
                .context("building the anchored position surrogate")?,
        ),
        LandscapeObjective::ZeroForcingRate => {
            let (cfg, users) = (cfg.clone(), users.clone());
            Box::new(move |layout: &PinchLayout| zf_wsr(layout, &users, &cfg))
        }
    };
    let bounds = cfg.feasible_box();
    let axis = axis_points(cfg.waveguide_length, grid_step);
    let values: Vec<Vec<f64>> = axis
        .par_iter()
        .map(|&x1| {
            axis.iter()
                .map(|&x2| {
                    // One antenna per waveguide, so the positions matrix is a
                    // single row and repair is the identity on these points.
                    let layout = bounds.repair(DMatrix::from_row_slice(1, 2, &[x1, x2]));
                    f(&layout)
                })
                .collect()
        })
        .collect();

    let mut out = String::with_capacity(axis.len() * axis.len() * 48);
    out.push_str("x1,x2,value\n");
    for (i, &x1) in axis.iter().enumerate() {
        for (j, &x2) in axis.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                format_sig12(x1),
                format_sig12(x2),
                format_sig12(values[i][j]),
            ));
        }
    }
    write_atomic(out_path, out.as_bytes())?;
    Ok(LandscapeOutcome {
        path: out_path.to_path_buf(),
        points_per_axis: axis.len(),
        rows: axis.len() * axis.len(),
        strict_local_maxima: count_strict_local_maxima(&values),
    })
}
