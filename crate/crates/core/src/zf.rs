//! Zero-forcing pipeline: a low-complexity alternative to the full
//! alternating optimizer.
//!
//! With the pinching stage folded into an effective per-waveguide channel,
//! zero-forcing admits closed forms for everything except the antenna
//! positions: the precoder is the (scaled) right pseudo-inverse, per-user
//! powers come from weighted water-filling, and the resulting weighted sum
//! rate depends on the layout only through the per-user channel qualities.
//! SHADE then searches the layout space directly on that rate, after which
//! the ideal precoder is factored into analog/digital stages by alternating
//! least squares (digital step exact, analog step Riemannian CG under the
//! unit-modulus constraint).

use crate::fp::FpProblem;
use crate::manifold::{rcg_maximize, CirclePoint, QuadraticObjective, RcgConfig};
use crate::model::{
    effective_channel, pinching_beamformer, BeamformerSet, PinchLayout, SystemConfig, UserSet,
};
use crate::shade::{shade_maximize, ShadeConfig};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest acceptable condition number of the effective channel before a
/// layout is treated as rank-deficient.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Interference-nulling directions and per-user channel qualities.
///
/// Returns the unnormalized precoder `G (G^H G)^-1` together with
/// `1 / [(G^H G)^-1]_kk`, the effective gain a user keeps after its stream is
/// forced orthogonal to everyone else's.
pub fn zero_forcing_directions(
    effective: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let users = effective.ncols();
    if users == 0 || effective.nrows() < users {
        return Err(Error::RankDeficient(format!(
            "zero-forcing needs at least as many waveguides as users (got {} x {})",
            effective.nrows(),
            users
        )));
    }
    let singular = effective.clone().svd(false, false).singular_values;
    let (max_sv, min_sv) = (singular.max(), singular.min());
    if !(min_sv > 0.0) || max_sv / min_sv > CONDITION_LIMIT {
        return Err(Error::RankDeficient(format!(
            "effective channel condition number {:.3e} exceeds {CONDITION_LIMIT:.0e}",
            if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY }
        )));
    }
    let gram = effective.adjoint() * effective;
    let inverse = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("channel Gram matrix is not invertible".into()))?
        .inverse();
    let qualities = (0..users).map(|k| 1.0 / inverse[(k, k)].re).collect();
    Ok((effective * inverse, qualities))
}

/// Zero-forcing precoder normalized to the total power budget (uniform
/// scaling, no per-user loading).
pub fn zf_beamformer(effective: &DMatrix<Complex64>, power_mw: f64) -> Result<DMatrix<Complex64>> {
    let (raw, _) = zero_forcing_directions(effective)?;
    let norm = raw.norm();
    Ok(raw * Complex64::new(power_mw.sqrt() / norm, 0.0))
}

/// Output of the weighted water-filling allocation.
#[derive(Clone, Debug)]
pub struct WaterFilling {
    /// Per-user power in milliwatts; zero for deactivated users.
    pub allocation: Vec<f64>,
    pub active: Vec<bool>,
    /// Common water level across active users.
    pub level: f64,
}

/// Weighted water-filling: `p_k = (beta_k * level - noise_k / quality_k)+`
/// with the level chosen so active powers sum to the budget. Users whose
/// allocation would go non-positive are dropped and the level recomputed.
pub fn water_filling(
    qualities: &[f64],
    priorities: &[f64],
    noise_mw: &[f64],
    power_mw: f64,
) -> WaterFilling {
    let users = qualities.len();
    assert_eq!(priorities.len(), users);
    assert_eq!(noise_mw.len(), users);
    assert!(power_mw > 0.0, "power budget must be positive");
    assert!(
        qualities.iter().all(|&q| q > 0.0) && noise_mw.iter().all(|&s| s > 0.0),
        "channel qualities and noise powers must be positive"
    );
    let floor: Vec<f64> = (0..users).map(|k| noise_mw[k] / qualities[k]).collect();
    let mut active = vec![true; users];
    loop {
        let budget: f64 = power_mw
            + (0..users)
                .filter(|&k| active[k])
                .map(|k| floor[k])
                .sum::<f64>();
        let weight: f64 = (0..users).filter(|&k| active[k]).map(|k| priorities[k]).sum();
        let level = budget / weight;
        let dropped: Vec<usize> = (0..users)
            .filter(|&k| active[k] && priorities[k] * level - floor[k] <= 0.0)
            .collect();
        if dropped.is_empty() {
            let allocation = (0..users)
                .map(|k| {
                    if active[k] {
                        priorities[k] * level - floor[k]
                    } else {
                        0.0
                    }
                })
                .collect();
            return WaterFilling {
                allocation,
                active,
                level,
            };
        }
        for k in dropped {
            active[k] = false;
        }
        // A lone survivor always receives the full (positive) budget, so the
        // active set can never empty out.
        debug_assert!(active.iter().any(|&a| a));
    }
}

/// Ideal zero-forcing solution for a fixed layout: directions, qualities,
/// water-filled powers and the rate they achieve.
#[derive(Clone, Debug)]
pub struct ZfSolution {
    /// Effective channel the solution was computed for.
    pub effective: DMatrix<Complex64>,
    /// Precoder with column `k` scaled to carry exactly its allocated power.
    pub precoder: DMatrix<Complex64>,
    pub qualities: Vec<f64>,
    pub allocation: Vec<f64>,
    pub active: Vec<bool>,
    pub level: f64,
    /// Weighted sum rate of the ideal (pre-decomposition) solution.
    pub ideal_wsr: f64,
}

impl ZfSolution {
    pub fn solve(
        effective: DMatrix<Complex64>,
        noise_mw: &[f64],
        priorities: &[f64],
        power_mw: f64,
    ) -> Result<Self> {
        let users = effective.ncols();
        if noise_mw.len() != users || priorities.len() != users {
            return Err(Error::Config(
                "noise and priority vectors must have one entry per user".into(),
            ));
        }
        let (raw, qualities) = zero_forcing_directions(&effective)?;
        let filled = water_filling(&qualities, priorities, noise_mw, power_mw);
        let mut precoder = raw;
        for k in 0..users {
            // Raw column k has squared norm 1/quality_k; rescale to power p_k.
            let gain = (filled.allocation[k] * qualities[k]).sqrt();
            precoder.column_mut(k).apply(|v| *v *= gain);
        }
        let ideal_wsr = (0..users)
            .filter(|&k| filled.active[k])
            .map(|k| {
                priorities[k]
                    * (priorities[k] * qualities[k] * filled.level / noise_mw[k]).log2()
            })
            .sum();
        Ok(Self {
            effective,
            precoder,
            qualities,
            allocation: filled.allocation,
            active: filled.active,
            level: filled.level,
            ideal_wsr,
        })
    }
}

/// Ideal zero-forcing weighted sum rate of a layout; negative infinity for
/// layouts whose effective channel is rank-deficient, so a position search
/// can discard them without special-casing.
pub fn zf_wsr(layout: &PinchLayout, users: &UserSet, cfg: &SystemConfig) -> f64 {
    let Ok(effective) = effective_channel(layout, users, cfg) else {
        return f64::NEG_INFINITY;
    };
    match ZfSolution::solve(
        effective,
        &cfg.noise_powers_mw,
        &cfg.priorities,
        cfg.transmit_power_mw,
    ) {
        Ok(sol) => sol.ideal_wsr,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// SHADE over the feasible layouts with [`zf_wsr`] as fitness.
pub fn zf_position_search(
    cfg: &SystemConfig,
    users: &UserSet,
    shade_cfg: &ShadeConfig,
) -> Result<PinchLayout> {
    let bounds = cfg.feasible_box();
    let outcome = shade_maximize(
        |layout: &PinchLayout| zf_wsr(layout, users, cfg),
        shade_cfg,
        &bounds,
    )?;
    Ok(outcome.layout)
}

/// Analog/digital factorization of a target precoder.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub analog: DMatrix<Complex64>,
    pub digital: DMatrix<Complex64>,
    /// Frobenius distance between the target and the factor product, before
    /// the final power rescaling.
    pub residual: f64,
    /// Residual after every half-step; non-increasing.
    pub residual_trace: Vec<f64>,
    pub rounds: usize,
    /// Set when the chain count is below the target's maximum possible rank,
    /// making an exact factorization impossible in general.
    pub rank_limited: bool,
    /// Set for an all-zero target, where power rescaling is skipped.
    pub zero_power: bool,
}

/// Factors `target` into a unit-modulus analog stage and a digital stage by
/// alternating least squares: the digital step is the exact pseudo-inverse
/// solution, the analog step warm-started Riemannian CG, so the residual
/// never increases. Stops when the residual's relative change drops below
/// 1e-4 or after 50 rounds, then rescales the digital factor so the product
/// carries exactly the target's power.
pub fn decompose(
    target: &DMatrix<Complex64>,
    rf_chains: usize,
    rcg_cfg: &RcgConfig,
    seed: u64,
) -> Result<Decomposition> {
    const REL_TOL: f64 = 1e-4;
    const MAX_ROUNDS: usize = 50;
    let (rows, cols) = target.shape();
    if rf_chains == 0 {
        return Err(Error::Config("need at least one RF chain".into()));
    }
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Ok(Decomposition {
            analog: DMatrix::from_element(rows, rf_chains, Complex64::ONE),
            digital: DMatrix::zeros(rf_chains, cols),
            residual: 0.0,
            residual_trace: vec![0.0],
            rounds: 0,
            rank_limited: rf_chains < cols.min(rows),
            zero_power: true,
        });
    }

    // Start from the target's own phases, padding with random phases when
    // there are more chains than target columns.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analog = DMatrix::from_fn(rows, rf_chains, |r, c| {
        if c < cols {
            Complex64::from_polar(1.0, target[(r, c)].arg())
        } else {
            Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
        }
    });
    let mut digital = DMatrix::zeros(rf_chains, cols);
    let mut residual_trace = Vec::new();
    let mut rounds = 0;
    for _ in 0..MAX_ROUNDS {
        rounds += 1;
        let pinv = analog
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Singular(format!("analog factor pseudo-inverse failed: {e}")))?;
        digital = pinv * target;
        residual_trace.push((target - &analog * &digital).norm());

        let objective = QuadraticObjective::least_squares(target, &digital);
        let warm = CirclePoint::project(&analog);
        let run = rcg_maximize(&objective, &warm, rcg_cfg);
        analog = run.point.into_matrix();
        let residual = (target - &analog * &digital).norm();
        residual_trace.push(residual);

        let prev = residual_trace[residual_trace.len() - 2];
        if (prev - residual).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let residual = *residual_trace.last().unwrap();
    let product_norm = (&analog * &digital).norm();
    if product_norm == 0.0 {
        return Err(Error::Singular(
            "decomposition collapsed to a zero product".into(),
        ));
    }
    digital.scale_mut(target_norm / product_norm);
    Ok(Decomposition {
        analog,
        digital,
        residual,
        residual_trace,
        rounds,
        rank_limited: rf_chains < cols.min(rows),
        zero_power: false,
    })
}

/// End-to-end zero-forcing result.
#[derive(Clone, Debug)]
pub struct ZfPipelineOutcome {
    pub beamformers: BeamformerSet,
    pub layout: PinchLayout,
    /// Ideal solution at the chosen layout, before decomposition.
    pub solution: ZfSolution,
    /// Weighted sum rate actually achieved by the factored beamformers.
    pub realized_wsr: f64,
    pub decomposition: Decomposition,
}

/// Full pipeline: position search, ideal zero-forcing with water-filled
/// powers, factorization into the tri-hybrid structure, and evaluation of
/// the realized rate.
pub fn zf_pipeline(
    cfg: &SystemConfig,
    users: &UserSet,
    shade_cfg: &ShadeConfig,
    rcg_cfg: &RcgConfig,
    seed: u64,
) -> Result<ZfPipelineOutcome> {
    if users.len() != cfg.num_users {
        return Err(Error::Config(
            "user set size does not match the configuration".into(),
        ));
    }
    if cfg.num_users > cfg.num_waveguides {
        return Err(Error::RankDeficient(
            "zero-forcing requires at least as many waveguides as users".into(),
        ));
    }
    let layout = zf_position_search(cfg, users, shade_cfg)?;
    let effective = effective_channel(&layout, users, cfg)?;
    let solution = ZfSolution::solve(
        effective.clone(),
        &cfg.noise_powers_mw,
        &cfg.priorities,
        cfg.transmit_power_mw,
    )?;
    let decomposition = decompose(&solution.precoder, cfg.num_rf_chains, rcg_cfg, seed)?;
    let problem = FpProblem::new(
        effective,
        cfg.noise_powers_mw.clone(),
        cfg.priorities.clone(),
        cfg.transmit_power_mw,
    )?;
    let realized_wsr = problem.exact_wsr(&(&decomposition.analog * &decomposition.digital));
    let beamformers = BeamformerSet::new(
        decomposition.digital.clone(),
        decomposition.analog.clone(),
        pinching_beamformer(&layout, cfg)?,
    )?;
    Ok(ZfPipelineOutcome {
        beamformers,
        layout,
        solution,
        realized_wsr,
        decomposition,
    })
}
