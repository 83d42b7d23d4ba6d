//! Fractional-programming core and the alternating optimizer built on it.
//!
//! The weighted sum rate is made tractable in two steps. First the hard power
//! constraint is relaxed: the per-user noise floor is replaced by
//! `(sigma_k^2 / P) * ||W_RF W_BB||_F^2`, which makes the objective invariant
//! to scaling the digital beamformer and lets every block update run
//! unconstrained; rescaling the digital beamformer to the power budget at the
//! end recovers a feasible point with exactly the same rates. Second, the
//! classic two-stage transform peels off the logarithm (one real auxiliary
//! per user, optimal at the relaxed SINR) and the ratio (one complex
//! multiplier per user), leaving a concave quadratic in the beamformers.
//!
//! Everything here is written against an *effective* channel matrix whose
//! column `k` is the channel user `k` sees at the input of the analog stage.
//! For a pinching array that is `W_PB^H H` (one coefficient per waveguide);
//! for a conventional array it is the raw channel itself. This keeps the
//! block updates reusable across the architectures compared in
//! [`crate::benchmarks`].

use crate::manifold::{
    init_projected_stationary, init_projected_stationary_masked, rcg_maximize,
    rcg_maximize_masked, CirclePoint, QuadraticObjective, RcgConfig,
};
use crate::model::{
    effective_channel, effective_gain, pinching_beamformer, BeamformerSet, PinchLayout,
    SystemConfig, UserSet,
};
use crate::shade::{shade_maximize_seeded, ShadeConfig};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Per-outer-iteration stride for deriving SHADE sub-seeds, so each pinching
/// block explores fresh randomness while the whole run stays reproducible.
const SUBSEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// A weighted-sum-rate instance over an effective channel.
///
/// Immutable while the transmit beamformers iterate; rebuild it after the
/// antenna layout (and hence the effective channel) moves.
#[derive(Clone, Debug)]
pub struct FpProblem {
    /// Effective channel, one column per user.
    channel: DMatrix<Complex64>,
    noise_mw: Vec<f64>,
    priorities: Vec<f64>,
    power_mw: f64,
}

impl FpProblem {
    pub fn new(
        channel: DMatrix<Complex64>,
        noise_mw: Vec<f64>,
        priorities: Vec<f64>,
        power_mw: f64,
    ) -> Result<Self> {
        let users = channel.ncols();
        if users == 0 || channel.nrows() == 0 {
            return Err(Error::Config("empty effective channel".into()));
        }
        if noise_mw.len() != users || priorities.len() != users {
            return Err(Error::Config(
                "noise and priority vectors must have one entry per user".into(),
            ));
        }
        if noise_mw.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise powers must be positive".into()));
        }
        if !(power_mw > 0.0) {
            return Err(Error::Config("power budget must be positive".into()));
        }
        Ok(Self {
            channel,
            noise_mw,
            priorities,
            power_mw,
        })
    }

    /// Builds the instance for a pinching array: effective channel
    /// `W_PB^H H`, noise, priorities and budget from the config.
    pub fn from_pass(cfg: &SystemConfig, users: &UserSet, layout: &PinchLayout) -> Result<Self> {
        Self::new(
            effective_channel(layout, users, cfg)?,
            cfg.noise_powers_mw.clone(),
            cfg.priorities.clone(),
            cfg.transmit_power_mw,
        )
    }

    pub fn channel(&self) -> &DMatrix<Complex64> {
        &self.channel
    }

    pub fn num_users(&self) -> usize {
        self.channel.ncols()
    }

    pub fn power_mw(&self) -> f64 {
        self.power_mw
    }

    /// `(k, i)` entry: effective channel of user `k` applied to stream `i`.
    fn coupling(&self, transmit: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        debug_assert_eq!(transmit.nrows(), self.channel.nrows());
        debug_assert_eq!(transmit.ncols(), self.num_users());
        self.channel.adjoint() * transmit
    }

    /// Power-relaxed SINR of each user. Invariant to scaling `transmit`; an
    /// all-zero beamformer maps to all-zero SINR by convention.
    pub fn relaxed_sinr(&self, transmit: &DMatrix<Complex64>) -> Vec<f64> {
        let coupling = self.coupling(transmit);
        let power = transmit.norm_squared();
        (0..self.num_users())
            .map(|k| {
                let signal = coupling[(k, k)].norm_sqr();
                let interference: f64 = (0..self.num_users())
                    .filter(|&i| i != k)
                    .map(|i| coupling[(k, i)].norm_sqr())
                    .sum();
                let denom = interference + self.noise_mw[k] / self.power_mw * power;
                if denom > 0.0 {
                    signal / denom
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Power-relaxed weighted sum rate. The log-stage auxiliary update is
    /// exactly [`Self::relaxed_sinr`]; at `||transmit||_F^2 = P` this equals
    /// the true weighted sum rate.
    pub fn relaxed_rate(&self, transmit: &DMatrix<Complex64>) -> f64 {
        self.relaxed_sinr(transmit)
            .iter()
            .zip(&self.priorities)
            .map(|(&g, &b)| b * (1.0 + g).log2())
            .sum()
    }

    /// True weighted sum rate (no power relaxation) of a transmit beamformer.
    pub fn exact_wsr(&self, transmit: &DMatrix<Complex64>) -> f64 {
        let coupling = self.coupling(transmit);
        (0..self.num_users())
            .map(|k| {
                let signal = coupling[(k, k)].norm_sqr();
                let interference: f64 = (0..self.num_users())
                    .filter(|&i| i != k)
                    .map(|i| coupling[(k, i)].norm_sqr())
                    .sum();
                self.priorities[k] * (1.0 + signal / (interference + self.noise_mw[k])).log2()
            })
            .sum()
    }

    /// Optimal ratio multipliers at the given log-stage auxiliaries: the
    /// matched-filter response over the *total* received power plus the
    /// relaxed noise. Zero transmit power maps to zero multipliers.
    pub fn ratio_multipliers(&self, transmit: &DMatrix<Complex64>, aux: &[f64]) -> Vec<Complex64> {
        assert_eq!(aux.len(), self.num_users());
        let coupling = self.coupling(transmit);
        let power = transmit.norm_squared();
        (0..self.num_users())
            .map(|k| {
                let total: f64 = (0..self.num_users())
                    .map(|i| coupling[(k, i)].norm_sqr())
                    .sum();
                let denom = total + self.noise_mw[k] / self.power_mw * power;
                if denom > 0.0 {
                    coupling[(k, k)] * ((self.priorities[k] * (1.0 + aux[k])).sqrt() / denom)
                } else {
                    Complex64::ZERO
                }
            })
            .collect()
    }

    /// Surrogate after peeling the logarithm only. Equals the relaxed rate
    /// when `aux` is the current relaxed SINR (tightness of the transform).
    pub fn dual_surrogate(&self, transmit: &DMatrix<Complex64>, aux: &[f64]) -> f64 {
        assert_eq!(aux.len(), self.num_users());
        let coupling = self.coupling(transmit);
        let power = transmit.norm_squared();
        (0..self.num_users())
            .map(|k| {
                let b = self.priorities[k];
                let total: f64 = (0..self.num_users())
                    .map(|i| coupling[(k, i)].norm_sqr())
                    .sum();
                let denom = total + self.noise_mw[k] / self.power_mw * power;
                let ratio = if denom > 0.0 {
                    coupling[(k, k)].norm_sqr() / denom
                } else {
                    0.0
                };
                b * ((1.0 + aux[k]).log2() - aux[k] + (1.0 + aux[k]) * ratio)
            })
            .sum()
    }

    /// Surrogate after peeling both the logarithm and the ratio. Equals
    /// [`Self::dual_surrogate`] when `mult` comes from
    /// [`Self::ratio_multipliers`] at the same state.
    pub fn quadratic_surrogate(
        &self,
        transmit: &DMatrix<Complex64>,
        aux: &[f64],
        mult: &[Complex64],
    ) -> f64 {
        assert_eq!(aux.len(), self.num_users());
        assert_eq!(mult.len(), self.num_users());
        let coupling = self.coupling(transmit);
        let power = transmit.norm_squared();
        (0..self.num_users())
            .map(|k| {
                let b = self.priorities[k];
                let weight = (b * (1.0 + aux[k])).sqrt();
                let total: f64 = (0..self.num_users())
                    .map(|i| coupling[(k, i)].norm_sqr())
                    .sum();
                let denom = total + self.noise_mw[k] / self.power_mw * power;
                b * ((1.0 + aux[k]).log2() - aux[k])
                    + 2.0 * weight * (mult[k].conj() * coupling[(k, k)]).re
                    - mult[k].norm_sqr() * denom
            })
            .sum()
    }

    /// Linear and quadratic factors of the surrogate seen by the beamformers:
    /// the surrogate's transmit-dependent part is
    /// `2 Re tr(A^H T) - tr(T^H B T)` with `T` the transmit beamformer.
    fn quadratic_factors(
        &self,
        aux: &[f64],
        mult: &[Complex64],
    ) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let dim = self.channel.nrows();
        let users = self.num_users();
        let mut linear = self.channel.clone();
        let mut weighted = self.channel.clone();
        let mut relaxed_noise = 0.0;
        for k in 0..users {
            let gain = (self.priorities[k] * (1.0 + aux[k])).sqrt();
            linear.column_mut(k).apply(|v| *v *= mult[k] * gain);
            weighted.column_mut(k).apply(|v| *v *= mult[k]);
            relaxed_noise += mult[k].norm_sqr() * self.noise_mw[k];
        }
        let mut quad = &weighted * weighted.adjoint();
        let ridge = Complex64::new(relaxed_noise / self.power_mw, 0.0);
        for d in 0..dim {
            quad[(d, d)] += ridge;
        }
        (linear, quad)
    }

    /// Closed-form digital block update. Solves the concave quadratic
    /// program exactly via its normal equations; if the system is singular
    /// even after a small ridge, the incumbent is kept.
    pub fn digital_update(
        &self,
        analog: &DMatrix<Complex64>,
        incumbent: &DMatrix<Complex64>,
        aux: &[f64],
        mult: &[Complex64],
    ) -> DMatrix<Complex64> {
        let (linear, quad) = self.quadratic_factors(aux, mult);
        let rhs = analog.adjoint() * linear;
        let gram = analog.adjoint() * quad * analog;
        if let Some(solved) = solve_hermitian(&gram, &rhs) {
            return solved;
        }
        let mut ridged = gram;
        for d in 0..ridged.nrows() {
            ridged[(d, d)] += Complex64::new(1e-12, 0.0);
        }
        match solve_hermitian(&ridged, &rhs) {
            Some(solved) => solved,
            None => incumbent.clone(),
        }
    }

    /// The analog block as a trace-form quadratic over unit-modulus entries.
    pub fn analog_objective(
        &self,
        digital: &DMatrix<Complex64>,
        aux: &[f64],
        mult: &[Complex64],
    ) -> QuadraticObjective {
        let (linear, quad) = self.quadratic_factors(aux, mult);
        QuadraticObjective::trace_form(linear * digital.adjoint(), quad, digital * digital.adjoint())
    }

    /// Analog block update: conjugate-gradient ascent on the unit-modulus
    /// manifold from the projected stationary initializer, guarded so the
    /// surrogate never regresses below the incumbent.
    pub fn analog_update(
        &self,
        incumbent: &DMatrix<Complex64>,
        digital: &DMatrix<Complex64>,
        aux: &[f64],
        mult: &[Complex64],
        rcg_cfg: &RcgConfig,
    ) -> DMatrix<Complex64> {
        let obj = self.analog_objective(digital, aux, mult);
        let start = init_projected_stationary(&obj);
        let run = rcg_maximize(&obj, &start, rcg_cfg);
        if run.objective >= obj.value(incumbent) {
            run.point.into_matrix()
        } else {
            incumbent.clone()
        }
    }

    /// [`Self::analog_update`] for a partially connected analog stage:
    /// entries on the support stay unit modulus, the rest are pinned at zero.
    pub fn analog_update_masked(
        &self,
        incumbent: &DMatrix<Complex64>,
        digital: &DMatrix<Complex64>,
        aux: &[f64],
        mult: &[Complex64],
        rcg_cfg: &RcgConfig,
        mask: &DMatrix<bool>,
    ) -> DMatrix<Complex64> {
        let obj = self.analog_objective(digital, aux, mult);
        let start = init_projected_stationary_masked(&obj, mask);
        let run = rcg_maximize_masked(&obj, &start, mask, rcg_cfg);
        if run.objective >= obj.value(incumbent) {
            run.point
        } else {
            incumbent.clone()
        }
    }
}

fn solve_hermitian(gram: &DMatrix<Complex64>, rhs: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let chol = gram.clone().cholesky()?;
    let solved = chol.solve(rhs);
    if solved.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(solved)
    } else {
        None
    }
}

/// Layout-dependent part of the quadratic surrogate for a pinching array:
/// `2 Re tr(Gbar T C) - ||Gbar T||_F^2`, where row `k` of `Gbar` is the
/// conjugated ratio multiplier times the effective gain row of user `k`, and
/// `C` holds the priority/auxiliary weights. The relaxed-noise term does not
/// depend on the layout and is omitted.
pub fn pinching_objective(
    layout: &PinchLayout,
    users: &UserSet,
    cfg: &SystemConfig,
    transmit: &DMatrix<Complex64>,
    aux: &[f64],
    mult: &[Complex64],
) -> Result<f64> {
    let waveguides = cfg.num_waveguides;
    let k_users = users.len();
    if transmit.nrows() != waveguides || transmit.ncols() != k_users {
        return Err(Error::Config(
            "transmit beamformer shape does not match waveguides x users".into(),
        ));
    }
    if aux.len() != k_users || mult.len() != k_users {
        return Err(Error::Config(
            "auxiliary vectors must have one entry per user".into(),
        ));
    }
    let mut rows = DMatrix::zeros(k_users, waveguides);
    for k in 0..k_users {
        for m in 0..waveguides {
            rows[(k, m)] = mult[k].conj() * effective_gain(layout, users, cfg, k, m);
        }
    }
    let mixed = rows * transmit;
    let mut value = 0.0;
    for k in 0..k_users {
        let weight = (cfg.priorities[k] * (1.0 + aux[k])).sqrt();
        value += 2.0 * weight * mixed[(k, k)].re;
    }
    Ok(value - mixed.norm_squared())
}

/// Pinching block update: SHADE over candidate layouts with the incumbent
/// injected into the initial population.
///
/// Each candidate is scored by the relaxed rate after re-anchoring the
/// auxiliaries at the candidate's channel and refreshing the digital stage
/// once in closed form, with the analog stage held fixed. Scoring the
/// anchored quadratic surrogate instead looks natural but cannot work: its
/// multipliers grow with the inverse residual interference, so as soon as
/// the digital stage has nulled interference for the incumbent layout the
/// surrogate falls off a cliff at every other layout. Measured on converged
/// desk-scale states, the incumbent is then a strict coordinate-wise
/// maximum at 0.2 mm resolution and no search budget can move it, while
/// this fitness routinely finds layouts worth one or more extra bits.
///
/// Monotonicity: at the incumbent layout the refreshed digital stage weakly
/// improves the anchored surrogate, which lower-bounds the relaxed rate
/// with equality at the anchor, so the injected incumbent's score is at
/// least the current relaxed rate and the selected layout never regresses.
pub fn pinching_update(
    incumbent: &PinchLayout,
    users: &UserSet,
    cfg: &SystemConfig,
    analog: &DMatrix<Complex64>,
    digital: &DMatrix<Complex64>,
    shade_cfg: &ShadeConfig,
) -> Result<PinchLayout> {
    let bounds = cfg.feasible_box();
    let transmit = analog * digital;
    let fitness = position_fitness(users, cfg, analog, digital, &transmit);
    let outcome =
        shade_maximize_seeded(&fitness, shade_cfg, &bounds, std::slice::from_ref(incumbent))?;
    if outcome.fitness >= fitness(incumbent) {
        Ok(outcome.layout)
    } else {
        Ok(incumbent.clone())
    }
}

/// Pinching block update by cyclic per-antenna grid search on the same
/// fitness as [`pinching_update`]: the classical baseline alternative to the
/// evolutionary stage. The scan starts from the incumbent and moves only on
/// strict improvement, so the selected layout never scores worse.
pub fn pinching_update_grid(
    incumbent: &PinchLayout,
    users: &UserSet,
    cfg: &SystemConfig,
    analog: &DMatrix<Complex64>,
    digital: &DMatrix<Complex64>,
    grid_step: f64,
) -> Result<PinchLayout> {
    let bounds = cfg.feasible_box();
    let transmit = analog * digital;
    let fitness = position_fitness(users, cfg, analog, digital, &transmit);
    let outcome =
        crate::benchmarks::grid_search_positions(incumbent, &bounds, &fitness, grid_step);
    if outcome.objective >= fitness(incumbent) {
        Ok(outcome.layout)
    } else {
        Ok(incumbent.clone())
    }
}

/// Score of a candidate layout: the relaxed rate after re-anchoring the
/// auxiliaries at the candidate's channel and one closed-form digital refresh
/// at the fixed analog beamformer (see [`pinching_update`] for why the
/// anchored surrogate itself is not usable here).
fn position_fitness<'a>(
    users: &'a UserSet,
    cfg: &'a SystemConfig,
    analog: &'a DMatrix<Complex64>,
    digital: &'a DMatrix<Complex64>,
    transmit: &'a DMatrix<Complex64>,
) -> impl Fn(&PinchLayout) -> f64 + Sync + 'a {
    move |layout: &PinchLayout| {
        let Ok(problem) = FpProblem::from_pass(cfg, users, layout) else {
            return f64::NEG_INFINITY;
        };
        let aux = problem.relaxed_sinr(transmit);
        let mult = problem.ratio_multipliers(transmit, &aux);
        let refreshed = problem.digital_update(analog, digital, &aux, &mult);
        problem.relaxed_rate(&(analog * &refreshed))
    }
}

/// How the alternating optimizer treats the antenna layout.
#[derive(Clone, Debug, Default)]
pub enum PinchingRule {
    /// SHADE with population and budget derived from the system size.
    #[default]
    Auto,
    /// Keep the initial layout fixed; optimize transmit beamformers only.
    Frozen,
    /// SHADE with explicit settings (its seed is still varied per outer
    /// iteration to decorrelate successive searches).
    Custom(ShadeConfig),
    /// Cyclic per-antenna grid search at this resolution in meters, the
    /// classical deterministic baseline for the position stage.
    Grid { step: f64 },
}

/// Knobs for [`optimize`].
#[derive(Clone, Debug)]
pub struct AoConfig {
    /// Outer-iteration cap.
    pub max_outer: usize,
    /// Stop when the relaxed rate changes by less than this relative amount.
    pub rel_tol: f64,
    pub rcg: RcgConfig,
    pub pinching: PinchingRule,
    /// Seed for the initial beamformers / layout and the SHADE sub-streams.
    pub seed: u64,
    /// Starting layout; sampled uniformly from the feasible set when absent.
    pub init_layout: Option<PinchLayout>,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            max_outer: 20,
            rel_tol: 1e-4,
            rcg: RcgConfig::default(),
            pinching: PinchingRule::Auto,
            seed: 0,
            init_layout: None,
        }
    }
}

/// Result of a full alternating-optimization run.
#[derive(Clone, Debug)]
pub struct AoOutcome {
    pub beamformers: BeamformerSet,
    pub layout: PinchLayout,
    /// Relaxed weighted sum rate after each outer iteration; non-decreasing.
    pub trace: Vec<f64>,
    /// Outer iteration (1-based) at which the relative-change test fired.
    pub converged_at: Option<usize>,
    /// True weighted sum rate of the returned (power-feasible) beamformers.
    pub wsr: f64,
}

/// Digital and analog beamformers between block updates.
#[derive(Clone)]
pub(crate) struct TransmitState {
    pub(crate) digital: DMatrix<Complex64>,
    pub(crate) analog: DMatrix<Complex64>,
}

impl TransmitState {
    pub(crate) fn rate(&self, problem: &FpProblem) -> f64 {
        problem.relaxed_rate(&(&self.analog * &self.digital))
    }
}

/// One anchored cycle: refresh the auxiliaries at the current transmit
/// beamformer, then the closed-form digital update and the guarded manifold
/// analog update. Weakly increases the relaxed rate.
fn transmit_cycle(problem: &FpProblem, s: &TransmitState, rcg: &RcgConfig) -> TransmitState {
    let transmit = &s.analog * &s.digital;
    let aux = problem.relaxed_sinr(&transmit);
    let mult = problem.ratio_multipliers(&transmit, &aux);
    let digital = problem.digital_update(&s.analog, &s.digital, &aux, &mult);
    let analog = problem.analog_update(&s.analog, &digital, &aux, &mult, rcg);
    TransmitState { digital, analog }
}

/// Largest extrapolation factor for the accelerated fixed-point step.
const EXTRAPOLATION_CAP: f64 = 100.0;

/// Guarded quadratic extrapolation of a cycle fixed-point iteration: two
/// plain cycles, a Steffensen-type jump along the observed step direction,
/// one stabilizing cycle, and a fallback to the unaccelerated result if the
/// jump did not help. Never decreases the relaxed rate relative to two plain
/// cycles, so monotonicity is preserved. `fix_analog` restores the analog
/// factor's feasible set after the linear extrapolation (unit modulus here;
/// masked or constant for the benchmark architectures).
///
/// Plain alternation of the digital and analog blocks contracts with a
/// spectral radius close to one here: measured on desk-scale instances, each
/// cycle gains only ~1e-6 in the anchored surrogate while thousands of
/// cycles still add whole bits to the relaxed rate, and the per-cycle step
/// direction has cosine 1.0000 with its predecessor. That coherent creep is
/// exactly the regime where this acceleration pays off.
fn super_step_with(
    problem: &FpProblem,
    s0: &TransmitState,
    cycle: &dyn Fn(&TransmitState) -> TransmitState,
    fix_analog: &dyn Fn(&DMatrix<Complex64>) -> DMatrix<Complex64>,
) -> TransmitState {
    let s1 = cycle(s0);
    let s2 = cycle(&s1);
    let r_d = &s1.digital - &s0.digital;
    let r_a = &s1.analog - &s0.analog;
    let v_d = &s2.digital - &s1.digital - &r_d;
    let v_a = &s2.analog - &s1.analog - &r_a;
    let r_norm = (r_d.norm_squared() + r_a.norm_squared()).sqrt();
    let v_norm = (v_d.norm_squared() + v_a.norm_squared()).sqrt();
    if v_norm <= 1e-300 || r_norm <= 1e-300 {
        return s2;
    }
    let alpha = -(r_norm / v_norm).clamp(1.0, EXTRAPOLATION_CAP);
    let digital =
        &s0.digital - &r_d * Complex64::from(2.0 * alpha) + &v_d * Complex64::from(alpha * alpha);
    let analog_raw =
        &s0.analog - &r_a * Complex64::from(2.0 * alpha) + &v_a * Complex64::from(alpha * alpha);
    let s3 = cycle(&TransmitState {
        digital,
        analog: fix_analog(&analog_raw),
    });
    if s3.rate(problem) >= s2.rate(problem) {
        s3
    } else {
        s2
    }
}

/// Relative tolerance at which the inner transmit solve stops; one decade
/// tighter than the default outer tolerance so the outer stopping rule is
/// not triggered by leftover inner drift.
const TRANSMIT_SOLVE_TOL: f64 = 1e-6;
/// Cap on accelerated steps per outer iteration (three cycles each).
const TRANSMIT_SOLVE_MAX_STEPS: usize = 300;

/// Iterates accelerated cycles until the relaxed rate stalls, returning the
/// solved state. This is the per-outer-iteration transmit-stage solve,
/// shared by the tri-hybrid optimizer and the benchmark architectures.
pub(crate) fn transmit_solve_with(
    problem: &FpProblem,
    mut s: TransmitState,
    cycle: &dyn Fn(&TransmitState) -> TransmitState,
    fix_analog: &dyn Fn(&DMatrix<Complex64>) -> DMatrix<Complex64>,
) -> TransmitState {
    let mut prev = s.rate(problem);
    for _ in 0..TRANSMIT_SOLVE_MAX_STEPS {
        s = super_step_with(problem, &s, cycle, fix_analog);
        let r = s.rate(problem);
        if (r - prev).abs() <= TRANSMIT_SOLVE_TOL * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        prev = r;
    }
    s
}

/// Transmit solve for the fully connected architecture: unit-modulus analog
/// factor, guarded manifold analog block.
fn transmit_solve(problem: &FpProblem, s: TransmitState, rcg: &RcgConfig) -> TransmitState {
    transmit_solve_with(
        problem,
        s,
        &|s| transmit_cycle(problem, s, rcg),
        &|raw| CirclePoint::project(raw).into_matrix(),
    )
}

/// Alternating optimizer for the tri-hybrid architecture: auxiliaries, then
/// the pinching block, then the digital and analog blocks, each weakly
/// increasing the surrogate, so the relaxed rate trace is non-decreasing.
/// The digital beamformer is rescaled to the exact power budget on the way
/// out, which leaves every user's SINR unchanged.
pub fn optimize(cfg: &SystemConfig, users: &UserSet, opts: &AoConfig) -> Result<AoOutcome> {
    if users.len() != cfg.num_users {
        return Err(Error::Config(
            "user set size does not match the configuration".into(),
        ));
    }
    let bounds = cfg.feasible_box();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut layout = match &opts.init_layout {
        Some(l) => {
            if !l.is_feasible(&bounds) {
                return Err(Error::InfeasibleLayout(
                    "initial layout violates the feasible box".into(),
                ));
            }
            l.clone()
        }
        None => bounds.sample(&mut rng),
    };
    let mut digital = standard_complex(cfg.num_rf_chains, cfg.num_users, &mut rng);
    let mut problem = FpProblem::from_pass(cfg, users, &layout)?;

    // Initialize the analog beamformer from the projected stationary point of
    // its subproblem, anchored at an all-ones placeholder. The placeholder
    // itself must never feed the digital update: its identical columns span a
    // rank-one transmit space, which would waste the whole first iteration.
    let mut analog = {
        let placeholder =
            DMatrix::from_element(cfg.num_waveguides, cfg.num_rf_chains, Complex64::ONE);
        let transmit = &placeholder * &digital;
        let aux = problem.relaxed_sinr(&transmit);
        let mult = problem.ratio_multipliers(&transmit, &aux);
        init_projected_stationary(&problem.analog_objective(&digital, &aux, &mult)).into_matrix()
    };
    let mut trace = Vec::new();
    let mut converged_at = None;
    for outer in 1..=opts.max_outer.max(1) {
        // Positions move first within each round, scored at the incoming
        // transmit state; the digital and analog stages are then re-solved
        // at the chosen layout.
        match &opts.pinching {
            PinchingRule::Frozen => {}
            PinchingRule::Grid { step } => {
                layout = pinching_update_grid(&layout, users, cfg, &analog, &digital, *step)?;
                problem = FpProblem::from_pass(cfg, users, &layout)?;
            }
            rule => {
                let mut shade_cfg = match rule {
                    PinchingRule::Custom(c) => c.clone(),
                    _ => ShadeConfig::for_system(cfg, opts.seed),
                };
                shade_cfg.seed = shade_cfg
                    .seed
                    .wrapping_add((outer as u64).wrapping_mul(SUBSEED_STRIDE));
                layout = pinching_update(&layout, users, cfg, &analog, &digital, &shade_cfg)?;
                problem = FpProblem::from_pass(cfg, users, &layout)?;
            }
        }
        let solved = transmit_solve(&problem, TransmitState { digital, analog }, &opts.rcg);
        digital = solved.digital;
        analog = solved.analog;
        let rate = problem.relaxed_rate(&(&analog * &digital));
        if !rate.is_finite() {
            return Err(Error::NonFinite(format!(
                "relaxed rate became non-finite at outer iteration {outer}"
            )));
        }
        if let Some(&prev) = trace.last() {
            trace.push(rate);
            if (rate - prev).abs() <= opts.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged_at = Some(outer);
                break;
            }
        } else {
            trace.push(rate);
        }
    }

    let norm = (&analog * &digital).norm();
    if norm <= 0.0 {
        return Err(Error::NonFinite(
            "optimizer converged to an all-zero transmit beamformer".into(),
        ));
    }
    digital.scale_mut(problem.power_mw().sqrt() / norm);
    let wsr = problem.exact_wsr(&(&analog * &digital));
    let beamformers = BeamformerSet::new(digital, analog, pinching_beamformer(&layout, cfg)?)?;
    Ok(AoOutcome {
        beamformers,
        layout,
        trace,
        converged_at,
        wsr,
    })
}

/// Matrix with independent standard complex Gaussian entries.
fn standard_complex(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<Complex64> {
    let scale = 0.5_f64.sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    })
}
