//! Riemannian conjugate gradient over products of complex unit circles.
//!
//! The feasible set of an analog phase-shifter network is the torus
//! `{ W : |W_ij| = 1 }`. With the real trace inner product
//! `<A, B> = Re tr(A^H B)`, the tangent space at `W` consists of matrices with
//! no radial component, projection `Z - Re(Z .* conj(W)) .* W`, and the natural
//! retraction renormalizes each entry back onto its circle. The solver below
//! maximizes the concave-quadratic objectives arising from the beamforming
//! subproblems:
//!
//! `f(W) = 2 Re tr(A^H W) - tr(W^H B W Q) + offset`
//!
//! using Polak-Ribiere (non-negative restart variant) conjugate directions,
//! Armijo backtracking on the retracted arc, and vector transport by tangent
//! projection at the new point.
//!
//! A masked variant supports partially-connected networks: off-support entries
//! are structurally zero and never move.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed seed for the random-phase fallback of [`init_projected_stationary`],
/// keeping that degenerate path deterministic.
const FALLBACK_PHASE_SEED: u64 = 0x5eed_cafe;

/// A point on the unit-modulus torus: every entry has magnitude one.
#[derive(Clone, Debug)]
pub struct CirclePoint {
    w: DMatrix<Complex64>,
}

impl CirclePoint {
    /// Validates that all entries are unit modulus (tolerance 1e-12).
    pub fn new(w: DMatrix<Complex64>) -> Result<Self> {
        if w.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::Config(
                "circle point entries must have unit modulus".into(),
            ));
        }
        Ok(Self { w })
    }

    /// Entrywise projection `z -> z / |z|`; exact zeros map to `1 + 0j`
    /// (zero-phase convention).
    pub fn project(raw: &DMatrix<Complex64>) -> Self {
        let w = raw.map(normalize_entry);
        Self { w }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.w
    }
}

fn normalize_entry(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 || !r.is_finite() {
        Complex64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// A tangent vector anchored at its base point.
#[derive(Clone, Debug)]
pub struct TangentVector {
    z: DMatrix<Complex64>,
    base: CirclePoint,
}

impl TangentVector {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.z
    }

    pub fn base(&self) -> &CirclePoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.z.norm()
    }
}

/// Which algebraic form the objective was built from. The least-squares form
/// `-||T - W D||_F^2` is stored as a trace form with `B = I`,
/// `A = T D^H`, `Q = D D^H` and offset `-||T||_F^2`, so its value is the
/// negated squared residual and ascent means shrinking the residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveMode {
    TraceForm,
    LeastSquares,
}

/// Concave quadratic objective `2 Re tr(A^H W) - tr(W^H B W Q) + offset` with
/// `B`, `Q` Hermitian positive semidefinite.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    a: DMatrix<Complex64>,
    b: DMatrix<Complex64>,
    q: DMatrix<Complex64>,
    offset: f64,
    mode: ObjectiveMode,
}

impl QuadraticObjective {
    /// Builds the trace form; `b` and `q` are symmetrized and negative
    /// eigenvalues (numerical noise) floored at zero.
    pub fn trace_form(a: DMatrix<Complex64>, b: DMatrix<Complex64>, q: DMatrix<Complex64>) -> Self {
        assert_eq!(b.nrows(), b.ncols(), "B must be square");
        assert_eq!(q.nrows(), q.ncols(), "Q must be square");
        assert_eq!(a.nrows(), b.nrows(), "A rows must match B");
        assert_eq!(a.ncols(), q.nrows(), "A cols must match Q");
        Self {
            a,
            b: hermitian_psd_part(b),
            q: hermitian_psd_part(q),
            offset: 0.0,
            mode: ObjectiveMode::TraceForm,
        }
    }

    /// Builds `-||target - W digital||_F^2` as a trace form (see
    /// [`ObjectiveMode`]). The gradient is the negated least-squares gradient,
    /// so ascent conventions match the trace form.
    pub fn least_squares(target: &DMatrix<Complex64>, digital: &DMatrix<Complex64>) -> Self {
        assert_eq!(target.ncols(), digital.ncols(), "column counts must match");
        let a = target * digital.adjoint();
        let q = digital * digital.adjoint();
        let b = DMatrix::<Complex64>::identity(target.nrows(), target.nrows());
        Self {
            a,
            b,
            q: hermitian_psd_part(q),
            offset: -target.norm_squared(),
            mode: ObjectiveMode::LeastSquares,
        }
    }

    pub fn mode(&self) -> ObjectiveMode {
        self.mode
    }

    /// Shape of the variable this objective acts on.
    pub fn shape(&self) -> (usize, usize) {
        (self.a.nrows(), self.a.ncols())
    }

    /// Objective value at `w`.
    pub fn value(&self, w: &DMatrix<Complex64>) -> f64 {
        let linear = 2.0 * real_inner(&self.a, w);
        let bwq = &self.b * w * &self.q;
        let quad = real_inner(w, &bwq);
        linear - quad + self.offset
    }

    /// Euclidean (Wirtinger, `d/dW*`) gradient `A - B W Q`. Matches central
    /// finite differences of [`Self::value`] over the real and imaginary parts
    /// up to the conventional factor 2: `df/dRe = 2 Re(grad)`,
    /// `df/dIm = 2 Im(grad)`.
    pub fn euclid_grad(&self, w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.a - &self.b * w * &self.q
    }
}

/// Real part of the trace inner product `Re tr(a^H b)`.
pub fn real_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.dotc(b).re
}

/// Symmetrizes a nominally Hermitian matrix and floors negative eigenvalues at
/// zero, returning the nearest PSD matrix when rounding pushed it indefinite.
fn hermitian_psd_part(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let h = (&m + m.adjoint()).scale(0.5);
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return h;
    }
    let floored = DMatrix::from_diagonal(
        &eig.eigenvalues
            .map(|l| Complex64::new(l.max(0.0), 0.0)),
    );
    &eig.eigenvectors * floored * eig.eigenvectors.adjoint()
}

/// Orthogonal projection of an ambient gradient onto the tangent space at
/// `at`: removes the radial component entrywise.
pub fn project_tangent(grad: &DMatrix<Complex64>, at: &CirclePoint) -> TangentVector {
    TangentVector {
        z: project_tangent_raw(grad, at.matrix(), None),
        base: at.clone(),
    }
}

/// Vector transport: re-project the tangent vector at the new base point.
pub fn transport(v: &TangentVector, to: &CirclePoint) -> TangentVector {
    TangentVector {
        z: project_tangent_raw(v.matrix(), to.matrix(), None),
        base: to.clone(),
    }
}

/// Retraction `exp(j arg(W + step * D))`, implemented as entrywise
/// renormalization. An entry that lands exactly on zero keeps its previous
/// phase.
pub fn retract(at: &CirclePoint, step: f64, dir: &TangentVector) -> CirclePoint {
    CirclePoint {
        w: retract_raw(at.matrix(), step, dir.matrix(), None),
    }
}

fn project_tangent_raw(
    grad: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    mask: Option<&DMatrix<bool>>,
) -> DMatrix<Complex64> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        if let Some(m) = mask {
            if !m[(i, j)] {
                return Complex64::new(0.0, 0.0);
            }
        }
        let g = grad[(i, j)];
        let wi = w[(i, j)];
        g - wi * (g * wi.conj()).re
    })
}

fn retract_raw(
    w: &DMatrix<Complex64>,
    step: f64,
    dir: &DMatrix<Complex64>,
    mask: Option<&DMatrix<bool>>,
) -> DMatrix<Complex64> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        if let Some(m) = mask {
            if !m[(i, j)] {
                return Complex64::new(0.0, 0.0);
            }
        }
        let moved = w[(i, j)] + dir[(i, j)].scale(step);
        let r = moved.norm();
        if r == 0.0 {
            w[(i, j)] // tie-break: keep the previous phase
        } else {
            moved / r
        }
    })
}

/// Solver knobs. Defaults: 200 iterations, gradient-norm tolerance 1e-6,
/// Armijo slope 1e-4 with contraction 0.5 from unit step, at most 30
/// backtracks.
#[derive(Clone, Debug)]
pub struct RcgConfig {
    pub max_iters: usize,
    pub grad_norm_tol: f64,
    pub initial_step: f64,
    pub armijo_contraction: f64,
    pub armijo_slope_coeff: f64,
    pub max_backtracks: usize,
}

impl Default for RcgConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_norm_tol: 1e-6,
            initial_step: 1.0,
            armijo_contraction: 0.5,
            armijo_slope_coeff: 1e-4,
            max_backtracks: 30,
        }
    }
}

/// Outcome of a solver run.
#[derive(Clone, Debug)]
pub struct RcgResult {
    pub point: CirclePoint,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Iterations on which Armijo backtracking was exhausted and the solver
    /// fell back to a minimal gradient step (or stopped).
    pub line_search_failures: usize,
    /// Objective at the start and after each accepted step; non-decreasing.
    pub trace: Vec<f64>,
}

/// Maximizes `obj` over the full unit-modulus torus starting from `w0`.
/// The objective value sequence over accepted steps is non-decreasing.
pub fn rcg_maximize(obj: &QuadraticObjective, w0: &CirclePoint, cfg: &RcgConfig) -> RcgResult {
    let run = rcg_core(obj, w0.matrix().clone(), None, cfg);
    RcgResult {
        point: CirclePoint { w: run.w },
        objective: run.objective,
        iterations: run.iterations,
        grad_norm: run.grad_norm,
        line_search_failures: run.failures,
        trace: run.trace,
    }
}

/// Masked outcome: the point is a raw matrix with zeros off support.
#[derive(Clone, Debug)]
pub struct MaskedRcgResult {
    pub point: DMatrix<Complex64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub line_search_failures: usize,
    /// Objective at the start and after each accepted step; non-decreasing.
    pub trace: Vec<f64>,
}

/// Maximizes `obj` over the masked torus: entries where `mask` is true stay
/// unit modulus, the rest are pinned at zero. `w0` must already respect the
/// mask (off-support entries are zeroed, on-support renormalized).
pub fn rcg_maximize_masked(
    obj: &QuadraticObjective,
    w0: &DMatrix<Complex64>,
    mask: &DMatrix<bool>,
    cfg: &RcgConfig,
) -> MaskedRcgResult {
    assert_eq!(mask.shape(), w0.shape(), "mask must match the variable shape");
    let start = apply_mask(w0, mask);
    let run = rcg_core(obj, start, Some(mask), cfg);
    MaskedRcgResult {
        point: run.w,
        objective: run.objective,
        iterations: run.iterations,
        grad_norm: run.grad_norm,
        line_search_failures: run.failures,
        trace: run.trace,
    }
}

fn apply_mask(w: &DMatrix<Complex64>, mask: &DMatrix<bool>) -> DMatrix<Complex64> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        if mask[(i, j)] {
            normalize_entry(w[(i, j)])
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

struct RcgRun {
    w: DMatrix<Complex64>,
    objective: f64,
    iterations: usize,
    grad_norm: f64,
    failures: usize,
    trace: Vec<f64>,
}

fn rcg_core(
    obj: &QuadraticObjective,
    w0: DMatrix<Complex64>,
    mask: Option<&DMatrix<bool>>,
    cfg: &RcgConfig,
) -> RcgRun {
    let mut w = w0;
    let mut f = obj.value(&w);
    let mut grad = project_tangent_raw(&obj.euclid_grad(&w), &w, mask);
    let mut grad_norm_sq = grad.norm_squared();
    // Ascent: the initial search direction is the Riemannian gradient itself.
    let mut dir = grad.clone();
    let mut iterations = 0;
    let mut failures = 0;
    let mut trace = vec![f];

    while iterations < cfg.max_iters && grad_norm_sq.sqrt() > cfg.grad_norm_tol {
        let mut slope = real_inner(&grad, &dir);
        if slope <= 0.0 {
            // Conjugacy produced a non-ascent direction; restart on the gradient.
            dir = grad.clone();
            slope = grad_norm_sq;
        }

        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let w_try = retract_raw(&w, step, &dir, mask);
            let f_try = obj.value(&w_try);
            if f_try >= f + cfg.armijo_slope_coeff * step * slope {
                accepted = Some((w_try, f_try));
                break;
            }
            step *= cfg.armijo_contraction;
        }
        if accepted.is_none() {
            // Backtracking exhausted: take the smallest gradient step if it
            // does not decrease the objective, otherwise stop here.
            failures += 1;
            let min_step =
                cfg.initial_step * cfg.armijo_contraction.powi(cfg.max_backtracks as i32);
            let w_try = retract_raw(&w, min_step, &grad, mask);
            let f_try = obj.value(&w_try);
            if f_try >= f {
                accepted = Some((w_try, f_try));
            } else {
                break;
            }
        }
        let (w_new, f_new) = accepted.expect("accepted step");

        let grad_new = project_tangent_raw(&obj.euclid_grad(&w_new), &w_new, mask);
        let grad_new_norm_sq = grad_new.norm_squared();
        // Polak-Ribiere with non-negativity restart.
        let transported_grad = project_tangent_raw(&grad, &w_new, mask);
        let beta =
            (real_inner(&grad_new, &(&grad_new - transported_grad)) / grad_norm_sq).max(0.0);
        let transported_dir = project_tangent_raw(&dir, &w_new, mask);
        dir = &grad_new + transported_dir.scale(beta);

        w = w_new;
        f = f_new;
        grad = grad_new;
        grad_norm_sq = grad_new_norm_sq;
        iterations += 1;
        trace.push(f);
    }

    RcgRun {
        w,
        objective: f,
        iterations,
        grad_norm: grad_norm_sq.sqrt(),
        failures,
        trace,
    }
}

/// Phase projection of the unconstrained stationary point `B^-1 A Q^-1`.
///
/// Singular `B` or `Q` get a `1e-10` Tikhonov ridge; if inversion still fails
/// the phases fall back to a seeded random draw. A zero stationary point (for
/// example `A = 0`) projects to the all-ones matrix by the zero-phase
/// convention.
pub fn init_projected_stationary(obj: &QuadraticObjective) -> CirclePoint {
    let (rows, cols) = obj.shape();
    let b_inv = invert_with_ridge(&obj.b);
    let q_inv = invert_with_ridge(&obj.q);
    match (b_inv, q_inv) {
        (Some(bi), Some(qi)) => CirclePoint::project(&(bi * &obj.a * qi)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(FALLBACK_PHASE_SEED);
            let w = DMatrix::from_fn(rows, cols, |_, _| {
                Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
            });
            CirclePoint { w }
        }
    }
}

/// Masked variant of [`init_projected_stationary`].
pub fn init_projected_stationary_masked(
    obj: &QuadraticObjective,
    mask: &DMatrix<bool>,
) -> DMatrix<Complex64> {
    let full = init_projected_stationary(obj);
    apply_mask(full.matrix(), mask)
}

fn invert_with_ridge(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    if let Some(inv) = m.clone().try_inverse() {
        if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Some(inv);
        }
    }
    let ridged = m + DMatrix::<Complex64>::identity(m.nrows(), m.ncols()).scale(1e-10);
    ridged
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
}
