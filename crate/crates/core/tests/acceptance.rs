//! Acceptance gate, part 1 of 2: library-level criteria.
//!
//! Each test checks one numbered acceptance criterion and prints a single
//! `[acceptance] criterion N (...): PASS/FAIL` line (run with
//! `--nocapture` to see the lines and the measured margins; the libtest
//! per-test lines carry the same pass/fail information either way).
//! Criteria 12 and 13 exercise the command-line harness and live in that
//! crate's acceptance suite.
//!
//! Trend criteria (1, 2, 9, 10, 11) share one fixture: twenty paired random
//! scenarios at the desk scale (M = N = 4, K = 2), solved by every method.
//! The fixture is deterministic, so the asserted margins reproduce exactly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use pass_thb::benchmarks::{anchored_position_objective, mimo_optimize, sc_pass_optimize};
use pass_thb::fp::{optimize, AoConfig, AoOutcome, FpProblem};
use pass_thb::manifold::{
    project_tangent, rcg_maximize, retract, CirclePoint, QuadraticObjective, RcgConfig,
};
use pass_thb::model::{
    energy_efficiency, ComponentCounts, ComponentPowers, FeasibleBox, PinchLayout, SystemConfig,
    SystemParams, UserSet,
};
use pass_thb::shade::{shade_maximize, ShadeConfig};
use pass_thb::zf::{water_filling, zf_beamformer, zf_pipeline};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

// ---------------------------------------------------------------------------
// Pinned tolerances and scenario constants.

/// Paired scenarios per trend criterion.
const SEEDS: u64 = 20;
/// User-placement seeds are offset so they never collide with solver seeds.
const USER_SEED_BASE: u64 = 1000;
/// Absolute slack for the "objective never decreases" checks.
const MONOTONE_ABS_SLACK: f64 = 1e-8;
/// Every run must converge by this outer iteration (relative tolerance 1e-4).
const CONVERGENCE_OUTER_CAP: usize = 10;
/// Median first-iteration fraction of the final objective.
const FIRST_ITER_MEDIAN_MIN: f64 = 0.90;
/// Relative tolerance for the power-rescaling identity.
const SCALING_REL_TOL: f64 = 1e-9;
/// Relative tolerance for the surrogate tightness identities.
const IDENTITY_REL_TOL: f64 = 1e-9;
/// Unit-modulus deviation allowed after retraction.
const UNIT_MODULUS_TOL: f64 = 1e-12;
/// Allowed radial component of a projected tangent vector.
const TANGENCY_TOL: f64 = 1e-10;
/// Relative mismatch allowed between analytic and finite-difference gradients.
const GRAD_FD_REL_TOL: f64 = 1e-5;
/// Absolute guard for near-zero gradient entries in the same comparison.
const GRAD_FD_ABS_TOL: f64 = 1e-8;
/// Objective gap allowed between the closed-form digital update and a
/// generic numerical maximizer of the same concave quadratic.
const DIGITAL_GAP_ABS_TOL: f64 = 1e-6;
/// Off-diagonal leakage allowed for the zero-forcing precoder.
const ZF_RESIDUAL_TOL: f64 = 1e-10;
/// Water-filling budget and complementary-slackness tolerance.
const WF_KKT_TOL: f64 = 1e-12;
/// Allowed gap to the simplex-grid brute-force allocation (absolute rate).
const WF_BRUTE_ABS_TOL: f64 = 1e-3;
/// The evolutionary search must reach the exhaustive 5 mm lattice optimum
/// of the two-antenna toy up to this relative slack.
const TOY_SHADE_REL_SLACK: f64 = 0.01;
/// 1-D concave placement must locate the optimum within this many meters.
const CONCAVE_POSITION_TOL: f64 = 0.01;

fn desk_cfg(num_rf_chains: usize) -> SystemConfig {
    SystemConfig::new(SystemParams {
        num_rf_chains,
        ..SystemParams::default()
    })
    .expect("desk-scale parameters are valid")
}

/// Two waveguides, one antenna each, two users: the smallest system whose
/// position landscape is already severely multimodal.
fn toy_cfg() -> SystemConfig {
    SystemConfig::new(SystemParams {
        num_waveguides: 2,
        pas_per_waveguide: 1,
        num_users: 2,
        num_rf_chains: 2,
        ..SystemParams::default()
    })
    .expect("toy parameters are valid")
}

/// Budget at which the evolutionary search reliably clears the exhaustive
/// lattice bar on the toy (worst case over twenty seeds sits above it).
fn toy_shade_cfg(seed: u64) -> ShadeConfig {
    ShadeConfig {
        population_size: 80,
        pbest_fraction: 0.2,
        max_generations: 400,
        memory_size: 10,
        seed,
        force_crossover_coordinate: false,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 0 {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    } else {
        sorted[n / 2]
    }
}

fn standard_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * 0.5_f64.sqrt()
    })
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let r = standard_complex(n, n, rng);
    r.adjoint() * &r
}

/// Runs one criterion body and prints its verdict line. The body returns a
/// human-readable summary of the measured margins; any assertion failure is
/// reported as FAIL before the panic is re-raised for libtest.
fn criterion(number: u32, name: &str, body: impl FnOnce() -> String) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(detail) => println!("[acceptance] criterion {number} ({name}): PASS — {detail}"),
        Err(cause) => {
            println!("[acceptance] criterion {number} ({name}): FAIL");
            resume_unwind(cause);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared fixture: twenty paired desk-scale scenarios solved by every method.

struct DeskRuns {
    /// Full-optimizer outcomes indexed by `num_rf_chains - 1`, then seed.
    fp: Vec<Vec<AoOutcome>>,
    /// Realized rate of the factored zero-forcing pipeline (two RF chains).
    zf_realized: Vec<f64>,
    sc_wsr: Vec<f64>,
    mimo_wsr: Vec<f64>,
}

static RUNS: OnceLock<DeskRuns> = OnceLock::new();

fn runs() -> &'static DeskRuns {
    RUNS.get_or_init(|| {
        let fp = (1..=4)
            .map(|n_rf| {
                let cfg = desk_cfg(n_rf);
                (0..SEEDS)
                    .map(|s| {
                        let users = UserSet::sample(&cfg, USER_SEED_BASE + s);
                        optimize(
                            &cfg,
                            &users,
                            &AoConfig {
                                seed: s,
                                ..AoConfig::default()
                            },
                        )
                        .expect("full optimizer run")
                    })
                    .collect()
            })
            .collect();
        let cfg = desk_cfg(2);
        let mut zf_realized = Vec::new();
        let mut sc_wsr = Vec::new();
        let mut mimo_wsr = Vec::new();
        for s in 0..SEEDS {
            let users = UserSet::sample(&cfg, USER_SEED_BASE + s);
            zf_realized.push(
                zf_pipeline(
                    &cfg,
                    &users,
                    &ShadeConfig::for_system(&cfg, s),
                    &RcgConfig::default(),
                    s,
                )
                .expect("zero-forcing pipeline run")
                .realized_wsr,
            );
            let ao = AoConfig {
                seed: s,
                ..AoConfig::default()
            };
            sc_wsr.push(sc_pass_optimize(&cfg, &users, &ao).expect("sub-connected run").wsr);
            mimo_wsr.push(mimo_optimize(&cfg, &users, &ao).expect("massive-MIMO run").wsr);
        }
        DeskRuns {
            fp,
            zf_realized,
            sc_wsr,
            mimo_wsr,
        }
    })
}

// ---------------------------------------------------------------------------
// Criteria.

#[test]
fn criterion_01_monotone_convergent_ao() {
    criterion(1, "monotone alternating optimization", || {
        let runs = runs();
        let mut worst = 0usize;
        let mut count = 0usize;
        for per_rf in &runs.fp {
            for out in per_rf {
                count += 1;
                for w in out.trace.windows(2) {
                    assert!(
                        w[1] >= w[0] - MONOTONE_ABS_SLACK,
                        "objective regressed from {} to {}",
                        w[0],
                        w[1]
                    );
                }
                let at = out
                    .converged_at
                    .expect("run hit the outer-iteration cap without converging");
                assert!(
                    at <= CONVERGENCE_OUTER_CAP,
                    "converged only at outer iteration {at}"
                );
                worst = worst.max(at);
            }
        }
        format!(
            "{count} runs monotone within {MONOTONE_ABS_SLACK:.0e}; \
             slowest convergence at outer iteration {worst} (cap {CONVERGENCE_OUTER_CAP})"
        )
    });
}

#[test]
fn criterion_02_fast_first_iteration() {
    criterion(2, "fast first-iteration gain", || {
        let ratios: Vec<f64> = runs().fp[1]
            .iter()
            .map(|out| out.trace[0] / out.trace.last().expect("non-empty trace"))
            .collect();
        let med = median(&ratios);
        assert!(
            med >= FIRST_ITER_MEDIAN_MIN,
            "median first-iteration fraction {med:.4} below {FIRST_ITER_MEDIAN_MIN}"
        );
        format!(
            "median first-iteration fraction {med:.4} (floor {FIRST_ITER_MEDIAN_MIN}), \
             worst single seed {:.4}",
            ratios.iter().cloned().fold(f64::INFINITY, f64::min)
        )
    });
}

#[test]
fn criterion_03_power_rescaling_identity() {
    criterion(3, "power-rescaling identity", || {
        let cfg = desk_cfg(2);
        let bounds = cfg.feasible_box();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut worst = 0.0f64;
        for i in 0..100 {
            let users = UserSet::sample(&cfg, 2000 + i);
            let layout = bounds.sample(&mut rng);
            let problem = FpProblem::from_pass(&cfg, &users, &layout).expect("valid problem");
            let t = standard_complex(cfg.num_waveguides, cfg.num_users, &mut rng);
            let scaled = &t * Complex64::from(problem.power_mw().sqrt() / t.norm());
            let relaxed = problem.relaxed_rate(&t);
            let exact = problem.exact_wsr(&scaled);
            let rel = (relaxed - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
            assert!(
                rel <= SCALING_REL_TOL,
                "relaxed rate {relaxed} != rescaled exact rate {exact} (rel {rel:.2e})"
            );
            worst = worst.max(rel);
        }
        format!("100 random states, worst relative gap {worst:.2e} (tol {SCALING_REL_TOL:.0e})")
    });
}

#[test]
fn criterion_04_surrogate_tightness() {
    criterion(4, "surrogate tightness after each update", || {
        let cfg = desk_cfg(2);
        let bounds = cfg.feasible_box();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut worst = 0.0f64;
        for i in 0..20 {
            let users = UserSet::sample(&cfg, 3000 + i);
            let layout = bounds.sample(&mut rng);
            let problem = FpProblem::from_pass(&cfg, &users, &layout).expect("valid problem");
            let t = standard_complex(cfg.num_waveguides, cfg.num_users, &mut rng);
            let rate = problem.relaxed_rate(&t);
            let aux = problem.relaxed_sinr(&t);
            let dual = problem.dual_surrogate(&t, &aux);
            let rel_dual = (dual - rate).abs() / rate.abs().max(f64::MIN_POSITIVE);
            assert!(
                rel_dual <= IDENTITY_REL_TOL,
                "dual surrogate {dual} != rate {rate} after the SINR update"
            );
            let mult = problem.ratio_multipliers(&t, &aux);
            let quad = problem.quadratic_surrogate(&t, &aux, &mult);
            let rel_quad = (quad - dual).abs() / dual.abs().max(f64::MIN_POSITIVE);
            assert!(
                rel_quad <= IDENTITY_REL_TOL,
                "quadratic surrogate {quad} != dual surrogate {dual} after the ratio update"
            );
            worst = worst.max(rel_dual).max(rel_quad);
        }
        format!("20 random states, worst relative gap {worst:.2e} (tol {IDENTITY_REL_TOL:.0e})")
    });
}

#[test]
fn criterion_05_manifold_suite() {
    criterion(5, "unit-modulus manifold machinery", || {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let mut worst_fd = 0.0f64;
        for _ in 0..20 {
            let obj = QuadraticObjective::trace_form(
                standard_complex(3, 2, &mut rng),
                random_psd(3, &mut rng),
                random_psd(2, &mut rng),
            );
            let w = CirclePoint::project(&standard_complex(3, 2, &mut rng));

            // Projected directions are tangent: no radial component.
            let dir = project_tangent(&standard_complex(3, 2, &mut rng), &w);
            for (d, wi) in dir.matrix().iter().zip(w.matrix().iter()) {
                assert!(
                    (d * wi.conj()).re.abs() <= TANGENCY_TOL,
                    "tangent vector has a radial component"
                );
            }

            // Retraction lands exactly on the torus, for any step size.
            let stepped = retract(&w, rng.gen_range(0.0..5.0), &dir);
            for z in stepped.matrix().iter() {
                assert!(
                    (z.norm() - 1.0).abs() <= UNIT_MODULUS_TOL,
                    "retraction left the unit-modulus torus"
                );
            }

            // Analytic Euclidean gradient against central finite differences.
            let grad = obj.euclid_grad(w.matrix());
            let h = 1e-6;
            for r in 0..3 {
                for c in 0..2 {
                    let probe = |dre: f64, dim: f64| {
                        let mut m = w.matrix().clone();
                        m[(r, c)] += Complex64::new(dre, dim);
                        obj.value(&m)
                    };
                    let dre = (probe(h, 0.0) - probe(-h, 0.0)) / (2.0 * h);
                    let dim = (probe(0.0, h) - probe(0.0, -h)) / (2.0 * h);
                    let fd = Complex64::new(dre, dim) / 2.0;
                    let g = grad[(r, c)];
                    let err = (g - fd).norm();
                    let rel = err / fd.norm().max(GRAD_FD_ABS_TOL);
                    assert!(
                        rel <= GRAD_FD_REL_TOL,
                        "gradient entry {g} vs finite difference {fd}"
                    );
                    worst_fd = worst_fd.max(rel);
                }
            }

            // The solver ascends and stays on the torus.
            let result = rcg_maximize(&obj, &w, &RcgConfig::default());
            for pair in result.trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-10,
                    "solver objective regressed from {} to {}",
                    pair[0],
                    pair[1]
                );
            }
            for z in result.point.matrix().iter() {
                assert!((z.norm() - 1.0).abs() <= UNIT_MODULUS_TOL);
            }
        }
        format!(
            "20 instances: tangency ≤ {TANGENCY_TOL:.0e}, retraction modulus ≤ {UNIT_MODULUS_TOL:.0e}, \
             worst gradient mismatch {worst_fd:.2e} (tol {GRAD_FD_REL_TOL:.0e}), ascent monotone"
        )
    });
}

/// Generic numerical maximizer for a smooth concave objective over a complex
/// matrix: conjugate gradients on the finite-difference Wirtinger gradient
/// with an exact parabolic line search (the objective is quadratic along any
/// ray). Knows nothing about the objective's coefficients.
fn numeric_matrix_maximize(
    objective: &dyn Fn(&DMatrix<Complex64>) -> f64,
    shape: (usize, usize),
    iters: usize,
) -> f64 {
    let (rows, cols) = shape;
    let h = 1e-5;
    let fd_grad = |w: &DMatrix<Complex64>| {
        DMatrix::from_fn(rows, cols, |r, c| {
            let probe = |dre: f64, dim: f64| {
                let mut m = w.clone();
                m[(r, c)] += Complex64::new(dre, dim);
                objective(&m)
            };
            let dre = (probe(h, 0.0) - probe(-h, 0.0)) / (2.0 * h);
            let dim = (probe(0.0, h) - probe(0.0, -h)) / (2.0 * h);
            Complex64::new(dre, dim)
        })
    };
    let mut w = DMatrix::<Complex64>::zeros(rows, cols);
    let mut grad = fd_grad(&w);
    let mut dir = grad.clone();
    let restart = 2 * rows * cols + 1;
    for it in 0..iters {
        if dir.norm() <= 1e-12 {
            break;
        }
        // Fit the exact parabola along `dir` through three samples.
        let f0 = objective(&w);
        let scale = 1.0 / dir.norm();
        let f1 = objective(&(&w + &dir * Complex64::from(scale)));
        let f2 = objective(&(&w + &dir * Complex64::from(2.0 * scale)));
        let a = (f2 - 2.0 * f1 + f0) / 2.0;
        let b = f1 - f0 - a;
        if a >= 0.0 {
            break; // numerically flat along this ray
        }
        let t = -b / (2.0 * a) * scale;
        w += &dir * Complex64::from(t);
        let next = fd_grad(&w);
        if next.norm() <= 1e-10 {
            break;
        }
        // Polak-Ribiere conjugacy with periodic restarts.
        let num: f64 = next
            .iter()
            .zip(grad.iter())
            .map(|(n, g)| (n.conj() * (n - g)).re)
            .sum();
        let den = grad.norm_squared();
        let beta = if it % restart == restart - 1 {
            0.0
        } else {
            (num / den).max(0.0)
        };
        dir = &next + &dir * Complex64::from(beta);
        grad = next;
    }
    objective(&w)
}

#[test]
fn criterion_06_digital_closed_form() {
    criterion(6, "closed-form digital stage is optimal", || {
        let cfg = desk_cfg(3);
        let bounds = cfg.feasible_box();
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let mut worst = 0.0f64;
        for i in 0..10 {
            let users = UserSet::sample(&cfg, 4000 + i);
            let layout = bounds.sample(&mut rng);
            let problem = FpProblem::from_pass(&cfg, &users, &layout).expect("valid problem");
            let analog = standard_complex(cfg.num_waveguides, cfg.num_rf_chains, &mut rng);
            let incumbent = standard_complex(cfg.num_rf_chains, cfg.num_users, &mut rng);
            let t = &analog * &incumbent;
            let aux = problem.relaxed_sinr(&t);
            let mult = problem.ratio_multipliers(&t, &aux);
            let closed = problem.digital_update(&analog, &incumbent, &aux, &mult);
            let closed_obj = problem.quadratic_surrogate(&(&analog * &closed), &aux, &mult);
            let numeric_obj = numeric_matrix_maximize(
                &|w: &DMatrix<Complex64>| {
                    problem.quadratic_surrogate(&(&analog * w), &aux, &mult)
                },
                (cfg.num_rf_chains, cfg.num_users),
                400,
            );
            let gap = (closed_obj - numeric_obj).abs();
            assert!(
                gap <= DIGITAL_GAP_ABS_TOL,
                "closed form {closed_obj} vs numerical maximizer {numeric_obj} (gap {gap:.2e})"
            );
            worst = worst.max(gap);
        }
        format!("10 instances, worst objective gap {worst:.2e} (tol {DIGITAL_GAP_ABS_TOL:.0e})")
    });
}

#[test]
fn criterion_07_zero_forcing_suite() {
    criterion(7, "zero-forcing and water-filling", || {
        let mut rng = ChaCha8Rng::seed_from_u64(81);

        // Interference nulling on well-conditioned random channels.
        let mut worst_leak = 0.0f64;
        for _ in 0..20 {
            let effective = standard_complex(4, 2, &mut rng);
            let precoder = zf_beamformer(&effective, 100.0).expect("well-conditioned channel");
            let cross = effective.adjoint() * &precoder;
            let mut diag = 0.0;
            let mut off = 0.0;
            for r in 0..cross.nrows() {
                for c in 0..cross.ncols() {
                    if r == c {
                        diag += cross[(r, c)].norm_sqr();
                    } else {
                        off += cross[(r, c)].norm_sqr();
                    }
                }
            }
            let ratio = (off / diag).sqrt();
            assert!(
                ratio <= ZF_RESIDUAL_TOL,
                "residual interference ratio {ratio:.2e}"
            );
            worst_leak = worst_leak.max(ratio);
        }

        // Water-filling first-order conditions on random instances.
        for _ in 0..20 {
            let k = rng.gen_range(2..=4usize);
            let qualities: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..5.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let priorities: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let noise: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
            let power = 10.0;
            let filled = water_filling(&qualities, &priorities, &noise, power);
            let spent: f64 = filled.allocation.iter().sum();
            assert!(
                (spent - power).abs() <= WF_KKT_TOL * power,
                "allocated {spent} of {power}"
            );
            for u in 0..k {
                let p = filled.allocation[u];
                assert!(p >= 0.0, "negative power {p}");
                let slack = priorities[u] * filled.level - noise[u] / qualities[u];
                if filled.active[u] {
                    assert!(
                        (p - slack).abs() <= WF_KKT_TOL * power,
                        "active user off the water level"
                    );
                } else {
                    assert!(
                        p == 0.0 && slack <= WF_KKT_TOL,
                        "inactive user with positive headroom"
                    );
                }
            }
        }

        // Against a brute-force simplex grid (step P/1000) for K = 2 and 3.
        let mut worst_brute = 0.0f64;
        for k in [2usize, 3] {
            for _ in 0..5 {
                let qualities: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..5.0)).collect();
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let priorities: Vec<f64> = raw.iter().map(|w| w / total).collect();
                let noise: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
                let power = 10.0;
                let rate = |alloc: &[f64]| -> f64 {
                    (0..k)
                        .map(|u| {
                            priorities[u]
                                * (1.0 + qualities[u] * alloc[u] / noise[u]).log2()
                        })
                        .sum()
                };
                let filled = water_filling(&qualities, &priorities, &noise, power);
                let solved = rate(&filled.allocation);
                let cell = power / 1000.0;
                let mut brute = f64::NEG_INFINITY;
                if k == 2 {
                    for i in 0..=1000 {
                        let p0 = i as f64 * cell;
                        brute = brute.max(rate(&[p0, power - p0]));
                    }
                } else {
                    for i in 0..=1000 {
                        for j in 0..=(1000 - i) {
                            let (p0, p1) = (i as f64 * cell, j as f64 * cell);
                            brute = brute.max(rate(&[p0, p1, power - p0 - p1]));
                        }
                    }
                }
                let gap = (solved - brute).abs();
                assert!(
                    solved >= brute - WF_KKT_TOL,
                    "water-filling {solved} lost to the grid {brute}"
                );
                assert!(gap <= WF_BRUTE_ABS_TOL, "gap to brute force {gap:.2e}");
                worst_brute = worst_brute.max(gap);
            }
        }
        format!(
            "worst leakage ratio {worst_leak:.2e} (tol {ZF_RESIDUAL_TOL:.0e}); \
             first-order conditions within {WF_KKT_TOL:.0e}; \
             worst brute-force gap {worst_brute:.2e} (tol {WF_BRUTE_ABS_TOL:.0e})"
        )
    });
}

#[test]
fn criterion_08_evolutionary_search_suite() {
    criterion(8, "evolutionary position search", || {
        // Every candidate the search evaluates is feasible, and the
        // best-so-far trace never regresses.
        let cfg = toy_cfg();
        let users = UserSet::sample(&cfg, 7);
        let fitness = anchored_position_objective(&cfg, &users, 11).expect("toy objective");
        let bounds = cfg.feasible_box();
        let checked = |l: &PinchLayout| {
            assert!(
                l.is_feasible(&bounds),
                "search evaluated an infeasible candidate"
            );
            fitness(l)
        };
        let outcome = shade_maximize(
            &checked,
            &ShadeConfig {
                population_size: 40,
                pbest_fraction: 0.2,
                max_generations: 100,
                memory_size: 10,
                seed: 9,
                force_crossover_coordinate: false,
            },
            &bounds,
        )
        .expect("search run");
        for pair in outcome.best_trace.windows(2) {
            assert!(pair[1] >= pair[0], "best-so-far regressed");
        }

        // 1-D concave sanity: the optimum is located within a centimeter.
        let line = FeasibleBox::new(10.0, 0.1, 1, 1).expect("valid box");
        let concave = shade_maximize(
            &|l: &PinchLayout| -(l.x(0, 0) - 3.0).powi(2),
            &toy_shade_cfg(7),
            &line,
        )
        .expect("1-D run");
        let err = (concave.layout.x(0, 0) - 3.0).abs();
        assert!(
            err <= CONCAVE_POSITION_TOL,
            "1-D optimum missed by {err:.4} m"
        );

        // The search reaches the exhaustive 5 mm lattice optimum of the toy
        // within 1% relative, for each of three seeds.
        let step = 0.005;
        let points = (bounds.length() / step).round() as usize + 1;
        let mut lattice = f64::NEG_INFINITY;
        for i in 0..points {
            for j in 0..points {
                let l = PinchLayout::new(
                    DMatrix::from_row_slice(1, 2, &[i as f64 * step, j as f64 * step]),
                    &bounds,
                )
                .expect("lattice point is feasible");
                lattice = lattice.max(fitness(&l));
            }
        }
        let bar = lattice - TOY_SHADE_REL_SLACK * lattice.abs();
        let mut found = Vec::new();
        for seed in 40..43 {
            let best = shade_maximize(&fitness, &toy_shade_cfg(seed), &bounds)
                .expect("toy run")
                .fitness;
            assert!(
                best >= bar,
                "seed {seed} reached {best:.6}, below the lattice bar {bar:.6}"
            );
            found.push(best);
        }
        format!(
            "candidates feasible, best-so-far monotone; 1-D optimum within {err:.4} m; \
             toy lattice optimum {lattice:.6}, search worst {:.6} (bar {bar:.6})",
            found.iter().cloned().fold(f64::INFINITY, f64::min)
        )
    });
}

#[test]
fn criterion_09_method_ordering() {
    criterion(9, "full optimizer versus zero-forcing", || {
        let runs = runs();
        let fp_mean = mean(&runs.fp[1].iter().map(|o| o.wsr).collect::<Vec<_>>());
        let zf_mean = mean(&runs.zf_realized);
        assert!(
            fp_mean >= zf_mean,
            "full optimizer mean {fp_mean:.4} below zero-forcing mean {zf_mean:.4}"
        );
        let by_rf: Vec<f64> = runs
            .fp
            .iter()
            .map(|per_rf| mean(&per_rf.iter().map(|o| o.wsr).collect::<Vec<_>>()))
            .collect();
        for pair in by_rf.windows(2) {
            assert!(
                pair[1] >= pair[0],
                "mean rate decreased when adding an RF chain: {by_rf:?}"
            );
        }
        format!(
            "mean rate {fp_mean:.4} vs zero-forcing {zf_mean:.4}; \
             means over chains 1..4: {}",
            by_rf
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
                .join(" ≤ ")
        )
    });
}

#[test]
fn criterion_10_baseline_ordering() {
    criterion(10, "pinching baseline versus massive MIMO", || {
        let runs = runs();
        let sc = mean(&runs.sc_wsr);
        let mimo = mean(&runs.mimo_wsr);
        assert!(
            sc > mimo,
            "sub-connected pinching mean {sc:.4} not above massive-MIMO mean {mimo:.4}"
        );
        format!("sub-connected pinching mean {sc:.4} > massive-MIMO mean {mimo:.4}")
    });
}

#[test]
fn criterion_11_energy_efficiency() {
    criterion(11, "energy efficiency", || {
        // Worked example: R = 10 bit/s/Hz through 3 chains feeding a 6 x 6
        // array consumes 0.1 + 3*0.4 + 18*0.01 + 36*0.1 = 5.08 W. The sum is
        // exact in binary floating point, so equality is exact too.
        let ee = energy_efficiency(
            10.0,
            &ComponentCounts::fully_connected(3, 6, 6),
            &ComponentPowers::default(),
        );
        assert!(
            ee == 10.0 / 5.08,
            "worked example gave {ee}, expected exactly 10/5.08"
        );

        // With half as many chains as waveguides, the fully connected
        // architecture buys enough rate to win on efficiency.
        let runs = runs();
        let powers = ComponentPowers::default();
        let fc_counts = ComponentCounts::fully_connected(2, 4, 4);
        let sc_counts = ComponentCounts::sub_connected(4, 4);
        let fc = mean(
            &runs.fp[1]
                .iter()
                .map(|o| energy_efficiency(o.wsr, &fc_counts, &powers))
                .collect::<Vec<_>>(),
        );
        let sc = mean(
            &runs
                .sc_wsr
                .iter()
                .map(|&w| energy_efficiency(w, &sc_counts, &powers))
                .collect::<Vec<_>>(),
        );
        assert!(
            fc > sc,
            "fully connected efficiency {fc:.4} not above sub-connected {sc:.4}"
        );
        format!(
            "worked example exact; mean efficiency {fc:.4} (fully connected) \
             > {sc:.4} (sub-connected) at half-rate chains"
        )
    });
}
