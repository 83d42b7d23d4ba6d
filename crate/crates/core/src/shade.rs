//! Success-history adaptive differential evolution (SHADE) over antenna
//! layouts.
//!
//! The candidate encoding is the raw `N x M` position matrix; mutation and
//! crossover act entrywise and every trial is pushed back into the feasible
//! set by [`FeasibleBox::repair`] before evaluation. Control parameters F and
//! CR are drawn around a circular success-history memory: Cauchy(mu_F, 0.1)
//! resampled while non-positive and clipped at 1, and Normal(mu_CR, 0.1)
//! clipped to [0, 1]. After each generation with at least one improvement, the
//! slot indexed by the generation counter (mod memory size) is overwritten with
//! the improvement-weighted Lehmer mean of successful F values and the weighted
//! arithmetic mean of successful CR values.
//!
//! All randomness flows through a single ChaCha stream seeded from the config,
//! so runs are reproducible; fitness evaluations within a generation are pure
//! and fan out across threads without affecting results.

use crate::model::{FeasibleBox, PinchLayout, SystemConfig};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use rayon::prelude::*;

/// Scale of the Cauchy / Normal proposal distributions around the memories.
const PARAM_SCALE: f64 = 0.1;

/// Population, memory and budget knobs.
#[derive(Clone, Debug)]
pub struct ShadeConfig {
    /// Population size; at least 4.
    pub population_size: usize,
    /// Fraction of the population eligible as "pbest" donors, in (0, 1].
    pub pbest_fraction: f64,
    /// Fixed number of generations (no early stopping).
    pub max_generations: usize,
    /// Number of success-history slots.
    pub memory_size: usize,
    /// Seed for the optimizer's random stream.
    pub seed: u64,
    /// Classical DE guarantee that at least one coordinate always crosses
    /// over. Off by default: the plain `cr < CR` rule is used as stated.
    pub force_crossover_coordinate: bool,
}

impl ShadeConfig {
    /// Conventional sizing for a placement problem: population `5 M N`,
    /// top 20% donors, 100 generations, 10 memory slots.
    pub fn for_system(cfg: &SystemConfig, seed: u64) -> Self {
        Self {
            population_size: (5 * cfg.num_antennas()).max(4),
            pbest_fraction: 0.2,
            max_generations: 100,
            memory_size: 10,
            seed,
            force_crossover_coordinate: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::Config("population_size must be at least 4".into()));
        }
        if !(self.pbest_fraction > 0.0 && self.pbest_fraction <= 1.0) {
            return Err(Error::Config("pbest_fraction must lie in (0, 1]".into()));
        }
        if self.memory_size == 0 {
            return Err(Error::Config("memory_size must be positive".into()));
        }
        if self.max_generations == 0 {
            return Err(Error::Config("max_generations must be positive".into()));
        }
        Ok(())
    }
}

/// Full optimizer state, exposed for inspection and unit tests.
#[derive(Clone, Debug)]
pub struct ShadeState {
    pub population: Vec<PinchLayout>,
    pub fitness: Vec<f64>,
    pub memory_f: Vec<f64>,
    pub memory_cr: Vec<f64>,
    /// Replaced parents, capped at the population size.
    pub archive: Vec<DMatrix<f64>>,
    /// 1-based generation counter; 0 before the first generation.
    pub generation: usize,
    /// Memory slot written by the most recent update.
    pub memory_write_index: usize,
}

/// One successful replacement: the parameters that produced it and the
/// fitness improvement it achieved.
#[derive(Clone, Copy, Debug)]
pub struct SuccessEntry {
    pub f: f64,
    pub cr: f64,
    pub improvement: f64,
}

/// Samples a feasible initial population and neutral memories (all 0.5).
/// Fitness values start at negative infinity until the caller evaluates them.
pub fn init_population<R: Rng + ?Sized>(
    cfg: &ShadeConfig,
    bounds: &FeasibleBox,
    rng: &mut R,
) -> Result<ShadeState> {
    cfg.validate()?;
    let population: Vec<PinchLayout> = (0..cfg.population_size)
        .map(|_| bounds.sample(rng))
        .collect();
    Ok(ShadeState {
        fitness: vec![f64::NEG_INFINITY; cfg.population_size],
        population,
        memory_f: vec![0.5; cfg.memory_size],
        memory_cr: vec![0.5; cfg.memory_size],
        archive: Vec::new(),
        generation: 0,
        memory_write_index: 0,
    })
}

/// Draws (F, CR) around memory slot `slot`. F comes from a Cauchy, resampled
/// while non-positive and clipped to 1, so it always lands in (0, 1]. CR comes
/// from a Normal clipped to [0, 1].
pub fn sample_parameters<R: Rng + ?Sized>(
    memory_f: &[f64],
    memory_cr: &[f64],
    slot: usize,
    rng: &mut R,
) -> (f64, f64) {
    let cauchy = Cauchy::new(memory_f[slot], PARAM_SCALE).expect("valid Cauchy");
    let mut f = cauchy.sample(rng);
    while f <= 0.0 {
        f = cauchy.sample(rng);
    }
    if f > 1.0 {
        f = 1.0;
    }
    let normal = Normal::new(memory_cr[slot], PARAM_SCALE).expect("valid Normal");
    let cr = normal.sample(rng).clamp(0.0, 1.0);
    (f, cr)
}

/// Current-to-pbest/1 mutation:
/// `V = X + F (X_pbest - X) + F (X_r1 - X_r2)`.
pub fn mutate(
    current: &DMatrix<f64>,
    pbest: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    f: f64,
) -> DMatrix<f64> {
    current + (pbest - current).scale(f) + (r1 - r2).scale(f)
}

/// Binomial crossover: each coordinate takes the mutant value when
/// `u < CR` (u uniform on [0,1)). With `force_coordinate` one uniformly chosen
/// coordinate is forced to the mutant regardless.
pub fn crossover<R: Rng + ?Sized>(
    mutant: &DMatrix<f64>,
    parent: &DMatrix<f64>,
    cr: f64,
    rng: &mut R,
    force_coordinate: bool,
) -> DMatrix<f64> {
    let mut out = parent.clone();
    for (o, &v) in out.iter_mut().zip(mutant.iter()) {
        if rng.gen::<f64>() < cr {
            *o = v;
        }
    }
    if force_coordinate {
        let idx = rng.gen_range(0..out.len());
        out[idx] = mutant[idx];
    }
    out
}

/// Feasibility repair; see [`FeasibleBox::repair`].
pub fn repair(candidate: DMatrix<f64>, bounds: &FeasibleBox) -> PinchLayout {
    bounds.repair(candidate)
}

/// Writes the success-weighted means into the slot selected by the generation
/// counter. An empty success set leaves the memories untouched.
pub fn update_memory(successes: &[SuccessEntry], state: &mut ShadeState) {
    if successes.is_empty() {
        return;
    }
    let slot = state.generation % state.memory_f.len();
    // Improvements can be infinite when a previously hopeless (-inf) member is
    // replaced; those successes then carry all the weight.
    let any_infinite = successes.iter().any(|s| !s.improvement.is_finite());
    let raw: Vec<f64> = successes
        .iter()
        .map(|s| {
            if any_infinite {
                if s.improvement.is_finite() {
                    0.0
                } else {
                    1.0
                }
            } else {
                s.improvement
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut lehmer_num = 0.0;
    let mut lehmer_den = 0.0;
    let mut cr_mean = 0.0;
    for (s, w) in successes.iter().zip(&raw) {
        let w = w / total;
        lehmer_num += w * s.f * s.f;
        lehmer_den += w * s.f;
        cr_mean += w * s.cr;
    }
    state.memory_f[slot] = (lehmer_num / lehmer_den).clamp(f64::MIN_POSITIVE, 1.0);
    state.memory_cr[slot] = cr_mean.clamp(f64::MIN_POSITIVE, 1.0);
    state.memory_write_index = slot;
}

/// Best layout found and its fitness.
#[derive(Clone, Debug)]
pub struct ShadeOutcome {
    pub layout: PinchLayout,
    pub fitness: f64,
    /// Best fitness after each generation (non-decreasing).
    pub best_trace: Vec<f64>,
}

/// Maximizes `fitness` over feasible layouts. Non-finite fitness values are
/// treated as negative infinity, so such candidates always lose selection.
pub fn shade_maximize<F>(fitness: F, cfg: &ShadeConfig, bounds: &FeasibleBox) -> Result<ShadeOutcome>
where
    F: Fn(&PinchLayout) -> f64 + Sync,
{
    shade_maximize_seeded(fitness, cfg, bounds, &[])
}

/// Like [`shade_maximize`] but overwrites the first population slots with the
/// given layouts (e.g. an incumbent solution), which makes the returned best
/// at least as good as the best injected layout.
pub fn shade_maximize_seeded<F>(
    fitness: F,
    cfg: &ShadeConfig,
    bounds: &FeasibleBox,
    injected: &[PinchLayout],
) -> Result<ShadeOutcome>
where
    F: Fn(&PinchLayout) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = init_population(cfg, bounds, &mut rng)?;
    for (slot, layout) in injected.iter().take(cfg.population_size).enumerate() {
        if !layout.is_feasible(bounds) {
            return Err(Error::InfeasibleLayout(
                "injected layout violates the feasible box".into(),
            ));
        }
        state.population[slot] = layout.clone();
    }
    state.fitness = evaluate_all(&fitness, &state.population);

    let pop_size = cfg.population_size;
    let top = ((cfg.pbest_fraction * pop_size as f64).ceil() as usize).clamp(1, pop_size);
    let mut best_trace = Vec::with_capacity(cfg.max_generations);

    for generation in 1..=cfg.max_generations {
        state.generation = generation;

        // Donor ranking for this generation (stable under fitness ties).
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&a, &b| {
            state.fitness[b]
                .partial_cmp(&state.fitness[a])
                .expect("fitness is never NaN after sanitization")
                .then(a.cmp(&b))
        });

        // Sequential trial construction keeps the RNG stream well-defined.
        let mut trials = Vec::with_capacity(pop_size);
        let mut params = Vec::with_capacity(pop_size);
        for i in 0..pop_size {
            let slot = rng.gen_range(0..cfg.memory_size);
            let (f, cr) = sample_parameters(&state.memory_f, &state.memory_cr, slot, &mut rng);
            let pbest = order[rng.gen_range(0..top)];
            let r1 = loop {
                let c = rng.gen_range(0..pop_size);
                if c != i {
                    break c;
                }
            };
            let pool = pop_size + state.archive.len();
            let r2 = loop {
                let c = rng.gen_range(0..pool);
                if c != i && c != r1 {
                    break c;
                }
            };
            let r2_matrix = if r2 < pop_size {
                state.population[r2].positions()
            } else {
                &state.archive[r2 - pop_size]
            };
            let mutant = mutate(
                state.population[i].positions(),
                state.population[pbest].positions(),
                state.population[r1].positions(),
                r2_matrix,
                f,
            );
            let child = crossover(
                &mutant,
                state.population[i].positions(),
                cr,
                &mut rng,
                cfg.force_crossover_coordinate,
            );
            trials.push(repair(child, bounds));
            params.push((f, cr));
        }

        let trial_fitness = evaluate_all(&fitness, &trials);

        let mut successes = Vec::new();
        for (i, trial) in trials.into_iter().enumerate() {
            // Strict improvement only; ties keep the parent.
            if trial_fitness[i] > state.fitness[i] {
                successes.push(SuccessEntry {
                    f: params[i].0,
                    cr: params[i].1,
                    improvement: trial_fitness[i] - state.fitness[i],
                });
                let parent = std::mem::replace(&mut state.population[i], trial);
                state.archive.push(parent.into_positions());
                state.fitness[i] = trial_fitness[i];
            }
        }
        update_memory(&successes, &mut state);
        while state.archive.len() > pop_size {
            let victim = rng.gen_range(0..state.archive.len());
            state.archive.swap_remove(victim);
        }

        best_trace.push(
            state
                .fitness
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }

    // Greedy selection means the population best never degrades, so the final
    // best is the best ever seen.
    let (best_idx, best_fit) = state
        .fitness
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN fitness"))
        .expect("non-empty population");
    Ok(ShadeOutcome {
        layout: state.population[best_idx].clone(),
        fitness: best_fit,
        best_trace,
    })
}

fn evaluate_all<F>(fitness: &F, layouts: &[PinchLayout]) -> Vec<f64>
where
    F: Fn(&PinchLayout) -> f64 + Sync,
{
    layouts
        .par_iter()
        .map(|l| {
            let v = fitness(l);
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}
