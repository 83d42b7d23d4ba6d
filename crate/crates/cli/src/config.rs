//! JSON experiment configuration: schema, defaults, validation.
//!
//! Every field is optional; an empty object `{}` yields the reference setup
//! (30 GHz carrier, 10 m waveguides over a 10 m x 10 m region, 2 users,
//! 20 dBm budget, -90 dBm noise, refractive index 1.44, half-wavelength
//! antenna spacing, uniform priorities). Unknown keys are reported as
//! warnings, never errors, so configs stay forward compatible.

use anyhow::{bail, Context, Result};
use pass_thb::fp::AoConfig;
use pass_thb::manifold::RcgConfig;
use pass_thb::model::{SystemConfig, SystemParams};
use pass_thb::shade::ShadeConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which solver a run dispatches to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Fractional-programming alternating optimizer (the main algorithm).
    Fp,
    /// Zero-forcing pipeline: position search, ideal ZF, tri-hybrid factorization.
    Zf,
    /// Sub-connected pinching-antenna baseline (no analog stage).
    Sc,
    /// Partially connected hybrid array baseline (no pinching stage).
    Mimo,
    /// The main optimizer with the evolutionary position stage replaced by
    /// cyclic per-antenna grid search.
    Grid,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fp => "fp",
            Algorithm::Zf => "zf",
            Algorithm::Sc => "sc",
            Algorithm::Mimo => "mimo",
            Algorithm::Grid => "grid",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp" => Ok(Algorithm::Fp),
            "zf" => Ok(Algorithm::Zf),
            "sc" => Ok(Algorithm::Sc),
            "mimo" => Ok(Algorithm::Mimo),
            "grid" => Ok(Algorithm::Grid),
            other => bail!("unknown algorithm {other:?}; expected fp, zf, sc, mimo or grid"),
        }
    }
}

/// Optional overrides of the physical system; anything left out keeps the
/// reference value. Field names match [`SystemParams`].
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct SystemOverrides {
    pub num_waveguides: Option<usize>,
    pub pas_per_waveguide: Option<usize>,
    pub num_users: Option<usize>,
    pub num_rf_chains: Option<usize>,
    pub waveguide_length: Option<f64>,
    pub region_width: Option<f64>,
    pub region_depth: Option<f64>,
    pub height: Option<f64>,
    pub carrier_frequency: Option<f64>,
    pub effective_refractive_index: Option<f64>,
    pub min_pa_spacing: Option<f64>,
    pub waveguide_spacing: Option<f64>,
    pub transmit_power_dbm: Option<f64>,
    pub noise_power_dbm: Option<f64>,
    pub noise_powers_dbm: Option<Vec<f64>>,
    pub priorities: Option<Vec<f64>>,
    pub amplitude_coefficient: Option<f64>,
}

impl SystemOverrides {
    /// Applies the overrides on top of `base`.
    pub fn apply(&self, mut base: SystemParams) -> SystemParams {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    base.$field = v.clone();
                }
            };
        }
        set!(num_waveguides);
        set!(pas_per_waveguide);
        set!(num_users);
        set!(num_rf_chains);
        set!(waveguide_length);
        set!(region_width);
        set!(region_depth);
        set!(height);
        set!(carrier_frequency);
        set!(effective_refractive_index);
        set!(transmit_power_dbm);
        set!(noise_power_dbm);
        if self.min_pa_spacing.is_some() {
            base.min_pa_spacing = self.min_pa_spacing;
        }
        if self.waveguide_spacing.is_some() {
            base.waveguide_spacing = self.waveguide_spacing;
        }
        if self.noise_powers_dbm.is_some() {
            base.noise_powers_dbm = self.noise_powers_dbm.clone();
        }
        if self.priorities.is_some() {
            base.priorities = self.priorities.clone();
        }
        if self.amplitude_coefficient.is_some() {
            base.amplitude_coefficient = self.amplitude_coefficient;
        }
        base
    }
}

/// Optional overrides for the evolutionary position search. Absent fields
/// keep the system-derived sizing ([`ShadeConfig::for_system`]).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ShadeOverrides {
    pub population_size: Option<usize>,
    pub pbest_fraction: Option<f64>,
    pub max_generations: Option<usize>,
    pub memory_size: Option<usize>,
}

impl ShadeOverrides {
    pub fn is_empty(&self) -> bool {
        self.population_size.is_none()
            && self.pbest_fraction.is_none()
            && self.max_generations.is_none()
            && self.memory_size.is_none()
    }

    pub fn apply(&self, mut base: ShadeConfig) -> ShadeConfig {
        if let Some(v) = self.population_size {
            base.population_size = v;
        }
        if let Some(v) = self.pbest_fraction {
            base.pbest_fraction = v;
        }
        if let Some(v) = self.max_generations {
            base.max_generations = v;
        }
        if let Some(v) = self.memory_size {
            base.memory_size = v;
        }
        base
    }
}

/// Optional overrides for the Riemannian conjugate-gradient analog stage.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct RcgOverrides {
    pub max_iters: Option<usize>,
    pub grad_norm_tol: Option<f64>,
    pub initial_step: Option<f64>,
    pub armijo_contraction: Option<f64>,
    pub armijo_slope_coeff: Option<f64>,
    pub max_backtracks: Option<usize>,
}

impl RcgOverrides {
    pub fn apply(&self, mut base: RcgConfig) -> RcgConfig {
        if let Some(v) = self.max_iters {
            base.max_iters = v;
        }
        if let Some(v) = self.grad_norm_tol {
            base.grad_norm_tol = v;
        }
        if let Some(v) = self.initial_step {
            base.initial_step = v;
        }
        if let Some(v) = self.armijo_contraction {
            base.armijo_contraction = v;
        }
        if let Some(v) = self.armijo_slope_coeff {
            base.armijo_slope_coeff = v;
        }
        if let Some(v) = self.max_backtracks {
            base.max_backtracks = v;
        }
        base
    }
}

/// Outer-loop stopping rules shared by all alternating optimizers.
#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
pub struct StopRules {
    /// Outer-iteration cap.
    pub max_outer: usize,
    /// Relative-change convergence tolerance on the objective.
    pub rel_tol: f64,
}

impl Default for StopRules {
    fn default() -> Self {
        let d = AoConfig::default();
        Self {
            max_outer: d.max_outer,
            rel_tol: d.rel_tol,
        }
    }
}

/// One-parameter sweep: the named system field takes each value in turn, and
/// every (value, seed) pair becomes its own run.
#[derive(Clone, Debug, Deserialize)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Full experiment description. See the module docs for defaults.
#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemOverrides,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub sweep: Option<Sweep>,
    pub shade: ShadeOverrides,
    pub rcg: RcgOverrides,
    pub stop: StopRules,
    /// Resolution in meters for the grid-search position stage (and the
    /// default landscape resolution). Defaults to a tenth of the wavelength.
    pub grid_step: Option<f64>,
    pub output_dir: PathBuf,
    /// Record wall-clock run durations in the elapsed_ms column. Off by
    /// default because timing is inherently non-deterministic and would break
    /// byte-identical reruns.
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemOverrides::default(),
            algorithm: Algorithm::Fp,
            seeds: vec![0],
            sweep: None,
            shade: ShadeOverrides::default(),
            rcg: RcgOverrides::default(),
            stop: StopRules::default(),
            grid_step: None,
            output_dir: PathBuf::from("runs"),
            timings: false,
        }
    }
}

impl ExperimentConfig {
    /// System parameters with the overrides applied.
    pub fn system_params(&self) -> SystemParams {
        self.system.apply(SystemParams::default())
    }

    /// Fully validated system; errors name the offending field.
    pub fn system_config(&self) -> Result<SystemConfig> {
        Ok(SystemConfig::new(self.system_params())?)
    }

    /// Cross-field checks beyond what the system model validates itself.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must contain at least one entry");
        }
        if let Some(step) = self.grid_step {
            if !(step > 0.0) {
                bail!("grid_step must be positive (got {step})");
            }
        }
        if self.stop.max_outer == 0 {
            bail!("stop.max_outer must be at least 1");
        }
        if !(self.stop.rel_tol >= 0.0) {
            bail!("stop.rel_tol must be non-negative");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                bail!("sweep.values must contain at least one entry");
            }
            // Fail fast on unknown or out-of-range sweep parameters.
            for &value in &sweep.values {
                let mut probe = self.system_params();
                apply_sweep(&mut probe, &sweep.parameter, value)?;
            }
        }
        self.system_config()?;
        Ok(())
    }
}

/// A parsed configuration together with any forward-compatibility warnings.
#[derive(Debug)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    /// One message per unknown key encountered in the JSON document.
    pub warnings: Vec<String>,
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

/// Parses and validates a configuration document. Syntax and type errors
/// carry the line and column of the offending token.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).context("config is not valid JSON")?;
    if !value.is_object() {
        bail!("config root must be a JSON object");
    }
    let warnings = unknown_key_warnings(&value);
    // Deserialize from the original text so error messages keep line info.
    let experiment: ExperimentConfig =
        serde_json::from_str(text).context("config does not match the expected schema")?;
    experiment.validate()?;
    Ok(LoadedConfig {
        experiment,
        warnings,
    })
}

const TOP_KEYS: &[&str] = &[
    "system",
    "algorithm",
    "seeds",
    "sweep",
    "shade",
    "rcg",
    "stop",
    "grid_step",
    "output_dir",
    "timings",
];
const SYSTEM_KEYS: &[&str] = &[
    "num_waveguides",
    "pas_per_waveguide",
    "num_users",
    "num_rf_chains",
    "waveguide_length",
    "region_width",
    "region_depth",
    "height",
    "carrier_frequency",
    "effective_refractive_index",
    "min_pa_spacing",
    "waveguide_spacing",
    "transmit_power_dbm",
    "noise_power_dbm",
    "noise_powers_dbm",
    "priorities",
    "amplitude_coefficient",
];
const SWEEP_KEYS: &[&str] = &["parameter", "values"];
const SHADE_KEYS: &[&str] = &[
    "population_size",
    "pbest_fraction",
    "max_generations",
    "memory_size",
];
const RCG_KEYS: &[&str] = &[
    "max_iters",
    "grad_norm_tol",
    "initial_step",
    "armijo_contraction",
    "armijo_slope_coeff",
    "max_backtracks",
];
const STOP_KEYS: &[&str] = &["max_outer", "rel_tol"];

/// Collects "unknown key" warnings for the top level and the known nested
/// blocks. Unknown keys are tolerated so old binaries accept newer configs.
fn unknown_key_warnings(value: &serde_json::Value) -> Vec<String> {
    let mut warnings = Vec::new();
    let Some(root) = value.as_object() else {
        return warnings;
    };
    let nests: &[(&str, &[&str])] = &[
        ("system", SYSTEM_KEYS),
        ("sweep", SWEEP_KEYS),
        ("shade", SHADE_KEYS),
        ("rcg", RCG_KEYS),
        ("stop", STOP_KEYS),
    ];
    for key in root.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            warnings.push(format!("unknown config key `{key}` ignored"));
        }
    }
    for (nest, allowed) in nests {
        if let Some(block) = root.get(*nest).and_then(|v| v.as_object()) {
            for key in block.keys() {
                if !allowed.contains(&key.as_str()) {
                    warnings.push(format!("unknown config key `{nest}.{key}` ignored"));
                }
            }
        }
    }
    warnings
}

/// Sets the named numeric system parameter to `value`. Integer-valued fields
/// reject fractional or non-positive values; unknown names are an error (the
/// sweep machinery has no way to guess what was meant).
pub fn apply_sweep(params: &mut SystemParams, parameter: &str, value: f64) -> Result<()> {
    fn as_count(parameter: &str, value: f64) -> Result<usize> {
        if !(value >= 1.0) || value.fract() != 0.0 {
            bail!("sweep parameter {parameter} needs a positive integer value, got {value}");
        }
        Ok(value as usize)
    }
    match parameter {
        "num_waveguides" => params.num_waveguides = as_count(parameter, value)?,
        "pas_per_waveguide" => params.pas_per_waveguide = as_count(parameter, value)?,
        "num_users" => params.num_users = as_count(parameter, value)?,
        "num_rf_chains" => params.num_rf_chains = as_count(parameter, value)?,
        "waveguide_length" => params.waveguide_length = value,
        "region_width" => params.region_width = value,
        "region_depth" => params.region_depth = value,
        "height" => params.height = value,
        "carrier_frequency" => params.carrier_frequency = value,
        "effective_refractive_index" => params.effective_refractive_index = value,
        "min_pa_spacing" => params.min_pa_spacing = Some(value),
        "waveguide_spacing" => params.waveguide_spacing = Some(value),
        "transmit_power_dbm" => params.transmit_power_dbm = value,
        "noise_power_dbm" => params.noise_power_dbm = value,
        other => bail!(
            "unsupported sweep parameter {other:?}; supported: num_waveguides, \
             pas_per_waveguide, num_users, num_rf_chains, waveguide_length, region_width, \
             region_depth, height, carrier_frequency, effective_refractive_index, \
             min_pa_spacing, waveguide_spacing, transmit_power_dbm, noise_power_dbm"
        ),
    }
    Ok(())
}
