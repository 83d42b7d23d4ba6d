//! Physical system description and the pure evaluation layer.
//!
//! Geometry convention: `M` waveguides run parallel to the x-axis at height `d_z`,
//! waveguide `m` (0-based here) lying on the line `y = m * d_y`. Each waveguide
//! carries `N` pinching antennas whose x-coordinates are the optimization
//! variables. Users live on the ground plane `z = 0` inside the
//! `[0, D_x] x [0, D_y]` service region. All powers are linear milliwatts
//! internally; dBm only appears at configuration boundaries.

mod channel;
mod csi;
mod layout;
mod metrics;

pub use channel::{
    effective_channel, effective_gain, guided_wavelength, los_channel, pa_user_distance,
    pinching_beamformer, propagation_response, ChannelMatrix,
};
pub use csi::perturb_channel;
pub use layout::{FeasibleBox, PinchLayout};
pub use metrics::{
    energy_efficiency, sinr, wsr, ComponentCounts, ComponentPowers, Metrics,
};

use crate::{Error, Result};
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Propagation speed used to derive the carrier wavelength, in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Converts a dBm figure to linear milliwatts.
pub fn dbm_to_milliwatts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Raw inputs for [`SystemConfig::new`]. Optional fields fall back to the
/// conventional defaults documented on each member.
#[derive(Clone, Debug)]
pub struct SystemParams {
    /// Number of waveguides M.
    pub num_waveguides: usize,
    /// Pinching antennas per waveguide N.
    pub pas_per_waveguide: usize,
    /// Number of single-antenna users K.
    pub num_users: usize,
    /// RF chains feeding the analog network.
    pub num_rf_chains: usize,
    /// Waveguide length L in meters.
    pub waveguide_length: f64,
    /// Service-region extent along x, in meters.
    pub region_width: f64,
    /// Service-region extent along y, in meters.
    pub region_depth: f64,
    /// Waveguide height d_z above the user plane, in meters.
    pub height: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Effective refractive index of the dielectric waveguide.
    pub effective_refractive_index: f64,
    /// Minimum spacing between neighboring antennas on one waveguide.
    /// Defaults to half a wavelength.
    pub min_pa_spacing: Option<f64>,
    /// Spacing between adjacent waveguides. Defaults to `region_depth / (M - 1)`
    /// (a single waveguide sits at y = 0).
    pub waveguide_spacing: Option<f64>,
    /// Total transmit power budget in dBm.
    pub transmit_power_dbm: f64,
    /// Noise power per user in dBm (uniform across users).
    pub noise_power_dbm: f64,
    /// Per-user noise override in dBm; wins over `noise_power_dbm` when set.
    pub noise_powers_dbm: Option<Vec<f64>>,
    /// Rate priorities; must sum to one. Defaults to uniform 1/K.
    pub priorities: Option<Vec<f64>>,
    /// Channel amplitude coefficient in meters. Defaults to wavelength / (4 pi),
    /// the free-space reference gain at 1 m.
    pub amplitude_coefficient: Option<f64>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            num_waveguides: 4,
            pas_per_waveguide: 4,
            num_users: 2,
            num_rf_chains: 2,
            waveguide_length: 10.0,
            region_width: 10.0,
            region_depth: 10.0,
            height: 5.0,
            carrier_frequency: 30.0e9,
            effective_refractive_index: 1.44,
            min_pa_spacing: None,
            waveguide_spacing: None,
            transmit_power_dbm: 20.0,
            noise_power_dbm: -90.0,
            noise_powers_dbm: None,
            priorities: None,
            amplitude_coefficient: None,
        }
    }
}

/// Validated system description with all derived quantities resolved.
#[derive(Clone, Debug)]
pub struct SystemConfig {
    pub num_waveguides: usize,
    pub pas_per_waveguide: usize,
    pub num_users: usize,
    pub num_rf_chains: usize,
    pub waveguide_length: f64,
    pub region_width: f64,
    pub region_depth: f64,
    pub height: f64,
    pub waveguide_spacing: f64,
    pub carrier_frequency: f64,
    /// Free-space wavelength c / f_c.
    pub wavelength: f64,
    pub effective_refractive_index: f64,
    /// In-waveguide wavelength, `wavelength / n_eff`.
    pub guided_wavelength: f64,
    pub min_pa_spacing: f64,
    /// Transmit power budget P in milliwatts.
    pub transmit_power_mw: f64,
    /// Per-user noise powers in milliwatts.
    pub noise_powers_mw: Vec<f64>,
    /// Rate priorities, summing to one.
    pub priorities: Vec<f64>,
    /// Channel amplitude coefficient in meters.
    pub amplitude_coefficient: f64,
}

impl SystemConfig {
    /// Validates raw parameters and resolves derived fields.
    pub fn new(p: SystemParams) -> Result<Self> {
        if p.num_waveguides == 0 || p.pas_per_waveguide == 0 {
            return Err(Error::Config(
                "num_waveguides and pas_per_waveguide must be positive".into(),
            ));
        }
        if p.num_users == 0 {
            return Err(Error::Config("num_users must be positive".into()));
        }
        if p.num_rf_chains == 0 {
            return Err(Error::Config("num_rf_chains must be positive".into()));
        }
        if p.num_users > p.num_waveguides * p.pas_per_waveguide {
            return Err(Error::Config(format!(
                "num_users ({}) exceeds the antenna count M*N ({})",
                p.num_users,
                p.num_waveguides * p.pas_per_waveguide
            )));
        }
        if !(p.carrier_frequency > 0.0) {
            return Err(Error::Config("carrier_frequency must be positive".into()));
        }
        if !(p.effective_refractive_index >= 1.0) {
            return Err(Error::Config(
                "effective_refractive_index must be at least 1".into(),
            ));
        }
        if !(p.waveguide_length > 0.0) || !(p.region_width > 0.0) || !(p.region_depth > 0.0) {
            return Err(Error::Config(
                "waveguide_length, region_width and region_depth must be positive".into(),
            ));
        }
        if !(p.height > 0.0) {
            return Err(Error::Config("height must be positive".into()));
        }

        let wavelength = SPEED_OF_LIGHT / p.carrier_frequency;
        let guided_wavelength = guided_wavelength(wavelength, p.effective_refractive_index)?;
        let min_pa_spacing = p.min_pa_spacing.unwrap_or(wavelength / 2.0);
        if !(min_pa_spacing > 0.0) {
            return Err(Error::Config("min_pa_spacing must be positive".into()));
        }
        if min_pa_spacing > p.waveguide_length {
            return Err(Error::Config(format!(
                "min_pa_spacing ({min_pa_spacing}) exceeds waveguide_length ({})",
                p.waveguide_length
            )));
        }
        if p.pas_per_waveguide as f64 * min_pa_spacing > p.waveguide_length {
            return Err(Error::Config(format!(
                "waveguide_length ({}) cannot hold {} antennas at spacing {min_pa_spacing}",
                p.waveguide_length, p.pas_per_waveguide
            )));
        }
        let waveguide_spacing = p.waveguide_spacing.unwrap_or(if p.num_waveguides > 1 {
            p.region_depth / (p.num_waveguides - 1) as f64
        } else {
            p.region_depth
        });
        if !(waveguide_spacing > 0.0) {
            return Err(Error::Config("waveguide_spacing must be positive".into()));
        }

        let transmit_power_mw = dbm_to_milliwatts(p.transmit_power_dbm);
        let noise_powers_mw = match p.noise_powers_dbm {
            Some(v) => {
                if v.len() != p.num_users {
                    return Err(Error::Config(format!(
                        "noise_powers_dbm has {} entries for {} users",
                        v.len(),
                        p.num_users
                    )));
                }
                v.iter().map(|&d| dbm_to_milliwatts(d)).collect()
            }
            None => vec![dbm_to_milliwatts(p.noise_power_dbm); p.num_users],
        };
        if noise_powers_mw.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise powers must be positive".into()));
        }

        let priorities = match p.priorities {
            Some(b) => {
                if b.len() != p.num_users {
                    return Err(Error::Config(format!(
                        "priorities has {} entries for {} users",
                        b.len(),
                        p.num_users
                    )));
                }
                if b.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::Config("priorities must be positive".into()));
                }
                let total: f64 = b.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "priorities must sum to 1 (got {total})"
                    )));
                }
                b
            }
            None => vec![1.0 / p.num_users as f64; p.num_users],
        };

        let amplitude_coefficient = p
            .amplitude_coefficient
            .unwrap_or(wavelength / (4.0 * std::f64::consts::PI));
        if !(amplitude_coefficient > 0.0) {
            return Err(Error::Config(
                "amplitude_coefficient must be positive".into(),
            ));
        }

        Ok(Self {
            num_waveguides: p.num_waveguides,
            pas_per_waveguide: p.pas_per_waveguide,
            num_users: p.num_users,
            num_rf_chains: p.num_rf_chains,
            waveguide_length: p.waveguide_length,
            region_width: p.region_width,
            region_depth: p.region_depth,
            height: p.height,
            waveguide_spacing,
            carrier_frequency: p.carrier_frequency,
            wavelength,
            effective_refractive_index: p.effective_refractive_index,
            guided_wavelength,
            min_pa_spacing,
            transmit_power_mw,
            noise_powers_mw,
            priorities,
            amplitude_coefficient,
        })
    }

    /// Total number of radiating elements M * N.
    pub fn num_antennas(&self) -> usize {
        self.num_waveguides * self.pas_per_waveguide
    }

    /// y-coordinate of waveguide `m` (0-based).
    pub fn waveguide_y(&self, m: usize) -> f64 {
        m as f64 * self.waveguide_spacing
    }

    /// Feasible placement region for this configuration.
    pub fn feasible_box(&self) -> FeasibleBox {
        FeasibleBox::new(
            self.waveguide_length,
            self.min_pa_spacing,
            self.pas_per_waveguide,
            self.num_waveguides,
        )
        .expect("validated config always yields a non-empty feasible box")
    }
}

/// User positions in meters, one 3D point per user.
#[derive(Clone, Debug)]
pub struct UserSet {
    pub positions: Vec<Vector3<f64>>,
}

impl UserSet {
    pub fn new(positions: Vec<Vector3<f64>>) -> Self {
        Self { positions }
    }

    /// Samples `cfg.num_users` positions uniformly over the ground-plane service
    /// region `[0, D_x] x [0, D_y] x {0}`, reproducibly for a given seed.
    pub fn sample(cfg: &SystemConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..cfg.num_users)
            .map(|_| {
                let x = rng.gen_range(0.0..=cfg.region_width);
                let y = rng.gen_range(0.0..=cfg.region_depth);
                Vector3::new(x, y, 0.0)
            })
            .collect();
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Digital, analog and pinching factors of the composite downlink beamformer.
///
/// Shapes: digital `N_RF x K`, analog `M x N_RF` (unit-modulus entries),
/// pinching `MN x M` (block diagonal, one propagation-response block per
/// waveguide). The composite is always recomputed from the factors, never
/// cached, so it can never go stale.
#[derive(Clone, Debug)]
pub struct BeamformerSet {
    pub digital: DMatrix<Complex64>,
    pub analog: DMatrix<Complex64>,
    pub pinching: DMatrix<Complex64>,
}

impl BeamformerSet {
    /// Builds the set, checking shape compatibility and the constant-modulus
    /// constraint on the analog factor (tolerance 1e-9).
    pub fn new(
        digital: DMatrix<Complex64>,
        analog: DMatrix<Complex64>,
        pinching: DMatrix<Complex64>,
    ) -> Result<Self> {
        if analog.ncols() != digital.nrows() || pinching.ncols() != analog.nrows() {
            return Err(Error::Config(format!(
                "incompatible beamformer shapes: pinching {}x{}, analog {}x{}, digital {}x{}",
                pinching.nrows(),
                pinching.ncols(),
                analog.nrows(),
                analog.ncols(),
                digital.nrows(),
                digital.ncols()
            )));
        }
        if analog.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::Config(
                "analog beamformer entries must have unit modulus".into(),
            ));
        }
        Ok(Self {
            digital,
            analog,
            pinching,
        })
    }

    /// Analog-digital product `W_RF * W_BB`; its squared Frobenius norm is the
    /// radiated power.
    pub fn transmit(&self) -> DMatrix<Complex64> {
        &self.analog * &self.digital
    }

    /// Full `MN x K` composite beamformer including the pinching stage.
    pub fn composite(&self) -> DMatrix<Complex64> {
        &self.pinching * self.transmit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_conversions_match_reference_points() {
        assert_relative_eq!(dbm_to_milliwatts(20.0), 100.0, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_milliwatts(-90.0), 1e-9, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_milliwatts(0.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn default_config_resolves_derived_fields() {
        let cfg = SystemConfig::new(SystemParams::default()).unwrap();
        assert_relative_eq!(cfg.wavelength, 2.998e8 / 30.0e9, max_relative = 1e-12);
        assert_relative_eq!(
            cfg.guided_wavelength,
            cfg.wavelength / 1.44,
            max_relative = 1e-12
        );
        assert_relative_eq!(cfg.min_pa_spacing, cfg.wavelength / 2.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.transmit_power_mw, 100.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.noise_powers_mw[0], 1e-9, max_relative = 1e-12);
        assert_relative_eq!(cfg.waveguide_spacing, 10.0 / 3.0, max_relative = 1e-12);
        assert_eq!(cfg.priorities, vec![0.5, 0.5]);
        assert_relative_eq!(
            cfg.amplitude_coefficient,
            cfg.wavelength / (4.0 * std::f64::consts::PI),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_more_users_than_antennas() {
        let p = SystemParams {
            num_waveguides: 1,
            pas_per_waveguide: 2,
            num_users: 3,
            priorities: Some(vec![0.4, 0.3, 0.3]),
            noise_powers_dbm: None,
            ..SystemParams::default()
        };
        assert!(matches!(SystemConfig::new(p), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_spacing_longer_than_waveguide() {
        let p = SystemParams {
            min_pa_spacing: Some(11.0),
            ..SystemParams::default()
        };
        let err = SystemConfig::new(p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("min_pa_spacing"), "unexpected message: {msg}");
    }

    #[test]
    fn rejects_unnormalized_priorities() {
        let p = SystemParams {
            priorities: Some(vec![0.9, 0.9]),
            ..SystemParams::default()
        };
        assert!(SystemConfig::new(p).is_err());
    }

    #[test]
    fn user_sampling_is_deterministic_and_in_region() {
        let cfg = SystemConfig::new(SystemParams::default()).unwrap();
        let a = UserSet::sample(&cfg, 7);
        let b = UserSet::sample(&cfg, 7);
        assert_eq!(a.positions, b.positions);
        for p in &a.positions {
            assert!(p.x >= 0.0 && p.x <= cfg.region_width);
            assert!(p.y >= 0.0 && p.y <= cfg.region_depth);
            assert_eq!(p.z, 0.0);
        }
        let c = UserSet::sample(&cfg, 8);
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn beamformer_set_rejects_non_unit_modulus_analog() {
        let digital = DMatrix::<Complex64>::identity(2, 2);
        let analog = DMatrix::<Complex64>::from_element(4, 2, Complex64::new(0.5, 0.0));
        let pinching = DMatrix::<Complex64>::zeros(8, 4);
        assert!(BeamformerSet::new(digital, analog, pinching).is_err());
    }
}
