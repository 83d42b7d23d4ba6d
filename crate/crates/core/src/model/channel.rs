//! Waveguide propagation and line-of-sight channel construction.
//!
//! Sign conventions: the in-waveguide response carries phase
//! `exp(-j 2 pi x / lambda_g)` (delay accumulated from the feed point), while a
//! free-space channel entry carries `exp(+j 2 pi D / lambda) / D`. The two meet
//! in [`effective_gain`], which is the per-waveguide gain after conjugation by
//! the receive side and must agree with the matrix product of the two factors.

use super::{PinchLayout, SystemConfig, UserSet};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Wavelength inside the dielectric waveguide: `lambda / n_eff`.
pub fn guided_wavelength(wavelength: f64, n_eff: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::Config("wavelength must be positive".into()));
    }
    if !(n_eff >= 1.0) {
        return Err(Error::Config(
            "effective refractive index must be at least 1".into(),
        ));
    }
    Ok(wavelength / n_eff)
}

/// In-waveguide response of one waveguide's antennas at positions `x` (meters
/// from the feed point): entry `n` is `exp(-j 2 pi x_n / lambda_g) / sqrt(N)`.
/// The `1/sqrt(N)` factor splits the guided power equally over the N antennas,
/// so the vector always has unit norm.
pub fn propagation_response(x: &[f64], lambda_g: f64) -> DVector<Complex64> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_iterator(
        n,
        x.iter()
            .map(|&xi| Complex64::from_polar(scale, -TAU * xi / lambda_g)),
    )
}

/// Block-diagonal pinching beamformer `W_PB` of shape `MN x M`: column `m`
/// holds the propagation response of waveguide `m` in rows `mN..(m+1)N` and is
/// zero elsewhere. Every column has unit norm.
pub fn pinching_beamformer(layout: &PinchLayout, cfg: &SystemConfig) -> Result<DMatrix<Complex64>> {
    if !layout.is_feasible(&cfg.feasible_box()) {
        return Err(Error::InfeasibleLayout(
            "layout does not satisfy this configuration's bounds".into(),
        ));
    }
    let (n, m) = (cfg.pas_per_waveguide, cfg.num_waveguides);
    let mut w = DMatrix::<Complex64>::zeros(m * n, m);
    for wg in 0..m {
        let col: Vec<f64> = layout.positions().column(wg).iter().copied().collect();
        let g = propagation_response(&col, cfg.guided_wavelength);
        for i in 0..n {
            w[(wg * n + i, wg)] = g[i];
        }
    }
    Ok(w)
}

/// Euclidean distance between antenna `(m, x)` (0-based waveguide index) and a
/// user position.
pub fn pa_user_distance(x: f64, waveguide: usize, user: &Vector3<f64>, cfg: &SystemConfig) -> f64 {
    let dy = cfg.waveguide_y(waveguide) - user.y;
    let dz = cfg.height - user.z;
    ((x - user.x).powi(2) + dy * dy + dz * dz).sqrt()
}

/// Line-of-sight channel matrix, `MN x K`, rows waveguide-major: row `mN + n`
/// belongs to antenna `n` of waveguide `m`. Entry magnitude is `eta / D` with
/// phase `+2 pi D / lambda`.
#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    matrix: DMatrix<Complex64>,
    waveguides: usize,
    pas_per_waveguide: usize,
}

impl ChannelMatrix {
    /// Wraps an `MN x K` matrix with the stated row layout.
    pub fn new(matrix: DMatrix<Complex64>, waveguides: usize, pas_per_waveguide: usize) -> Result<Self> {
        if matrix.nrows() != waveguides * pas_per_waveguide {
            return Err(Error::Config(format!(
                "channel has {} rows, expected {}x{}",
                matrix.nrows(),
                waveguides,
                pas_per_waveguide
            )));
        }
        Ok(Self {
            matrix,
            waveguides,
            pas_per_waveguide,
        })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn num_users(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    pub fn pas_per_waveguide(&self) -> usize {
        self.pas_per_waveguide
    }

    /// Channel coefficient between user `k` and antenna `n` of waveguide `m`.
    pub fn entry(&self, k: usize, m: usize, n: usize) -> Complex64 {
        self.matrix[(m * self.pas_per_waveguide + n, k)]
    }
}

/// Free-space line-of-sight channel for every (user, antenna) pair.
/// Fails if any distance is zero (a user exactly on an antenna).
pub fn los_channel(layout: &PinchLayout, users: &UserSet, cfg: &SystemConfig) -> Result<ChannelMatrix> {
    let (m, n, k) = (cfg.num_waveguides, cfg.pas_per_waveguide, users.len());
    let mut h = DMatrix::<Complex64>::zeros(m * n, k);
    for (uk, user) in users.positions.iter().enumerate() {
        for wg in 0..m {
            for a in 0..n {
                let d = pa_user_distance(layout.x(a, wg), wg, user, cfg);
                if d == 0.0 {
                    return Err(Error::Geometry(format!(
                        "user {uk} coincides with antenna {a} of waveguide {wg}"
                    )));
                }
                h[(wg * n + a, uk)] = Complex64::from_polar(
                    cfg.amplitude_coefficient / d,
                    TAU * d / cfg.wavelength,
                );
            }
        }
    }
    ChannelMatrix::new(h, m, n)
}

/// Effective per-waveguide channel `W_PB^H H`: column `k` is what user `k`
/// sees at the waveguide inputs once the pinching stage is absorbed.
pub fn effective_channel(
    layout: &PinchLayout,
    users: &UserSet,
    cfg: &SystemConfig,
) -> Result<DMatrix<Complex64>> {
    let h = los_channel(layout, users, cfg)?;
    let w_pb = pinching_beamformer(layout, cfg)?;
    Ok(w_pb.adjoint() * h.matrix())
}

/// Effective gain of waveguide `m` towards user `k` once the pinching stage is
/// absorbed into the channel:
///
/// `sum_n eta * exp(-j 2 pi (D_{k,m,n} + n_eff x_{m,n}) / lambda) / (sqrt(N) D_{k,m,n})`.
///
/// Computed directly from the scalar formula (not via the matrix factors); by
/// construction it must equal entry `m` of `h_k^H W_PB`.
pub fn effective_gain(
    layout: &PinchLayout,
    users: &UserSet,
    cfg: &SystemConfig,
    k: usize,
    m: usize,
) -> Complex64 {
    let user = &users.positions[k];
    let n = cfg.pas_per_waveguide;
    let scale = cfg.amplitude_coefficient / (n as f64).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        let x = layout.x(a, m);
        let d = pa_user_distance(x, m, user, cfg);
        let phase = -TAU * (d + cfg.effective_refractive_index * x) / cfg.wavelength;
        acc += Complex64::from_polar(scale / d, phase);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeasibleBox, SystemParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn guided_wavelength_reference_value() {
        let lg = guided_wavelength(0.01, 1.44).unwrap();
        assert_abs_diff_eq!(lg, 0.0069444, epsilon = 1e-7);
        assert!(guided_wavelength(0.01, 0.9).is_err());
        assert!(guided_wavelength(-0.01, 1.44).is_err());
    }

    #[test]
    fn propagation_response_half_guided_wavelength() {
        // One antenna at lambda_g / 2 out of N = 4: phase -pi, magnitude 1/2.
        let lambda_g = 0.007;
        let x = [lambda_g / 2.0, 0.0, 0.0, 0.0];
        let g = propagation_response(&x, lambda_g);
        assert_abs_diff_eq!(g[0].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn propagation_response_is_unit_norm() {
        let x = [0.1, 0.9, 2.3, 4.4, 7.7];
        let g = propagation_response(&x, 0.0069);
        assert_relative_eq!(g.norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn pa_user_distance_pythagorean_triple() {
        // Waveguide 1 sits at y = 2; offsets (1, 2, 2) -> distance 3.
        let cfg = SystemConfig::new(SystemParams {
            height: 2.0,
            waveguide_spacing: Some(2.0),
            ..SystemParams::default()
        })
        .unwrap();
        let user = Vector3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(pa_user_distance(2.0, 1, &user, &cfg), 3.0, epsilon = 1e-12);
    }

    fn unit_amplitude_config() -> SystemConfig {
        // Carrier chosen so the wavelength is exactly 1 m; unit amplitude and
        // 1 m height put a user at distance 1 -> channel entry 1 + 0j.
        SystemConfig::new(SystemParams {
            num_waveguides: 1,
            pas_per_waveguide: 1,
            num_users: 1,
            num_rf_chains: 1,
            carrier_frequency: 2.998e8,
            height: 1.0,
            amplitude_coefficient: Some(1.0),
            min_pa_spacing: Some(0.5),
            priorities: Some(vec![1.0]),
            ..SystemParams::default()
        })
        .unwrap()
    }

    #[test]
    fn los_channel_unit_distance_entry() {
        let cfg = unit_amplitude_config();
        let bounds = cfg.feasible_box();
        let layout = PinchLayout::new(dmatrix![2.0], &bounds).unwrap();
        let users = UserSet::new(vec![Vector3::new(2.0, 0.0, 0.0)]);
        let h = los_channel(&layout, &users, &cfg).unwrap();
        let e = h.entry(0, 0, 0);
        assert_abs_diff_eq!(e.re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn los_channel_rejects_zero_distance() {
        let cfg = SystemConfig::new(SystemParams {
            num_waveguides: 1,
            pas_per_waveguide: 1,
            num_users: 1,
            num_rf_chains: 1,
            height: 1.0,
            priorities: Some(vec![1.0]),
            ..SystemParams::default()
        })
        .unwrap();
        let layout = PinchLayout::new(dmatrix![2.0], &cfg.feasible_box()).unwrap();
        // Same x, same y, z raised to the waveguide height.
        let users = UserSet::new(vec![Vector3::new(2.0, 0.0, 1.0)]);
        assert!(matches!(
            los_channel(&layout, &users, &cfg),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn pinching_beamformer_is_block_diagonal_with_unit_columns() {
        let cfg = SystemConfig::new(SystemParams::default()).unwrap();
        let bounds = cfg.feasible_box();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = bounds.sample(&mut rng);
        let w = pinching_beamformer(&layout, &cfg).unwrap();
        let (m, n) = (cfg.num_waveguides, cfg.pas_per_waveguide);
        assert_eq!(w.shape(), (m * n, m));
        for c in 0..m {
            assert_relative_eq!(w.column(c).norm(), 1.0, max_relative = 1e-12);
            for r in 0..m * n {
                let inside = r >= c * n && r < (c + 1) * n;
                if !inside {
                    assert_eq!(w[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn pinching_beamformer_rejects_foreign_layout() {
        let cfg = SystemConfig::new(SystemParams::default()).unwrap();
        let wide = FeasibleBox::new(50.0, cfg.min_pa_spacing, 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Sampled against a longer waveguide; usually lands outside [0, 10].
        let layout = loop {
            let l = wide.sample(&mut rng);
            if !l.is_feasible(&cfg.feasible_box()) {
                break l;
            }
        };
        assert!(pinching_beamformer(&layout, &cfg).is_err());
    }

    #[test]
    fn effective_gain_single_antenna_closed_form() {
        let cfg = unit_amplitude_config();
        let layout = PinchLayout::new(dmatrix![0.0], &cfg.feasible_box()).unwrap();
        let users = UserSet::new(vec![Vector3::new(0.0, 0.0, 0.0)]);
        // x = 0 above the user: g = eta * exp(-j 2 pi D / lambda) / D with D = 1.
        let g = effective_gain(&layout, &users, &cfg, 0, 0);
        assert_abs_diff_eq!(g.re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn effective_gain_matches_factored_product() {
        // The scalar formula and the h^H W_PB product are independent routes to
        // the same quantity; they must agree to near machine precision.
        let cfg = SystemConfig::new(SystemParams::default()).unwrap();
        let bounds = cfg.feasible_box();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let layout = bounds.sample(&mut rng);
            let users = UserSet::sample(&cfg, 1000 + trial);
            let h = los_channel(&layout, &users, &cfg).unwrap();
            let wpb = pinching_beamformer(&layout, &cfg).unwrap();
            let product = h.matrix().adjoint() * &wpb; // K x M
            for k in 0..cfg.num_users {
                for m in 0..cfg.num_waveguides {
                    let direct = effective_gain(&layout, &users, &cfg, k, m);
                    let viamat = product[(k, m)];
                    assert_relative_eq!(direct.re, viamat.re, max_relative = 1e-12, epsilon = 1e-15);
                    assert_relative_eq!(direct.im, viamat.im, max_relative = 1e-12, epsilon = 1e-15);
                }
            }
        }
    }
}
