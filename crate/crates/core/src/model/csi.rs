//! Imperfect-CSI modeling: additive circularly-symmetric Gaussian perturbation.

use super::ChannelMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Returns `H + dH` where the entries of `dH` are i.i.d. complex Gaussian with
/// variance `eps = eps_scale * ||H||_F / (MN K)`. `eps_scale = 0` reproduces
/// the input exactly; the draw is deterministic for a given seed.
pub fn perturb_channel(channel: &ChannelMatrix, eps_scale: f64, seed: u64) -> ChannelMatrix {
    assert!(eps_scale >= 0.0, "eps_scale must be non-negative");
    let h = channel.matrix();
    if eps_scale == 0.0 {
        return channel.clone();
    }
    let entries = (h.nrows() * h.ncols()) as f64;
    let eps = eps_scale * h.norm() / entries;
    // Complex variance eps means each real component has variance eps / 2.
    let component = Normal::new(0.0, (eps / 2.0).sqrt()).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        h[(i, j)] + Complex64::new(component.sample(&mut rng), component.sample(&mut rng))
    });
    ChannelMatrix::new(noisy, channel.waveguides(), channel.pas_per_waveguide())
        .expect("shape unchanged")
}
