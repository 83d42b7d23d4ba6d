//! SINR, weighted sum-rate and energy-efficiency evaluation.

use super::ChannelMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Per-user SINR under a composite `MN x K` beamformer (column `k` serves user
/// `k`): `|h_k^H w_k|^2 / (sum_{i != k} |h_k^H w_i|^2 + noise_k)`.
pub fn sinr(channel: &ChannelMatrix, composite: &DMatrix<Complex64>, noise_mw: &[f64]) -> Vec<f64> {
    let k = channel.num_users();
    assert_eq!(composite.ncols(), k, "one beamformer column per user");
    assert_eq!(composite.nrows(), channel.matrix().nrows());
    assert_eq!(noise_mw.len(), k);
    let coupling = channel.matrix().adjoint() * composite; // K x K
    (0..k)
        .map(|u| {
            let signal = coupling[(u, u)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&i| i != u)
                .map(|i| coupling[(u, i)].norm_sqr())
                .sum();
            signal / (interference + noise_mw[u])
        })
        .collect()
}

/// Weighted sum-rate `sum_k beta_k log2(1 + sinr_k)` in bits/s/Hz.
pub fn wsr(sinr: &[f64], priorities: &[f64]) -> f64 {
    assert_eq!(sinr.len(), priorities.len());
    sinr.iter()
        .zip(priorities)
        .map(|(&g, &b)| b * (1.0 + g).log2())
        .sum()
}

/// Static power draw of the hardware components, in watts.
#[derive(Clone, Copy, Debug)]
pub struct ComponentPowers {
    /// Radiated power budget P.
    pub transmit_w: f64,
    /// Per RF chain.
    pub rf_chain_w: f64,
    /// Per phase shifter.
    pub phase_shifter_w: f64,
    /// Per pinching-antenna amplifier.
    pub pa_amplifier_w: f64,
}

impl Default for ComponentPowers {
    fn default() -> Self {
        Self {
            transmit_w: 0.1,
            rf_chain_w: 0.4,
            phase_shifter_w: 0.01,
            pa_amplifier_w: 0.1,
        }
    }
}

/// How many of each component a given architecture instantiates.
#[derive(Clone, Copy, Debug)]
pub struct ComponentCounts {
    pub rf_chains: usize,
    pub phase_shifters: usize,
    pub pa_amplifiers: usize,
}

impl ComponentCounts {
    /// Fully-connected tri-hybrid transmitter: `N_RF` chains, a full
    /// `N_RF x M` phase-shifter mesh, one amplifier per antenna.
    pub fn fully_connected(num_rf_chains: usize, waveguides: usize, pas_per_waveguide: usize) -> Self {
        Self {
            rf_chains: num_rf_chains,
            phase_shifters: num_rf_chains * waveguides,
            pa_amplifiers: waveguides * pas_per_waveguide,
        }
    }

    /// Sub-connected transmitter: one chain hard-wired per waveguide, no
    /// phase-shifter mesh.
    pub fn sub_connected(waveguides: usize, pas_per_waveguide: usize) -> Self {
        Self {
            rf_chains: waveguides,
            phase_shifters: 0,
            pa_amplifiers: waveguides * pas_per_waveguide,
        }
    }

    /// Partially-connected hybrid massive MIMO with `M` chains over `MN`
    /// antennas: one phase shifter and one amplifier per antenna.
    pub fn mimo(waveguides: usize, pas_per_waveguide: usize) -> Self {
        let antennas = waveguides * pas_per_waveguide;
        Self {
            rf_chains: waveguides,
            phase_shifters: antennas,
            pa_amplifiers: antennas,
        }
    }
}

/// Energy efficiency in bits/s/Hz per watt: rate divided by the total power
/// `P + N_RF P_RF + N_PS P_PS + N_PA P_PA`.
pub fn energy_efficiency(rate: f64, counts: &ComponentCounts, powers: &ComponentPowers) -> f64 {
    let total = powers.transmit_w
        + counts.rf_chains as f64 * powers.rf_chain_w
        + counts.phase_shifters as f64 * powers.phase_shifter_w
        + counts.pa_amplifiers as f64 * powers.pa_amplifier_w;
    rate / total
}

/// Bundle of the evaluation outputs for one beamforming solution.
#[derive(Clone, Debug)]
pub struct Metrics {
    pub per_user_sinr: Vec<f64>,
    pub wsr: f64,
    pub energy_efficiency: f64,
}

impl Metrics {
    pub fn compute(
        channel: &ChannelMatrix,
        composite: &DMatrix<Complex64>,
        noise_mw: &[f64],
        priorities: &[f64],
        counts: &ComponentCounts,
        powers: &ComponentPowers,
    ) -> Self {
        let per_user_sinr = sinr(channel, composite, noise_mw);
        let rate = wsr(&per_user_sinr, priorities);
        Self {
            per_user_sinr,
            wsr: rate,
            energy_efficiency: energy_efficiency(rate, counts, powers),
        }
    }
}
