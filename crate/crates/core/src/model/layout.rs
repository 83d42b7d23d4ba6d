//! Antenna placement variables and the feasible-region arithmetic shared by the
//! position optimizers.

use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;

/// Box constraints for pinching-antenna positions: every coordinate lies in
/// `[0, length]` and neighbors on the same waveguide keep at least
/// `min_spacing` between them (columns sorted ascending).
#[derive(Clone, Debug)]
pub struct FeasibleBox {
    length: f64,
    min_spacing: f64,
    pas_per_waveguide: usize,
    waveguides: usize,
}

impl FeasibleBox {
    pub fn new(
        length: f64,
        min_spacing: f64,
        pas_per_waveguide: usize,
        waveguides: usize,
    ) -> Result<Self> {
        if !(length > 0.0) || !(min_spacing > 0.0) {
            return Err(Error::Config(
                "feasible box needs positive length and spacing".into(),
            ));
        }
        if pas_per_waveguide == 0 || waveguides == 0 {
            return Err(Error::Config("feasible box needs at least one antenna".into()));
        }
        // Conservative non-emptiness guarantee, with margin for the repair pass.
        if pas_per_waveguide as f64 * min_spacing > length {
            return Err(Error::Config(format!(
                "no feasible layout: {pas_per_waveguide} antennas at spacing {min_spacing} exceed length {length}"
            )));
        }
        Ok(Self {
            length,
            min_spacing,
            pas_per_waveguide,
            waveguides,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    pub fn pas_per_waveguide(&self) -> usize {
        self.pas_per_waveguide
    }

    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    /// Feasibility test: shape, exact bounds, and per-column ascending order
    /// with minimum spacing. The spacing comparison allows one picometer of
    /// slack: constructing a gap as `x + spacing` can round the difference
    /// one ulp below `spacing`, and rejecting such layouts would make the
    /// repair operation unable to ever satisfy this check.
    pub fn contains(&self, x: &DMatrix<f64>) -> bool {
        const SPACING_SLACK: f64 = 1e-12;
        if x.nrows() != self.pas_per_waveguide || x.ncols() != self.waveguides {
            return false;
        }
        for m in 0..self.waveguides {
            let col = x.column(m);
            for n in 0..self.pas_per_waveguide {
                let v = col[n];
                if !v.is_finite() || v < 0.0 || v > self.length {
                    return false;
                }
                if n > 0 && v - col[n - 1] < self.min_spacing - SPACING_SLACK {
                    return false;
                }
            }
        }
        true
    }

    /// Projects an arbitrary candidate into the feasible set, column by column:
    /// sort ascending, push neighbors apart front-to-back, pull the tail back
    /// under `length` if it overshot, clamp the head at zero and re-run the
    /// forward pass. Already-feasible inputs come back unchanged.
    pub fn repair(&self, mut x: DMatrix<f64>) -> PinchLayout {
        assert_eq!(x.nrows(), self.pas_per_waveguide, "candidate row count");
        assert_eq!(x.ncols(), self.waveguides, "candidate column count");
        let n = self.pas_per_waveguide;
        for m in 0..self.waveguides {
            let mut col: Vec<f64> = x.column(m).iter().copied().collect();
            for v in col.iter_mut() {
                if !v.is_finite() {
                    *v = 0.0;
                }
            }
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite positions"));
            forward_spacing(&mut col, self.min_spacing);
            if col[n - 1] > self.length {
                for (i, v) in col.iter_mut().enumerate() {
                    let cap = self.length - (n - 1 - i) as f64 * self.min_spacing;
                    if *v > cap {
                        *v = cap;
                    }
                }
            }
            if col[0] < 0.0 {
                col[0] = 0.0;
            }
            forward_spacing(&mut col, self.min_spacing);
            for (i, v) in col.iter().enumerate() {
                // The second forward pass can overshoot `length` by one ulp
                // when caps landed exactly on it; keep the bound exact and
                // let the spacing slack in `contains` absorb the difference.
                x[(i, m)] = v.clamp(0.0, self.length);
            }
        }
        debug_assert!(self.contains(&x));
        PinchLayout { positions: x }
    }

    /// Samples a feasible layout: per column, sort independent uniforms over
    /// `[0, length]` and repair the spacing.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PinchLayout {
        let x = DMatrix::from_fn(self.pas_per_waveguide, self.waveguides, |_, _| {
            rng.gen_range(0.0..=self.length)
        });
        self.repair(x)
    }
}

fn forward_spacing(col: &mut [f64], spacing: f64) {
    for i in 1..col.len() {
        let floor = col[i - 1] + spacing;
        if col[i] < floor {
            col[i] = floor;
        }
    }
}

/// Feasible antenna positions, stored as an `N x M` matrix whose column `m`
/// holds the sorted x-coordinates on waveguide `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PinchLayout {
    positions: DMatrix<f64>,
}

impl PinchLayout {
    /// Wraps a position matrix after checking feasibility against `bounds`.
    pub fn new(positions: DMatrix<f64>, bounds: &FeasibleBox) -> Result<Self> {
        if !bounds.contains(&positions) {
            return Err(Error::InfeasibleLayout(format!(
                "{}x{} candidate violates bounds [0, {}] or spacing {}",
                positions.nrows(),
                positions.ncols(),
                bounds.length(),
                bounds.min_spacing()
            )));
        }
        Ok(Self { positions })
    }

    /// Evenly spread default placement: antenna `n` of every waveguide sits at
    /// `(n + 1) L / (N + 1)`.
    pub fn uniform(bounds: &FeasibleBox) -> Self {
        let n = bounds.pas_per_waveguide();
        let x = DMatrix::from_fn(n, bounds.waveguides(), |i, _| {
            (i + 1) as f64 * bounds.length() / (n + 1) as f64
        });
        bounds.repair(x)
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn into_positions(self) -> DMatrix<f64> {
        self.positions
    }

    /// x-coordinate of antenna `n` on waveguide `m` (0-based).
    pub fn x(&self, n: usize, m: usize) -> f64 {
        self.positions[(n, m)]
    }

    pub fn is_feasible(&self, bounds: &FeasibleBox) -> bool {
        bounds.contains(&self.positions)
    }
}
