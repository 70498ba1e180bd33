//! Simulation of Gaussian functional errors: iid Brownian bridges and the
//! functional AR(1) recursion `ε_i = Ψ ε_{i−1} + B_i`, plus the `a·t(1−t)`
//! mean shift used under the alternative.
//!
//! All generators are pure functions of their inputs and an [`RngSeed`].

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fcurve::{Curve, FunctionalSample, Grid};
use crate::lrcov::Surface;

/// Burn-in iterations discarded by [`far1_sample`] by default.
pub const DEFAULT_BURN_IN: usize = 50;

/// Seed plus substream index. The same pair always yields the same
/// sequence, on any platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent generator for a named role within the same stream.
    pub fn child(&self, role: u64) -> RngSeed {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(role.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream: self.stream,
        }
    }

    pub fn with_stream(&self, stream: u64) -> RngSeed {
        RngSeed {
            seed: self.seed,
            stream,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Writes one Brownian bridge into `out`: `W` from cumulative normal
/// increments with variance equal to the grid spacing, then
/// `B(t) = W(t) − t W(1)`.
fn fill_bridge<R: Rng + ?Sized>(grid: Grid, t: &Array1<f64>, rng: &mut R, out: &mut [f64]) {
    let sd = grid.spacing().sqrt();
    let n = grid.len();
    out[0] = 0.0;
    for i in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        out[i] = out[i - 1] + sd * z;
    }
    let w1 = out[n - 1];
    for i in 1..n - 1 {
        out[i] -= t[i] * w1;
    }
    out[n - 1] = 0.0;
}

/// One Brownian bridge drawn from `rng`.
pub fn brownian_bridge_with<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Curve {
    let mut v = vec![0.0; grid.len()];
    fill_bridge(grid, &grid.points(), rng, &mut v);
    Curve::new(grid, Array1::from(v)).expect("finite bridge")
}

pub fn brownian_bridge(grid: Grid, seed: RngSeed) -> Curve {
    brownian_bridge_with(grid, &mut seed.rng())
}

/// `n` iid Brownian bridges.
pub fn bridge_sample_with<R: Rng + ?Sized>(grid: Grid, n: usize, rng: &mut R) -> Result<FunctionalSample> {
    if n == 0 {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    let t = grid.points();
    let mut data = Array2::zeros((n, grid.len()));
    for mut row in data.rows_mut() {
        fill_bridge(grid, &t, rng, row.as_slice_mut().expect("standard layout"));
    }
    FunctionalSample::new(grid, data)
}

pub fn bridge_sample(grid: Grid, n: usize, seed: RngSeed) -> Result<FunctionalSample> {
    bridge_sample_with(grid, n, &mut seed.rng())
}

/// `ψ(t,s) = exp(−(t²+s²)/2) / (4 ∫₀¹ exp(−x²) dx)` on the lattice.
pub fn gaussian_far1_kernel(grid: Grid) -> Surface {
    let fine = Grid::new(20_001).expect("valid grid");
    let integral = fine.integrate(fine.points().mapv(|x| (-x * x).exp()).view());
    let norm = 4.0 * integral;
    Surface::from_fn(grid, |t, s| (-(t * t + s * s) / 2.0).exp() / norm).expect("finite kernel")
}

/// Quadrature Hilbert-Schmidt norm `(∬ ψ²)^{1/2}`.
pub fn hilbert_schmidt_norm(kernel: &Surface) -> f64 {
    kernel.l2_norm_sq().sqrt()
}

#[derive(Debug, Clone)]
pub struct Far1Config {
    pub kernel: Surface,
    pub burn_in: usize,
}

impl Far1Config {
    pub fn new(kernel: Surface) -> Self {
        Self {
            kernel,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// The Gaussian kernel with default burn-in.
    pub fn gaussian(grid: Grid) -> Self {
        Self::new(gaussian_far1_kernel(grid))
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }
}

/// `n` curves of the FAR(1) recursion with Brownian-bridge innovations,
/// started from zero; the first `burn_in` iterates are discarded.
pub fn far1_sample_with<R: Rng + ?Sized>(n: usize, cfg: &Far1Config, rng: &mut R) -> Result<FunctionalSample> {
    if n == 0 {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    let norm = hilbert_schmidt_norm(&cfg.kernel);
    if norm >= 1.0 {
        return Err(Error::NonstationaryKernel { norm });
    }
    let grid = cfg.kernel.grid();
    let t = grid.points();
    // Quadrature weights folded into the columns: (Ψx)(t_u) = Σ_v ψ(t_u,t_v) w_v x_v.
    let op = cfg.kernel.values() * &grid.weights().insert_axis(Axis(0));
    let mut prev = Array1::<f64>::zeros(grid.len());
    let mut innovation = vec![0.0; grid.len()];
    let mut data = Array2::zeros((n, grid.len()));
    for k in 0..cfg.burn_in + n {
        fill_bridge(grid, &t, rng, &mut innovation);
        let mut next = op.dot(&prev);
        for (v, b) in next.iter_mut().zip(&innovation) {
            *v += b;
        }
        if k >= cfg.burn_in {
            data.row_mut(k - cfg.burn_in).assign(&next);
        }
        prev = next;
    }
    FunctionalSample::new(grid, data)
}

pub fn far1_sample(n: usize, cfg: &Far1Config, seed: RngSeed) -> Result<FunctionalSample> {
    far1_sample_with(n, cfg, &mut seed.rng())
}

/// Adds `a·t(1−t)` to every curve.
pub fn add_alternative_mean(s: &FunctionalSample, a: f64) -> FunctionalSample {
    let shift = Curve::from_fn(s.grid(), |t| a * t * (1.0 - t)).expect("finite shift");
    s.shifted_by(&shift).expect("same grid")
}
