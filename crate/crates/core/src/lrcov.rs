//! Autocovariance surfaces and long-run covariance kernel estimators.
//!
//! For a sample `X_1, ..., X_N` with mean `X̄_N` the lag-`i` surface is
//!
//! ```text
//! γ̂_i(t,s) = N⁻¹ Σ_{j=i+1}^{N} (X_j(t) − X̄_N(t)) (X_{j−i}(s) − X̄_N(s))
//! ```
//!
//! (divisor `N` at every lag), and the long-run kernel is
//!
//! ```text
//! ĉ_N(t,s) = γ̂_0(t,s) + Σ_{i=1}^{N−1} K(i/h) (γ̂_i(t,s) + γ̂_i(s,t)).
//! ```
//!
//! Lags whose weight `K(i/h)` vanishes are never materialized. Lag surfaces
//! are computed in parallel and then summed in lag order, so the result does
//! not depend on the thread schedule.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fcurve::{FunctionalSample, Grid};

/// Relative tolerance used when a surface is claimed symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A discretized bivariate kernel `k(t_u, t_v)` on the grid lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    grid: Grid,
    values: Array2<f64>,
}

impl Surface {
    pub fn new(grid: Grid, values: Array2<f64>) -> Result<Self> {
        let t = grid.len();
        if values.dim() != (t, t) {
            return Err(Error::GridMismatch {
                left: t,
                right: values.nrows().max(values.ncols()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surface".into()));
        }
        Ok(Self { grid, values })
    }

    /// Like [`Surface::new`], but also verifies symmetry to [`SYMMETRY_TOL`].
    pub fn new_symmetric(grid: Grid, values: Array2<f64>) -> Result<Self> {
        let surf = Self::new(grid, values)?;
        let asym = surf.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidArgument(format!(
                "surface claimed symmetric but relative asymmetry is {asym:e}"
            )));
        }
        Ok(surf)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.len(), grid.len())),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let t = grid.points();
        Self::new(
            grid,
            Array2::from_shape_fn((grid.len(), grid.len()), |(u, v)| f(t[u], t[v])),
        )
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// `max |k(t,s) − k(s,t)| / max |k|` (0 for the zero surface).
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let diff = (&self.values - &self.values.t())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        diff / scale
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Quadrature of `∬ k(t,s)² dt ds`.
    pub fn l2_norm_sq(&self) -> f64 {
        let w = self.grid.weights();
        let mut acc = 0.0;
        for (u, row) in self.values.rows().into_iter().enumerate() {
            let inner: f64 = row.iter().zip(w.iter()).map(|(k, ws)| k * k * ws).sum();
            acc += w[u] * inner;
        }
        acc
    }

    /// Quadrature L2 distance `(∬ (k − other)²)^{1/2}`.
    pub fn l2_distance(&self, other: &Surface) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let diff = Surface {
            grid: self.grid,
            values: &self.values - &other.values,
        };
        Ok(diff.l2_norm_sq().sqrt())
    }

    /// Writes `T` rows of `T` comma-separated values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format_float(*v)))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub(crate) fn lincomb(a: f64, x: &Surface, b: f64, y: &Surface) -> Result<Surface> {
        x.grid.check_same(&y.grid)?;
        Ok(Surface {
            grid: x.grid,
            values: &x.values * a + &y.values * b,
        })
    }
}

pub(crate) fn format_float(v: f64) -> String {
    // Shortest round-trip representation.
    format!("{v:?}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("{other:?}")),
    }
}

/// Lag-weight function `K`. All shapes satisfy `K(0) = 1`, are bounded,
/// continuous on their support and vanish outside a finite interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightKernel {
    /// 1 on `|u| < 0.1`, `1.1 − |u|` on `[0.1, 1.1)`, 0 beyond.
    #[default]
    FlatTop,
    /// `1 − |u|` on `|u| < 1`.
    Bartlett,
    /// 1 on `|u| <= 1`.
    Truncated,
}

impl WeightKernel {
    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            WeightKernel::FlatTop => {
                if a < 0.1 {
                    1.0
                } else if a < 1.1 {
                    1.1 - a
                } else {
                    0.0
                }
            }
            WeightKernel::Bartlett => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            WeightKernel::Truncated => {
                if a <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Smallest `c` with `K(u) = 0` for all `|u| > c`.
    pub fn support(&self) -> f64 {
        match self {
            WeightKernel::FlatTop => 1.1,
            WeightKernel::Bartlett | WeightKernel::Truncated => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightKernel::FlatTop => "flat-top",
            WeightKernel::Bartlett => "bartlett",
            WeightKernel::Truncated => "truncated",
        }
    }
}

impl fmt::Display for WeightKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-top" | "flat_top" | "flattop" => Ok(WeightKernel::FlatTop),
            "bartlett" => Ok(WeightKernel::Bartlett),
            "truncated" => Ok(WeightKernel::Truncated),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

pub fn flat_top_kernel() -> WeightKernel {
    WeightKernel::FlatTop
}

/// Bandwidth rule; resolved to a value `h > 0` per sample size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// `h(N) = N^{1/3}`.
    #[default]
    CubeRoot,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(&self, n: usize) -> Result<f64> {
        let h = match *self {
            Bandwidth::CubeRoot => (n as f64).cbrt(),
            Bandwidth::Fixed(h) => h,
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}")));
        }
        Ok(h)
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::CubeRoot => f.write_str("cube-root"),
            Bandwidth::Fixed(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube-root" | "cube_root" | "cuberoot" => Ok(Bandwidth::CubeRoot),
            other => {
                let h: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad bandwidth {other:?}")))?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}")));
                }
                Ok(Bandwidth::Fixed(h))
            }
        }
    }
}

/// Unnormalized lag product `Σ_j x_j x_{j−lag}ᵀ` of centered rows.
fn lag_product(centered: &Array2<f64>, lag: usize) -> Array2<f64> {
    let n = centered.nrows();
    let lead = centered.slice(s![lag..n, ..]);
    let trail = centered.slice(s![0..n - lag, ..]);
    lead.t().dot(&trail)
}

/// Empirical autocovariance surface `γ̂_lag` (divisor `N`).
pub fn autocov_surface(s: &FunctionalSample, lag: usize) -> Result<Surface> {
    let n = s.len();
    if lag >= n {
        return Err(Error::InvalidLag { lag, n });
    }
    let centered = s.centered();
    let values = lag_product(&centered, lag) / n as f64;
    Ok(Surface {
        grid: s.grid(),
        values,
    })
}

/// Lag-0 centered covariance surface, the estimator for independent
/// curves.
pub fn iid_cov(s: &FunctionalSample) -> Surface {
    autocov_surface(s, 0).expect("lag 0 is valid for a nonempty sample")
}

/// Long-run covariance kernel `ĉ_N` with lag weights `K(i/h)`.
pub fn longrun_cov(s: &FunctionalSample, k: WeightKernel, bw: Bandwidth) -> Result<Surface> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let h = bw.resolve(n)?;
    longrun_cov_with_h(s, k, h)
}

pub(crate) fn longrun_cov_with_h(s: &FunctionalSample, k: WeightKernel, h: f64) -> Result<Surface> {
    let n = s.len();
    let centered = s.centered();
    let weighted_lags: Vec<(usize, f64)> = (1..n)
        .map(|i| (i, k.eval(i as f64 / h)))
        .filter(|&(_, w)| w != 0.0)
        .collect();

    let lag_terms: Vec<Array2<f64>> = weighted_lags
        .par_iter()
        .map(|&(i, w)| {
            let g = lag_product(&centered, i);
            (&g + &g.t()) * w
        })
        .collect();

    let mut acc = lag_product(&centered, 0);
    for term in &lag_terms {
        acc += term;
    }
    acc /= n as f64;
    // Symmetrize away rounding so the surface is symmetric to the last bit.
    let values = (&acc + &acc.t()) * 0.5;
    Surface::new(s.grid(), values)
}

/// Pooled kernel `d̂ = (1 − θ̂) ĉ_N + θ̂ ĉ*_M` with `θ̂ = N/(N+M)`.
///
/// With `dependent = false` both components are the lag-0 covariance.
pub fn pooled_longrun(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    k: WeightKernel,
    bw: Bandwidth,
    dependent: bool,
) -> Result<Surface> {
    Ok(pooled_longrun_audited(s1, s2, k, bw, dependent)?.surface)
}

/// The pooled kernel with the tuning values that produced it.
#[derive(Debug, Clone)]
pub struct PooledKernel {
    pub surface: Surface,
    pub theta: f64,
    /// Resolved bandwidths `(h, h*)`; `None` for the independent estimator.
    pub bandwidths: Option<(f64, f64)>,
}

pub fn pooled_longrun_audited(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    k: WeightKernel,
    bw: Bandwidth,
    dependent: bool,
) -> Result<PooledKernel> {
    s1.grid().check_same(&s2.grid())?;
    let (n, m) = (s1.len(), s2.len());
    let theta = n as f64 / (n + m) as f64;
    let (c1, c2, bandwidths) = if dependent {
        for len in [n, m] {
            if len < 2 {
                return Err(Error::InsufficientSample { needed: 2, got: len });
            }
        }
        let (h1, h2) = (bw.resolve(n)?, bw.resolve(m)?);
        let (c1, c2) = rayon::join(
            || longrun_cov_with_h(s1, k, h1),
            || longrun_cov_with_h(s2, k, h2),
        );
        (c1?, c2?, Some((h1, h2)))
    } else {
        (iid_cov(s1), iid_cov(s2), None)
    };
    let surface = Surface::lincomb(1.0 - theta, &c1, theta, &c2)?;
    Ok(PooledKernel {
        surface,
        theta,
        bandwidths,
    })
}
