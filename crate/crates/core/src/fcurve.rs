//! Functional data model: equispaced grids on `[0, 1]`, curves sampled on
//! them, temporally ordered samples of curves, trapezoid quadrature and the
//! Fourier basis used by the eigensolver.
//!
//! Every curve of a sample lives on one shared [`Grid`]. A grid is fully
//! determined by its number of points, so grid comparison is a comparison
//! of lengths.

use std::f64::consts::{PI, SQRT_2};

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Default number of grid points for simulated curves.
pub const DEFAULT_GRID_LEN: usize = 100;

/// Default size of the Fourier basis.
pub const DEFAULT_BASIS_COUNT: usize = 49;

/// Equispaced grid `0, 1/(T-1), ..., 1` with `T >= 2` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    len: usize,
}

impl Grid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {len}"
            )));
        }
        Ok(Self { len })
    }

    /// Validates explicit abscissae: first 0, last 1, constant spacing to
    /// 1e-12.
    pub fn from_abscissae(points: &[f64]) -> Result<Self> {
        let grid = Self::new(points.len())?;
        for (i, &x) in points.iter().enumerate() {
            let want = grid.point(i);
            if !x.is_finite() || (x - want).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "abscissa {i} is {x}, expected {want} on an equispaced [0,1] grid"
                )));
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.len {
            1.0
        } else {
            i as f64 / (self.len - 1) as f64
        }
    }

    pub fn points(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.len, |i| self.point(i))
    }

    /// Trapezoid-rule weights: `h/2` at the endpoints, `h` inside.
    pub fn weights(&self) -> Array1<f64> {
        let h = self.spacing();
        let mut w = Array1::from_elem(self.len, h);
        w[0] = 0.5 * h;
        w[self.len - 1] = 0.5 * h;
        w
    }

    /// Trapezoid approximation of the integral over `[0, 1]`.
    pub fn integrate(&self, values: ArrayView1<'_, f64>) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let n = self.len;
        let inner: f64 = values.slice(ndarray::s![1..n - 1]).sum();
        self.spacing() * (inner + 0.5 * (values[0] + values[n - 1]))
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.len != other.len {
            return Err(Error::GridMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }
}

/// Equispaced grid with `len` points.
pub fn make_grid(len: usize) -> Result<Grid> {
    Grid::new(len)
}

/// One functional observation sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Array1<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                left: grid.len(),
                right: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().mapv(f))
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: Array1::zeros(grid.len()),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    /// Squared L2 norm under the trapezoid rule.
    pub fn norm_sq(&self) -> f64 {
        self.grid.integrate(self.values.mapv(|v| v * v).view())
    }
}

/// Trapezoid approximation of `∫₀¹ f(t) g(t) dt`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    Ok(weighted_dot(&f.grid.weights(), f.values.view(), g.values.view()))
}

pub(crate) fn weighted_dot(w: &Array1<f64>, f: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>) -> f64 {
    w.iter()
        .zip(f.iter().zip(g.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

/// Temporally ordered curves on one shared grid, stored row-wise
/// (`N × T`).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    data: Array2<f64>,
}

impl FunctionalSample {
    pub fn new(grid: Grid, data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InsufficientSample { needed: 1, got: 0 });
        }
        if data.ncols() != grid.len() {
            return Err(Error::GridMismatch {
                left: grid.len(),
                right: data.ncols(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample values".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn from_curves(curves: &[Curve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or(Error::InsufficientSample { needed: 1, got: 0 })?;
        let grid = first.grid;
        let mut data = Array2::zeros((curves.len(), grid.len()));
        for (mut row, c) in data.rows_mut().into_iter().zip(curves) {
            grid.check_same(&c.grid)?;
            row.assign(&c.values);
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of curves `N`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn curve(&self, i: usize) -> Curve {
        Curve {
            grid: self.grid,
            values: self.data.row(i).to_owned(),
        }
    }

    pub fn curves(&self) -> impl Iterator<Item = Curve> + '_ {
        (0..self.len()).map(|i| self.curve(i))
    }

    /// Adds `shift` to every curve.
    pub fn shifted_by(&self, shift: &Curve) -> Result<Self> {
        self.grid.check_same(&shift.grid)?;
        let data = &self.data + &shift.values.view().insert_axis(Axis(0));
        Ok(Self {
            grid: self.grid,
            data,
        })
    }

    /// Multiplies every curve by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            grid: self.grid,
            data: &self.data * k,
        }
    }

    pub(crate) fn centered(&self) -> Array2<f64> {
        let mean = self.mean_values();
        &self.data - &mean.insert_axis(Axis(0))
    }

    fn mean_values(&self) -> Array1<f64> {
        let n = self.len() as f64;
        self.data.sum_axis(Axis(0)) / n
    }
}

/// Pointwise average `X̄_N(t)` of the sample.
pub fn sample_mean(s: &FunctionalSample) -> Curve {
    Curve {
        grid: s.grid,
        values: s.mean_values(),
    }
}

/// Basis functions evaluated on a grid, one per row (`K × T`).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    grid: Grid,
    functions: Array2<f64>,
}

impl BasisSet {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn count(&self) -> usize {
        self.functions.nrows()
    }

    pub fn functions(&self) -> &Array2<f64> {
        &self.functions
    }

    pub fn function(&self, k: usize) -> Curve {
        Curve {
            grid: self.grid,
            values: self.functions.row(k).to_owned(),
        }
    }

    /// Rows pre-multiplied by the quadrature weights, so that
    /// `weighted() · x` gives the coefficient vector `⟨x, e_ℓ⟩`.
    pub(crate) fn weighted(&self) -> Array2<f64> {
        &self.functions * &self.grid.weights().insert_axis(Axis(0))
    }

    /// Coefficients `⟨x, e_ℓ⟩` of a curve.
    pub fn coefficients(&self, c: &Curve) -> Result<Array1<f64>> {
        self.grid.check_same(&c.grid)?;
        Ok(self.weighted().dot(&c.values))
    }

    /// Quadrature Gram matrix `⟨e_k, e_ℓ⟩`.
    pub fn gram(&self) -> Array2<f64> {
        self.weighted().dot(&self.functions.t())
    }
}

/// Fourier basis: `e_1 = 1`, then `√2 sin(2πkt)`, `√2 cos(2πkt)` for
/// `k = 1, 2, ...` until `count` functions are produced.
pub fn fourier_basis(grid: Grid, count: usize) -> Result<BasisSet> {
    if count < 1 {
        return Err(Error::InvalidArgument("basis count must be >= 1".into()));
    }
    let t = grid.points();
    let mut functions = Array2::zeros((count, grid.len()));
    for (idx, mut row) in functions.rows_mut().into_iter().enumerate() {
        if idx == 0 {
            row.fill(1.0);
            continue;
        }
        let freq = idx.div_ceil(2) as f64;
        let sine = idx % 2 == 1;
        for (v, &x) in row.iter_mut().zip(t.iter()) {
            let arg = 2.0 * PI * freq * x;
            *v = SQRT_2 * if sine { arg.sin() } else { arg.cos() };
        }
    }
    Ok(BasisSet { grid, functions })
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`; `xs` must be
/// increasing. Values outside the range are clamped to the end values.
pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (y0, y1) = (ys[j - 1], ys[j]);
    if x == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Linear interpolation onto another grid. Endpoints are carried over
/// exactly.
pub fn resample(c: &Curve, target: Grid) -> Curve {
    if c.grid == target {
        return c.clone();
    }
    let xs = c.grid.points();
    let ys = c.values.as_slice().expect("contiguous");
    let xs = xs.as_slice().expect("contiguous");
    let values = target.points().mapv(|x| interp_linear(xs, ys, x));
    Curve {
        grid: target,
        values,
    }
}

/// Resamples every curve of a sample.
pub fn resample_sample(s: &FunctionalSample, target: Grid) -> FunctionalSample {
    if s.grid == target {
        return s.clone();
    }
    let curves: Vec<Curve> = s.curves().map(|c| resample(&c, target)).collect();
    FunctionalSample::from_curves(&curves).expect("resampled curves share a grid")
}
