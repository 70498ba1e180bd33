//! Basis projection of integral operators and a dense symmetric
//! eigensolver.
//!
//! The eigenproblem `∫ d(t,s) φ(s) ds = λ φ(t)` is reduced to `D φ = λ φ`
//! with `D_{kℓ} = ∬ d(t,s) e_k(t) e_ℓ(s) dt ds`. Eigenfunctions are
//! recovered as `Σ_ℓ φ_{m,ℓ} e_ℓ(t)`.

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::fcurve::{BasisSet, Curve};
use crate::lrcov::{csv_err, format_float, Surface};

/// Jacobi sweeps stop once the off-diagonal Frobenius norm falls below
/// this fraction of `‖D‖_F`.
pub const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 100;

/// Default cumulative-variance threshold for choosing `p`.
pub const DEFAULT_THRESHOLD: f64 = 0.85;

/// Matrix of basis coefficients `d_{kℓ}` of a surface.
#[derive(Debug, Clone)]
pub struct ProjectedOperator {
    pub basis: BasisSet,
    pub matrix: Array2<f64>,
}

/// `d_{kℓ} = ∬ surf(t,s) e_k(t) e_ℓ(s) dt ds` by iterated trapezoid
/// quadrature.
pub fn project_surface(surf: &Surface, basis: &BasisSet) -> Result<ProjectedOperator> {
    surf.grid().check_same(&basis.grid())?;
    let ew = basis.weighted();
    let matrix = ew.dot(surf.values()).dot(&ew.t());
    Ok(ProjectedOperator {
        basis: basis.clone(),
        matrix,
    })
}

/// Eigenpairs in descending eigenvalue order.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// Column `m` holds the basis coefficients of the `m`-th eigenfunction.
    pub eigenvectors: Array2<f64>,
    /// Row `m` holds the `m`-th eigenfunction on the grid.
    pub eigenfunctions: Array2<f64>,
    /// `max |D − Dᵀ|` of the matrix before symmetrization.
    pub asymmetry: f64,
    pub basis: BasisSet,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenfunction(&self, m: usize) -> Curve {
        Curve::new(self.basis.grid(), self.eigenfunctions.row(m).to_owned()).expect("finite")
    }

    /// Flips the sign of eigenpair `m`.
    pub fn flip_sign(&mut self, m: usize) {
        self.eigenvectors.column_mut(m).mapv_inplace(|v| -v);
        self.eigenfunctions.row_mut(m).mapv_inplace(|v| -v);
    }

    /// One row per eigenpair: `λ, φ_{m,1}, ..., φ_{m,K}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (m, lambda) in self.eigenvalues.iter().enumerate() {
            let column = self.eigenvectors.column(m);
            let row = std::iter::once(*lambda).chain(column.iter().copied());
            w.write_record(row.map(format_float)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[[i, j]] * a[[i, j]];
            }
        }
    }
    acc.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues (unsorted) and the matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn jacobi_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix".into()));
    }
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let norm = frobenius(&a);
    if norm == 0.0 {
        return Ok((Array1::zeros(n), v));
    }
    for _ in 0..MAX_SWEEPS {
        if off_diagonal(&a) <= JACOBI_TOL * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                // Rotation angle chosen to zero a[p][q]; the smaller root
                // keeps the rotation stable.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if off_diagonal(&a) > JACOBI_TOL * norm * 1e3 {
        return Err(Error::NonFinite("Jacobi iteration did not converge".into()));
    }
    Ok((a.diag().to_owned(), v))
}

/// Full spectral decomposition of the projected operator. The matrix is
/// symmetrized as `(D + Dᵀ)/2` first.
pub fn symmetric_eig(op: &ProjectedOperator) -> Result<EigenSystem> {
    let d = &op.matrix;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projected operator".into()));
    }
    let asymmetry = (d - &d.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sym = (d + &d.t()) * 0.5;
    let (values, vectors) = jacobi_eigen(&sym)?;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = Array2::zeros(vectors.dim());
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&vectors.column(src));
    }
    let eigenfunctions = eigenvectors.t().dot(op.basis.functions());
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        eigenfunctions,
        asymmetry,
        basis: op.basis.clone(),
    })
}

/// Smallest `p` whose leading eigenvalues explain at least `threshold` of
/// the total mass of the eigenvalues clipped at zero.
pub fn select_p(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        // Relative slack absorbs rounding in the cumulative sum.
        if acc >= threshold * total * (1.0 - 1e-12) {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}
