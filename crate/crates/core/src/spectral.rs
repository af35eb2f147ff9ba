//! Dense eigendecomposition oracle for small graphs.
//!
//! Everything here is `O(n³)` and exists to check the sparse polynomial
//! machinery against the exact spectral definition of a graph filter.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Default dimension cap for [`eigendecompose`].
pub const DEFAULT_ORACLE_CAP: usize = 512;

/// Largest point count accepted by [`fit_vandermonde`]; monomial
/// Vandermonde systems are badly conditioned beyond this.
pub const VANDERMONDE_MAX_POINTS: usize = 8;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }

    /// Eigenvalues as a comma-separated line.
    pub fn values_csv(&self) -> String {
        self.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Stops when the off-diagonal Frobenius norm falls below `1e-12 ‖M‖_F`.
/// Each eigenvector is signed so its first non-negligible component is positive.
pub fn eigendecompose(m: &ArrayView2<f64>, cap: usize) -> Result<EigenSystem> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::shape(format!("eigendecomposition needs a square matrix, got {rows}x{cols}")));
    }
    let n = rows;
    if n > cap {
        return Err(Error::OracleTooLarge { n, cap });
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = m.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * norm;

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
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
    if off_diagonal_norm(&a) > tol {
        log::warn!("Jacobi eigensolver hit the sweep cap before converging");
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
        vectors.column_mut(dst).assign(&col);
    }
    Ok(EigenSystem { values, vectors })
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for ((i, j), x) in a.indexed_iter() {
        if i != j {
            s += x * x;
        }
    }
    s.sqrt()
}

/// `Uᵀ x`.
pub fn graph_fourier(es: &EigenSystem, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(es, x.len())?;
    Ok(es.vectors.t().dot(x))
}

/// `U x̂`.
pub fn inverse_graph_fourier(es: &EigenSystem, xhat: &ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(es, xhat.len())?;
    Ok(es.vectors.dot(xhat))
}

fn check_len(es: &EigenSystem, len: usize) -> Result<()> {
    if len != es.dim() {
        return Err(Error::shape(format!("signal length {len} for eigensystem of size {}", es.dim())));
    }
    Ok(())
}

/// `U diag(response(λ)) Uᵀ X`.
pub fn apply_filter_spectral<F>(es: &EigenSystem, response: F, x: &ArrayView2<f64>) -> Result<Array2<f64>>
where
    F: Fn(f64) -> f64,
{
    if x.nrows() != es.dim() {
        return Err(Error::shape(format!("{} rows for eigensystem of size {}", x.nrows(), es.dim())));
    }
    let mut spectral = es.vectors.t().dot(x);
    for (mut row, &lambda) in spectral.rows_mut().into_iter().zip(es.values.iter()) {
        let h = response(lambda);
        row.mapv_inplace(|v| v * h);
    }
    Ok(es.vectors.dot(&spectral))
}

/// Dense matrix of the filter `U diag(response(λ)) Uᵀ`.
pub fn filter_matrix<F>(es: &EigenSystem, response: F) -> Array2<f64>
where
    F: Fn(f64) -> f64,
{
    let h = es.values.mapv(response);
    let scaled = &es.vectors * &h.view().insert_axis(Axis(0));
    scaled.dot(&es.vectors.t())
}

/// Monomial coefficients `ζ` with `Σ_k ζ_k λ^k ≈ target`, of order `order`.
///
/// Exact interpolation when `order + 1` equals the number of points,
/// least squares (Householder QR) otherwise.
pub fn fit_vandermonde(nodes: &[f64], targets: &[f64], order: usize) -> Result<Vec<f64>> {
    let n = nodes.len();
    if targets.len() != n {
        return Err(Error::shape(format!("{n} nodes but {} targets", targets.len())));
    }
    if n > VANDERMONDE_MAX_POINTS {
        return Err(Error::param(format!(
            "Vandermonde fit limited to {VANDERMONDE_MAX_POINTS} points (got {n}); the system is ill-conditioned beyond that"
        )));
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if (w[1] - w[0]).abs() <= 1e-12 {
            return Err(Error::SingularVandermonde(w[0], w[1]));
        }
    }
    let cols = order + 1;
    if cols > n {
        return Err(Error::param(format!("order {order} needs at least {cols} distinct nodes, got {n}")));
    }
    let mut a = Array2::from_shape_fn((n, cols), |(i, k)| nodes[i].powi(k as i32));
    let mut b = Array1::from(targets.to_vec());
    householder_least_squares(&mut a, &mut b)
}

/// Solves `min ‖A x - b‖` for full-column-rank `A`, destroying both inputs.
fn householder_least_squares(a: &mut Array2<f64>, b: &mut Array1<f64>) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    for k in 0..n {
        let norm = (k..m).map(|i| a[[i, k]] * a[[i, k]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::param("rank-deficient Vandermonde system"));
        }
        let alpha = if a[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * a[[i, j]]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    a[[i, j]] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                b[i] -= f * v[i - k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| a[[k, j]] * x[j]).sum();
        x[k] = (b[k] - s) / a[[k, k]];
    }
    Ok(x)
}
