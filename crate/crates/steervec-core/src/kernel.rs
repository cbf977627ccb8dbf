//! Linear-algebra primitives behind everything else: full SVD, spectral norm,
//! symmetric inverse square root, and SPD solves. The SVD and symmetric
//! eigendecompositions go through LAPACK; Cholesky factorizations are local
//! because the objective's log-det contract is phrased in terms of its pivots.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, SVD, UPLO};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Full SVD of a d×N matrix: H = Q·Σ·Wᵀ with Q d×d, W N×N, σ non-increasing.
/// `rank` counts singular values strictly above `rank_tol(d, N, σ_max)`.
#[derive(Debug, Clone)]
pub struct SvdBundle {
    pub q: Matrix,
    pub sigma: Vec<f64>,
    pub w: Matrix,
    pub rank: usize,
}

/// Conservative numerical-rank threshold: max(d,N)·ε·σ_max (0 for σ_max = 0).
pub fn rank_tol(d: usize, n: usize, sigma_max: f64) -> f64 {
    d.max(n) as f64 * f64::EPSILON * sigma_max
}

pub fn svd_full(h: &Matrix) -> Result<SvdBundle> {
    let (d, n) = (h.rows(), h.cols());
    if d < n {
        return Err(Error::Dimension(format!("svd_full needs d >= N, got {d}x{n}")));
    }
    let (q, s, wt) = h
        .as_array()
        .svd(true, true)
        .map_err(|e| Error::Numeric(format!("svd failed to converge: {e}")))?;
    let q = q.expect("svd(true, true) returns U");
    let wt = wt.expect("svd(true, true) returns Vt");
    let sigma: Vec<f64> = s.to_vec();
    let tol = rank_tol(d, n, sigma.first().copied().unwrap_or(0.0));
    let rank = sigma.iter().filter(|&&x| x > tol).count();
    Ok(SvdBundle {
        q: Matrix::from_array(q)?,
        sigma,
        w: Matrix::from_array(wt.t().to_owned())?,
        rank,
    })
}

/// Largest singular value, via the Gram matrix on the smaller side.
pub fn spectral_norm(h: &Matrix) -> Result<f64> {
    Ok(spectral_norm_arr(h.as_array())?)
}

pub(crate) fn spectral_norm_arr(h: &Array2<f64>) -> Result<f64> {
    let (d, n) = h.dim();
    let gram = if d >= n { h.t().dot(h) } else { h.dot(&h.t()) };
    let (eigs, _) = eigh_ascending(&gram)?;
    Ok(eigs[eigs.len() - 1].max(0.0).sqrt())
}

/// B with B·A·B = I for symmetric A whose eigenvalues all sit above `floor`.
pub fn sym_inv_sqrt(a: &Matrix, floor: f64) -> Result<Matrix> {
    let arr = a.as_array();
    if arr.nrows() != arr.ncols() {
        return Err(Error::Dimension(format!(
            "sym_inv_sqrt needs a square matrix, got {}x{}",
            arr.nrows(),
            arr.ncols()
        )));
    }
    let norm: f64 = arr.iter().map(|x| x * x).sum::<f64>().sqrt();
    let asym: f64 = (arr - &arr.t()).iter().map(|x| x * x).sum::<f64>().sqrt();
    if asym > 1e-10 * norm {
        return Err(Error::NotSymmetric);
    }
    Matrix::from_array(sym_inv_sqrt_arr(arr, floor)?)
}

pub(crate) fn sym_inv_sqrt_arr(a: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    if !(floor > 0.0) {
        return Err(Error::Config(format!("sym_inv_sqrt floor must be positive, got {floor}")));
    }
    let (eigs, z) = eigh_ascending(a)?;
    if eigs[0] < floor {
        return Err(Error::NotPositiveDefinite);
    }
    // B = Z·diag(λ^{-1/2})·Zᵀ
    let n = a.nrows();
    let mut scaled = z.clone();
    for j in 0..n {
        let s = 1.0 / eigs[j].sqrt();
        for i in 0..n {
            scaled[[i, j]] *= s;
        }
    }
    Ok(scaled.dot(&z.t()))
}

/// X with A·X = B for SPD A (N×N) and B (N×k).
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!("solve_spd needs square A, got {}x{}", a.rows(), a.cols())));
    }
    if a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "solve_spd shape mismatch: A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let l = cholesky_lower(a.as_array()).ok_or(Error::NotPositiveDefinite)?;
    Matrix::from_array(chol_solve(&l, b.as_array()))
}

/// Lower Cholesky factor, or None on a non-positive pivot.
pub(crate) fn cholesky_lower(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return None;
        }
        let dj = diag.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / dj;
        }
    }
    Some(l)
}

/// Solves L·Lᵀ·X = B given the lower factor L.
pub(crate) fn chol_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let k = b.ncols();
    let mut x = b.to_owned();
    for i in 0..n {
        for c in 0..k {
            let mut v = x[[i, c]];
            for j in 0..i {
                v -= l[[i, j]] * x[[j, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
    }
    for i in (0..n).rev() {
        for c in 0..k {
            let mut v = x[[i, c]];
            for j in (i + 1)..n {
                v -= l[[j, i]] * x[[j, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
    }
    x
}

/// −log det(PᵀP) as −2·Σ log(Cholesky pivots); SingularPoint on a non-PD Gram.
pub(crate) fn gram_neg_logdet(p: &Array2<f64>) -> Result<f64> {
    let gram = p.t().dot(p);
    let n = gram.nrows();
    let mut l = gram;
    let mut acc = 0.0;
    for j in 0..n {
        let mut diag = l[[j, j]];
        for k in 0..j {
            let v = l[[j, k]];
            diag -= v * v;
        }
        if !(diag > 0.0) {
            return Err(Error::SingularPoint);
        }
        let dj = diag.sqrt();
        acc += dj.ln();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut v = l[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / dj;
        }
    }
    Ok(-2.0 * acc)
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub(crate) fn eigh_ascending(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|e| Error::Numeric(format!("symmetric eigendecomposition failed: {e}")))
}
