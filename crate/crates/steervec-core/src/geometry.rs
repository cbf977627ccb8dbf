//! The scaled Stiefel manifold St(d,N,α) = {V : VᵀV = αI}, the volume
//! objective ℓ(V) = −log det((H+V)ᵀ(H+V)), its gradients, the polar
//! retraction, and the null-space initializer.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{self, rank_tol};
use crate::matrix::Matrix;

/// Feasibility tolerance for ‖VᵀV − αI‖_F; scales with α·N so checks are
/// magnitude-invariant.
pub fn feas_tol(alpha: f64, n: usize) -> f64 {
    1e-8 * alpha * n as f64
}

/// Problem instance: activation matrix H (d×N) and squared steering magnitude α.
#[derive(Debug, Clone)]
pub struct SteerProblem {
    h: Matrix,
    alpha: f64,
}

impl SteerProblem {
    pub fn new(h: Matrix, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")));
        }
        if h.rows() < h.cols() {
            return Err(Error::Dimension(format!(
                "St(d,N,alpha) is empty for d < N: got d={}, N={}",
                h.rows(),
                h.cols()
            )));
        }
        Ok(SteerProblem { h, alpha })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn n_paths(&self) -> usize {
        self.h.cols()
    }
}

/// A point on St(d,N,α). Construction checks ‖VᵀV − αI‖_F ≤ feas_tol.
#[derive(Debug, Clone)]
pub struct StiefelPoint {
    v: Array2<f64>,
    alpha: f64,
}

impl StiefelPoint {
    pub fn new(v: Matrix, alpha: f64) -> Result<Self> {
        Self::from_array(v.into_array(), alpha)
    }

    pub(crate) fn from_array(v: Array2<f64>, alpha: f64) -> Result<Self> {
        let resid = feasibility_residual(&v, alpha);
        let tol = feas_tol(alpha, v.ncols());
        if resid > tol {
            return Err(Error::Dimension(format!(
                "not a feasible Stiefel point: ||VtV - alpha I||_F = {resid:e} > {tol:e}"
            )));
        }
        Ok(StiefelPoint { v, alpha })
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_array(self.v.clone()).expect("feasible point entries are finite")
    }
}

pub(crate) fn feasibility_residual(v: &Array2<f64>, alpha: f64) -> f64 {
    let gram = v.t().dot(v);
    let n = gram.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = gram[[i, j]] - if i == j { alpha } else { 0.0 };
            acc += e * e;
        }
    }
    acc.sqrt()
}

/// A tangent direction at V: VᵀU + UᵀV = 0 (within a scale-aware tolerance).
#[derive(Debug, Clone)]
pub struct TangentVector {
    u: Array2<f64>,
}

impl TangentVector {
    pub fn new(at: &StiefelPoint, u: Matrix) -> Result<Self> {
        let u = u.into_array();
        let resid = tangency_residual(at.as_array(), &u);
        let vnorm = frob(at.as_array());
        let unorm = frob(&u);
        if resid > 1e-8 * (vnorm * unorm + 1.0) {
            return Err(Error::Dimension(format!("not tangent: ||VtU + UtV||_F = {resid:e}")));
        }
        Ok(TangentVector { u })
    }

    pub(crate) fn from_array_unchecked(u: Array2<f64>) -> Self {
        TangentVector { u }
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn norm(&self) -> f64 {
        frob(&self.u)
    }

    /// Scalar multiples preserve the tangency identity exactly.
    pub fn scaled(&self, t: f64) -> TangentVector {
        TangentVector { u: &self.u * t }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_array(self.u.clone()).expect("tangent entries are finite")
    }
}

fn tangency_residual(v: &Array2<f64>, u: &Array2<f64>) -> f64 {
    let vtu = v.t().dot(u);
    let n = vtu.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = vtu[[i, j]] + vtu[[j, i]];
            acc += e * e;
        }
    }
    acc.sqrt()
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Initialization output: V0 orthogonal to col(H), plus the singular data of H
/// (σ non-increasing, right basis W, numerical rank) that the one-step solver
/// consumes. `selected_cols` records which null-basis columns were drawn.
#[derive(Debug, Clone)]
pub struct InitBundle {
    pub v0: StiefelPoint,
    pub sigma: Vec<f64>,
    pub w: Matrix,
    pub rank: usize,
    pub selected_cols: Vec<usize>,
}

/// α = C·‖H‖₂² (squared spectral norm).
pub fn compute_alpha(h: &Matrix, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Config(format!("scaling constant C must be positive, got {c}")));
    }
    let s = kernel::spectral_norm(h)?;
    if s == 0.0 {
        return Err(Error::DegenerateInput("zero activation matrix gives alpha = 0".into()));
    }
    Ok(c * s * s)
}

/// ℓ(V) = −log det((H+V)ᵀ(H+V)) via Cholesky pivots of the N×N Gram matrix.
pub fn objective(problem: &SteerProblem, v: &StiefelPoint) -> Result<f64> {
    objective_raw(problem, v.as_array())
}

/// Same loss at an arbitrary (not necessarily feasible) V; used by
/// finite-difference checks. Finite iff H+V has full column rank.
pub fn objective_at(problem: &SteerProblem, v: &Matrix) -> Result<f64> {
    objective_raw(problem, v.as_array())
}

pub(crate) fn objective_raw(problem: &SteerProblem, v: &Array2<f64>) -> Result<f64> {
    if v.dim() != problem.h.as_array().dim() {
        return Err(Error::Dimension(format!(
            "V must be {}x{}, got {}x{}",
            problem.dim(),
            problem.n_paths(),
            v.nrows(),
            v.ncols()
        )));
    }
    let p = problem.h.as_array() + v;
    kernel::gram_neg_logdet(&p)
}

/// ∇ℓ(V) = −2(H+V)·A⁻¹ with A = (H+V)ᵀ(H+V); the inverse is applied through
/// a Cholesky solve, never formed.
pub fn euclidean_grad(problem: &SteerProblem, v: &StiefelPoint) -> Result<Matrix> {
    Matrix::from_array(euclidean_grad_raw(problem, v.as_array())?)
}

pub(crate) fn euclidean_grad_raw(problem: &SteerProblem, v: &Array2<f64>) -> Result<Array2<f64>> {
    let p = problem.h.as_array() + v;
    let gram = p.t().dot(&p);
    let l = kernel::cholesky_lower(&gram).ok_or(Error::SingularPoint)?;
    let x = kernel::chol_solve(&l, &Array2::eye(gram.nrows()));
    Ok(p.dot(&x) * -2.0)
}

/// Proj_V(U) = U − V(VᵀU + UᵀV)/(2α).
pub fn tangent_project(v: &StiefelPoint, u: &Matrix) -> Result<TangentVector> {
    if u.rows() != v.v.nrows() || u.cols() != v.v.ncols() {
        return Err(Error::Dimension(format!(
            "U must be {}x{}, got {}x{}",
            v.v.nrows(),
            v.v.ncols(),
            u.rows(),
            u.cols()
        )));
    }
    Ok(tangent_project_raw(v, u.as_array()))
}

pub(crate) fn tangent_project_raw(v: &StiefelPoint, u: &Array2<f64>) -> TangentVector {
    let vtu = v.v.t().dot(u);
    let sym = (&vtu + &vtu.t()) / (2.0 * v.alpha);
    TangentVector::from_array_unchecked(u - &v.v.dot(&sym))
}

/// grad ℓ(V) = Proj_V(∇ℓ(V)).
pub fn riemannian_grad(problem: &SteerProblem, v: &StiefelPoint) -> Result<TangentVector> {
    let egrad = euclidean_grad_raw(problem, v.as_array())?;
    Ok(tangent_project_raw(v, &egrad))
}

/// R_V(U) = √α·(V+U)·(αI + UᵀU)^{-1/2}.
///
/// The normalizer is computed as the actual Gram (V+U)ᵀ(V+U), which equals
/// αI + UᵀU for exact inputs but additionally absorbs the feasibility drift
/// of V and the tangency rounding of U. With the literal αI + UᵀU form those
/// errors are amplified by large steps and compound across iterations.
pub fn polar_retract(v: &StiefelPoint, u: &TangentVector) -> Result<StiefelPoint> {
    let alpha = v.alpha;
    let stepped = &v.v + &u.u;
    let m = stepped.t().dot(&stepped);
    // (V+U)ᵀ(V+U) = αI + UᵀU ⪰ αI up to rounding, so α/2 is a safe floor.
    let b = kernel::sym_inv_sqrt_arr(&m, alpha / 2.0)?;
    StiefelPoint::from_array(stepped.dot(&b) * alpha.sqrt(), alpha)
}

/// Draws V0 = √α·[N columns of an orthonormal basis of null(Hᵀ)], sampled
/// uniformly without replacement with a seeded generator, and returns it with
/// the singular data (σ, W, rank) of H.
///
/// The null basis comes from Householder reflectors of U₁ = H·W₁·Σ₁⁻¹, so only
/// the N sampled columns are ever materialized. Any orthonormal null basis
/// yields the same Gram identity (H+V0)ᵀ(H+V0) = HᵀH + αI and the same
/// objective value; downstream consumers depend only on those invariants.
pub fn init_v0(problem: &SteerProblem, rng_seed: u64) -> Result<InitBundle> {
    let h = problem.h.as_array();
    let (d, n) = h.dim();
    let alpha = problem.alpha;

    // Singular data through the N×N Gram eigendecomposition: HᵀH = W·Σ²·Wᵀ.
    let gram = h.t().dot(h);
    let (eigs, z) = kernel::eigh_ascending(&gram)?;
    let mut sigma = vec![0.0; n];
    let mut w = Array2::zeros((n, n));
    for j in 0..n {
        let src = n - 1 - j;
        sigma[j] = eigs[src].max(0.0).sqrt();
        for i in 0..n {
            w[[i, j]] = z[[i, src]];
        }
    }
    let tol = rank_tol(d, n, sigma[0]);
    let rank = sigma.iter().filter(|&&s| s > tol).count();
    if d < rank + n {
        return Err(Error::InsufficientDimension { d, r: rank, n });
    }

    // Orthonormal column basis U₁ = H·W₁·Σ₁⁻¹ (empty when rank = 0).
    let mut u1 = Array2::zeros((d, rank));
    if rank > 0 {
        let w1 = w.slice(ndarray::s![.., ..rank]);
        let hw = h.dot(&w1);
        for j in 0..rank {
            let inv = 1.0 / sigma[j];
            for i in 0..d {
                u1[[i, j]] = hw[[i, j]] * inv;
            }
        }
    }
    let refl = Reflectors::from_orthonormal(&u1);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let selected_cols: Vec<usize> = rand::seq::index::sample(&mut rng, d - rank, n).into_iter().collect();

    let sqrt_alpha = alpha.sqrt();
    let mut v0 = Array2::zeros((d, n));
    let mut col = Array1::zeros(d);
    for (j, &i) in selected_cols.iter().enumerate() {
        refl.q_column(rank + i, &mut col);
        for row in 0..d {
            v0[[row, j]] = sqrt_alpha * col[row];
        }
    }

    // If the null basis lost orthogonality to col(H) (severely ill-conditioned
    // spectrum), one Gram-Schmidt pass against U₁ restores the identities the
    // one-step update relies on.
    let hnorm = frob(h);
    let resid_tol = 1e-8 * hnorm * (alpha * n as f64).sqrt();
    if rank > 0 {
        let htv = h.t().dot(&v0);
        if frob(&htv) > resid_tol {
            let coeffs = u1.t().dot(&v0);
            v0 = &v0 - &u1.dot(&coeffs);
            orthonormalize_columns(&mut v0)?;
            v0 *= sqrt_alpha;
        }
    }

    let v0 = StiefelPoint::from_array(v0, alpha)?;
    Ok(InitBundle {
        v0,
        sigma,
        w: Matrix::from_array(w)?,
        rank,
        selected_cols,
    })
}

/// Compact Householder QR of an orthonormal input (diagonal magnitudes are 1,
/// so no pivoting is needed). Exposes single columns of the implicit full Q.
struct Reflectors {
    a: Array2<f64>,
    taus: Vec<f64>,
}

impl Reflectors {
    fn from_orthonormal(u1: &Array2<f64>) -> Self {
        let mut a = u1.to_owned();
        let (d, r) = a.dim();
        let mut taus = Vec::with_capacity(r);
        for j in 0..r {
            let mut norm_sq = 0.0;
            for i in j..d {
                norm_sq += a[[i, j]] * a[[i, j]];
            }
            let normx = norm_sq.sqrt();
            if normx == 0.0 {
                taus.push(0.0);
                continue;
            }
            let pivot = a[[j, j]];
            let beta = if pivot >= 0.0 { -normx } else { normx };
            let tau = (beta - pivot) / beta;
            let scale = 1.0 / (pivot - beta);
            for i in (j + 1)..d {
                a[[i, j]] *= scale;
            }
            a[[j, j]] = beta;
            taus.push(tau);
            for k in (j + 1)..r {
                let mut dot = a[[j, k]];
                for i in (j + 1)..d {
                    dot += a[[i, j]] * a[[i, k]];
                }
                dot *= tau;
                a[[j, k]] -= dot;
                for i in (j + 1)..d {
                    a[[i, k]] -= dot * a[[i, j]];
                }
            }
        }
        Reflectors { a, taus }
    }

    /// Writes Q·e_col into `out`: H₀H₁…H_{r−1} applied to the unit vector.
    fn q_column(&self, col: usize, out: &mut Array1<f64>) {
        let (d, r) = self.a.dim();
        out.fill(0.0);
        out[col] = 1.0;
        for j in (0..r).rev() {
            let tau = self.taus[j];
            if tau == 0.0 {
                continue;
            }
            let mut dot = out[j];
            for i in (j + 1)..d {
                dot += self.a[[i, j]] * out[i];
            }
            dot *= tau;
            out[j] -= dot;
            for i in (j + 1)..d {
                out[i] -= dot * self.a[[i, j]];
            }
        }
    }
}

/// Two passes of modified Gram-Schmidt; errors if a column collapses.
fn orthonormalize_columns(v: &mut Array2<f64>) -> Result<()> {
    let (d, n) = v.dim();
    for _ in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let mut dot = 0.0;
                for i in 0..d {
                    dot += v[[i, k]] * v[[i, j]];
                }
                for i in 0..d {
                    v[[i, j]] -= dot * v[[i, k]];
                }
            }
            let mut norm = 0.0;
            for i in 0..d {
                norm += v[[i, j]] * v[[i, j]];
            }
            let norm = norm.sqrt();
            if norm < 1e-12 {
                return Err(Error::Numeric("orthonormalization collapsed a column".into()));
            }
            for i in 0..d {
                v[[i, j]] /= norm;
            }
        }
    }
    Ok(())
}

/// Uniform-ish random feasible point: Gaussian columns orthonormalized and
/// scaled by √α. Intended for tests and property checks.
pub fn random_feasible_point(d: usize, n: usize, alpha: f64, seed: u64) -> Result<StiefelPoint> {
    if d < n {
        return Err(Error::Dimension(format!("need d >= N, got d={d}, N={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng));
    orthonormalize_columns(&mut v)?;
    v *= alpha.sqrt();
    StiefelPoint::from_array(v, alpha)
}

/// Random tangent direction at V: a Gaussian matrix pushed through the
/// projection. Intended for tests and property checks.
pub fn random_tangent(v: &StiefelPoint, seed: u64) -> TangentVector {
    let (d, n) = v.as_array().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng));
    tangent_project_raw(v, &u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn column_problem(alpha: f64) -> SteerProblem {
        let h = Matrix::from_rows(&[vec![2.0], vec![0.0], vec![0.0]]).unwrap();
        SteerProblem::new(h, alpha).unwrap()
    }

    fn e2_point() -> StiefelPoint {
        StiefelPoint::from_array(array![[0.0], [1.0], [0.0]], 1.0).unwrap()
    }

    #[test]
    fn objective_zero_h_is_zero() {
        let h = Matrix::from_array(Array2::zeros((3, 2))).unwrap();
        let p = SteerProblem::new(h, 1.0).unwrap();
        let v = random_feasible_point(3, 2, 1.0, 5).unwrap();
        let loss = objective(&p, &v).unwrap();
        assert!(loss.abs() < 1e-12, "Gram is the identity, so the loss is -2 log 1 = 0");
    }

    #[test]
    fn objective_hand_value() {
        let p = column_problem(1.0);
        let loss = objective(&p, &e2_point()).unwrap();
        assert!((loss - (-(5.0f64).ln())).abs() < 1e-14, "Gram = HtH + alpha = 5");
    }

    #[test]
    fn euclidean_grad_hand_values() {
        // H = 0, alpha = 1: Gram = I so the gradient is -2V
        let h = Matrix::from_array(Array2::zeros((3, 2))).unwrap();
        let p = SteerProblem::new(h, 1.0).unwrap();
        let v = random_feasible_point(3, 2, 1.0, 8).unwrap();
        let g = euclidean_grad(&p, &v).unwrap();
        let expected = v.as_array() * -2.0;
        assert!((g.as_array() - &expected).iter().all(|x| x.abs() < 1e-12));

        let p = column_problem(1.0);
        let g = euclidean_grad(&p, &e2_point()).unwrap();
        let want = [-0.8, -0.4, 0.0];
        for i in 0..3 {
            assert!((g.get(i, 0) - want[i]).abs() < 1e-14, "entry {i}: {}", g.get(i, 0));
        }
    }

    #[test]
    fn euclidean_grad_matches_finite_differences() {
        const FD_STEP: f64 = 1e-5;
        for seed in 0..10u64 {
            let h = Matrix::from_array(Array2::from_shape_fn((16, 4), |(i, j)| {
                ((seed as f64 + 1.0) * (i as f64 + 1.3) * (j as f64 + 0.7)).sin()
            }))
            .unwrap();
            let prob = SteerProblem::new(h, 2.0).unwrap();
            let v = random_feasible_point(16, 4, 2.0, 30 + seed).unwrap();
            let g = euclidean_grad(&prob, &v).unwrap();
            for i in 0..16 {
                for j in 0..4 {
                    let mut plus = v.as_array().clone();
                    plus[[i, j]] += FD_STEP;
                    let mut minus = v.as_array().clone();
                    minus[[i, j]] -= FD_STEP;
                    let fp = objective_raw(&prob, &plus).unwrap();
                    let fm = objective_raw(&prob, &minus).unwrap();
                    let fd = (fp - fm) / (2.0 * FD_STEP);
                    assert!(
                        (g.get(i, j) - fd).abs() < 1e-5,
                        "seed {seed} entry ({i},{j}): grad {} vs fd {fd}",
                        g.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn projection_kills_v_and_is_idempotent() {
        let v = random_feasible_point(16, 4, 3.0, 2).unwrap();
        let pv = tangent_project(&v, &v.to_matrix()).unwrap();
        assert!(pv.norm() < 1e-12, "projecting V itself must give 0, got {}", pv.norm());

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u = Matrix::from_array(Array2::from_shape_fn((16, 4), |_| StandardNormal.sample(&mut rng))).unwrap();
        let once = tangent_project(&v, &u).unwrap();
        let twice = tangent_project(&v, &once.to_matrix()).unwrap();
        let diff = (once.as_array() - twice.as_array()).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff < 1e-10, "projection must be idempotent, drift {diff:e}");

        let resid = tangency_residual(v.as_array(), once.as_array());
        assert!(resid <= 1e-10, "tangency residual {resid:e}");
    }

    #[test]
    fn projection_is_self_adjoint() {
        let v = random_feasible_point(12, 3, 1.5, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let u1 = Array2::from_shape_fn((12, 3), |_| StandardNormal.sample(&mut rng));
        let u2 = Array2::from_shape_fn((12, 3), |_| StandardNormal.sample(&mut rng));
        let p1 = tangent_project_raw(&v, &u1);
        let p2 = tangent_project_raw(&v, &u2);
        let lhs: f64 = p1.as_array().iter().zip(u2.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u1.iter().zip(p2.as_array().iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "<Proj u1, u2> = {lhs} vs <u1, Proj u2> = {rhs}");
    }

    #[test]
    fn riemannian_grad_hand_value() {
        let p = column_problem(1.0);
        let g = riemannian_grad(&p, &e2_point()).unwrap();
        let want = [-0.8, 0.0, 0.0];
        for i in 0..3 {
            assert!((g.as_array()[[i, 0]] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn riemannian_grad_vanishes_for_zero_h() {
        let h = Matrix::from_array(Array2::zeros((10, 3))).unwrap();
        let p = SteerProblem::new(h, 2.5).unwrap();
        for seed in 0..5 {
            let v = random_feasible_point(10, 3, 2.5, seed).unwrap();
            let g = riemannian_grad(&p, &v).unwrap();
            assert!(g.norm() < 1e-10, "objective is constant on the manifold, got {}", g.norm());
        }
    }

    #[test]
    fn grad_matches_directional_derivative_along_retraction() {
        const FD_STEP: f64 = 1e-5;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            let h = Matrix::from_array(Array2::from_shape_fn((16, 4), |_| StandardNormal.sample(&mut rng))).unwrap();
            let prob = SteerProblem::new(h, 2.0).unwrap();
            let v = random_feasible_point(16, 4, 2.0, 700 + seed).unwrap();
            let g = riemannian_grad(&prob, &v).unwrap();
            let t = random_tangent(&v, 800 + seed);
            let fp = objective(&prob, &polar_retract(&v, &t.scaled(FD_STEP)).unwrap()).unwrap();
            let fm = objective(&prob, &polar_retract(&v, &t.scaled(-FD_STEP)).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * FD_STEP);
            let inner: f64 = g.as_array().iter().zip(t.as_array().iter()).map(|(a, b)| a * b).sum();
            assert!((fd - inner).abs() < 1e-5, "seed {seed}: fd {fd} vs <grad, T> {inner}");
        }
    }

    #[test]
    fn retraction_identity_and_hand_value() {
        let v = random_feasible_point(9, 2, 4.0, 3).unwrap();
        let zero = TangentVector::from_array_unchecked(Array2::zeros((9, 2)));
        let r = polar_retract(&v, &zero).unwrap();
        let drift = (r.as_array() - v.as_array()).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(drift < 1e-12, "R_V(0) must be V, drift {drift:e}");

        // V0 = e2, U = 0.625·H along e1, alpha = 1: R = (V+U)/sqrt(1 + ||U||^2)
        let v0 = e2_point();
        let u = TangentVector::from_array_unchecked(array![[1.25], [0.0], [0.0]]);
        let r = polar_retract(&v0, &u).unwrap();
        let denom = (1.0f64 + 1.25 * 1.25).sqrt();
        let want = [1.25 / denom, 1.0 / denom, 0.0];
        for i in 0..3 {
            assert!((r.as_array()[[i, 0]] - want[i]).abs() < 1e-12, "entry {i}");
        }
        assert!((want[0] - 0.7808688).abs() < 1e-7 && (want[1] - 0.6246950).abs() < 1e-7);
    }

    #[test]
    fn init_nullspace_for_single_column() {
        let p = column_problem(1.0);
        for seed in 0..6 {
            let init = init_v0(&p, seed).unwrap();
            let v0 = init.v0.as_array();
            assert!(v0[[0, 0]].abs() < 1e-12, "V0 must be orthogonal to e1");
            let tail = (v0[[1, 0]].abs() - 1.0).abs().min((v0[[2, 0]].abs() - 1.0).abs());
            assert!(tail < 1e-12, "V0 must be a unit vector in span(e2, e3)");
            assert_eq!(init.rank, 1);
            assert!((init.sigma[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_rejects_insufficient_dimension() {
        let h = Matrix::from_array(Array2::eye(4)).unwrap();
        let p = SteerProblem::new(h, 1.0).unwrap();
        match init_v0(&p, 1) {
            Err(Error::InsufficientDimension { d: 4, r: 4, n: 4 }) => {}
            other => panic!("expected InsufficientDimension, got {other:?}"),
        }
    }

    #[test]
    fn init_invariants_on_gaussian_instances() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let h = Matrix::from_array(Array2::from_shape_fn((64, 8), |_| StandardNormal.sample(&mut rng))).unwrap();
            let hnorm = h.frobenius_norm();
            let p = SteerProblem::new(h, 2.0).unwrap();
            let init = init_v0(&p, seed).unwrap();
            assert_eq!(init.rank, 8);
            assert_eq!(init.selected_cols.len(), 8);
            assert!(init.selected_cols.iter().all(|&i| i < 64 - 8));

            let resid = feasibility_residual(init.v0.as_array(), 2.0);
            assert!(resid <= 1e-10, "V0tV0 - 2I residual {resid:e}");
            let htv = p.h().as_array().t().dot(init.v0.as_array());
            let htv_norm = htv.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(htv_norm <= 1e-8 * hnorm, "HtV0 residual {htv_norm:e}");

            // Gram identity at V0: (H+V0)t(H+V0) = HtH + alpha I
            let pmat = p.h().as_array() + init.v0.as_array();
            let gram = pmat.t().dot(&pmat);
            let want = p.h().as_array().t().dot(p.h().as_array());
            let mut err = 0.0f64;
            for i in 0..8 {
                for j in 0..8 {
                    let e = gram[[i, j]] - want[[i, j]] - if i == j { 2.0 } else { 0.0 };
                    err += e * e;
                }
            }
            let tol = 1e-8 * (hnorm * hnorm + 2.0 * 8.0);
            assert!(err.sqrt() <= tol, "Gram identity residual {:e}", err.sqrt());
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = Matrix::from_array(Array2::from_shape_fn((32, 4), |_| StandardNormal.sample(&mut rng))).unwrap();
        let p = SteerProblem::new(h, 1.0).unwrap();
        let a = init_v0(&p, 42).unwrap();
        let b = init_v0(&p, 42).unwrap();
        assert_eq!(a.selected_cols, b.selected_cols);
        assert_eq!(a.v0.as_array(), b.v0.as_array());
        let c = init_v0(&p, 43).unwrap();
        assert!(a.selected_cols != c.selected_cols || a.v0.as_array() != c.v0.as_array());
    }

    #[test]
    fn init_objective_matches_prop1_value() {
        for (seed, (d, n, alpha)) in [(1u64, (32, 4, 1.0)), (2, (64, 8, 2.0)), (3, (20, 3, 0.5))] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = Matrix::from_array(Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng))).unwrap();
            let p = SteerProblem::new(h, alpha).unwrap();
            let init = init_v0(&p, seed).unwrap();
            let loss = objective(&p, &init.v0).unwrap();
            let want: f64 = -init.sigma.iter().take(init.rank).map(|s| (s * s + alpha).ln()).sum::<f64>()
                - (n - init.rank) as f64 * alpha.ln();
            assert!((loss - want).abs() <= 1e-8, "({d},{n}): {loss} vs {want}");
        }
    }

    #[test]
    fn init_handles_zero_and_rank_deficient_h() {
        let h = Matrix::from_array(Array2::zeros((6, 2))).unwrap();
        let p = SteerProblem::new(h, 1.0).unwrap();
        let init = init_v0(&p, 11).unwrap();
        assert_eq!(init.rank, 0);
        assert!(feasibility_residual(init.v0.as_array(), 1.0) <= 1e-12);

        // duplicate column: rank 3 instead of 4
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut arr = Array2::from_shape_fn((16, 4), |_| StandardNormal.sample(&mut rng));
        for i in 0..16 {
            arr[[i, 3]] = arr[[i, 2]];
        }
        let h = Matrix::from_array(arr).unwrap();
        let hnorm = h.frobenius_norm();
        let p = SteerProblem::new(h, 2.0).unwrap();
        let init = init_v0(&p, 17).unwrap();
        assert_eq!(init.rank, 3);
        let htv = p.h().as_array().t().dot(init.v0.as_array());
        let resid = htv.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(resid <= 1e-8 * hnorm, "HtV0 residual {resid:e}");
    }

    #[test]
    fn compute_alpha_policy() {
        let h = Matrix::from_rows(&[vec![2.0], vec![0.0], vec![0.0]]).unwrap();
        assert!((compute_alpha(&h, 0.5).unwrap() - 2.0).abs() < 1e-12);
        let h1 = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        assert!((compute_alpha(&h1, 0.1).unwrap() - 0.1).abs() < 1e-14);
        let z = Matrix::from_array(Array2::zeros((3, 2))).unwrap();
        assert!(matches!(compute_alpha(&z, 0.5), Err(Error::DegenerateInput(_))));
        assert!(compute_alpha(&h, 0.0).is_err());
    }

    #[test]
    fn stiefel_point_rejects_infeasible() {
        let v = array![[1.0, 0.0], [0.0, 0.5], [0.0, 0.0]];
        assert!(StiefelPoint::from_array(v, 1.0).is_err());
    }
}
