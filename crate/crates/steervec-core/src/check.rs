//! Named property suites over the geometry and solver layers, runnable at
//! two scales. Each suite reports pass/fail with a detail line; the corrupt
//! hook biases retraction outputs so the negative control demonstrably
//! fails.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{
    compute_alpha, euclidean_grad, feas_tol, feasibility_residual, init_v0, objective_raw,
    polar_retract, random_feasible_point, random_tangent, tangent_project, SteerProblem,
};
use crate::matrix::Matrix;
use crate::solver::{onestep_from_init, quad_coeffs_closed_form, quad_coeffs_general, rgd_solve, RgdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub scale: Scale,
    /// Negative-control hook: biases every checked retraction output so the
    /// retraction suites must fail.
    #[serde(default)]
    pub corrupt_retraction: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn scaled(scale: Scale, quick: usize, full: usize) -> usize {
    match scale {
        Scale::Quick => quick,
        Scale::Full => full,
    }
}

fn gaussian(d: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_array(Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng))).unwrap()
}

fn gaussian_problem(d: usize, n: usize, c: f64, seed: u64) -> Result<SteerProblem> {
    let h = gaussian(d, n, seed);
    let alpha = compute_alpha(&h, c)?;
    SteerProblem::new(h, alpha)
}

/// Runs every suite and returns one result per property, in a fixed order.
pub fn run_checks(opts: &CheckOptions) -> Vec<PropertyResult> {
    vec![
        closed_form_equivalence(opts),
        descent_direction(opts),
        retraction_feasibility(opts),
        retraction_local_rigidity(opts),
        projection_idempotence(opts),
        gradient_finite_difference(opts),
        rgd_soundness(opts),
        onestep_improvement(opts),
        init_orthogonality(opts),
    ]
}

pub fn all_passed(results: &[PropertyResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn fail(name: &str, detail: String) -> PropertyResult {
    PropertyResult { name: name.into(), passed: false, detail }
}

fn pass(name: &str, detail: String) -> PropertyResult {
    PropertyResult { name: name.into(), passed: true, detail }
}

/// Closed-form quadratic coefficients equal the general ones at (V0, S = H),
/// 1e-8 relative, on (64,8) and (256,16) instances.
fn closed_form_equivalence(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "closed-form-equivalence";
    let per_shape = scaled(opts.scale, 10, 100);
    let mut max_rel = 0.0f64;
    let mut cases = 0usize;
    for (si, &(d, n)) in [(64usize, 8usize), (256, 16)].iter().enumerate() {
        for i in 0..per_shape {
            let seed = opts.seed.wrapping_add((si * per_shape + i) as u64);
            let r = (|| -> Result<f64> {
                let p = gaussian_problem(d, n, 0.5, seed)?;
                let init = init_v0(&p, seed)?;
                let s = crate::geometry::TangentVector::new(&init.v0, p.h().clone())?;
                let general = quad_coeffs_general(&p, &init.v0, &s)?;
                let closed = quad_coeffs_closed_form(&init.sigma, init.rank, p.alpha());
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                Ok(rel(general.d1, closed.d1)
                    .max(rel(general.d2, closed.d2))
                    .max(rel(general.eta_star, closed.eta_star)))
            })();
            match r {
                Ok(rel) => {
                    max_rel = max_rel.max(rel);
                    cases += 1;
                    if rel > 1e-8 {
                        return fail(NAME, format!("({d},{n}) seed {seed}: relative deviation {rel:e} > 1e-8"));
                    }
                }
                Err(e) => return fail(NAME, format!("({d},{n}) seed {seed}: {e}")),
            }
        }
    }
    pass(NAME, format!("{cases} instances; max relative deviation {max_rel:.2e}"))
}

/// <H, grad l(V0)> equals -D1 (1e-8 relative) and is strictly negative.
fn descent_direction(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "descent-direction";
    let total = scaled(opts.scale, 50, 1000);
    let shapes = [(32usize, 4usize), (48, 6), (64, 8)];
    let mut worst = 0.0f64;
    for i in 0..total {
        let (d, n) = shapes[i % shapes.len()];
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(2654435761);
        let r = (|| -> Result<(f64, f64)> {
            let p = gaussian_problem(d, n, 0.5, seed)?;
            let init = init_v0(&p, seed)?;
            let grad = crate::geometry::riemannian_grad(&p, &init.v0)?;
            let inner: f64 = p.h().as_array().iter().zip(grad.as_array().iter()).map(|(a, b)| a * b).sum();
            let closed = quad_coeffs_closed_form(&init.sigma, init.rank, p.alpha());
            Ok((inner, closed.d1))
        })();
        match r {
            Ok((inner, d1)) => {
                if !(inner < 0.0) {
                    return fail(NAME, format!("case {i}: <H, grad> = {inner} not negative"));
                }
                let rel = (inner + d1).abs() / d1.abs().max(1e-300);
                worst = worst.max(rel);
                if rel > 1e-8 {
                    return fail(NAME, format!("case {i}: <H, grad> = {inner} vs -D1 = {}, rel {rel:e}", -d1));
                }
            }
            Err(e) => return fail(NAME, format!("case {i}: {e}")),
        }
    }
    pass(NAME, format!("{total} instances; max |<H,grad> + D1|/D1 = {worst:.2e}"))
}

struct RetractionCase {
    v: crate::geometry::StiefelPoint,
    u: crate::geometry::TangentVector,
    alpha: f64,
    n: usize,
}

fn retraction_cases(opts: &CheckOptions, count: usize) -> Result<Vec<RetractionCase>> {
    let shapes = [(16usize, 2usize), (32, 4), (32, 8), (64, 8)];
    let alphas = [0.5, 1.0, 2.0, 4.0];
    // fractions of sqrt(alpha) for ||U||; small ones make the rigidity bound
    // tight enough to expose the corruption hook
    let fractions = [0.01, 0.1, 0.5, 1.0];
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let (d, n) = shapes[i % shapes.len()];
        let alpha = alphas[(i / shapes.len()) % alphas.len()];
        let f = fractions[i % fractions.len()];
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(0x9e3779b97f4a7c15);
        let v = random_feasible_point(d, n, alpha, seed)?;
        let t = random_tangent(&v, seed ^ 0xabcdef);
        let norm = t.norm();
        let u = if norm > 0.0 { t.scaled(f * alpha.sqrt() / norm) } else { t };
        cases.push(RetractionCase { v, u, alpha, n });
    }
    Ok(cases)
}

fn corrupt(mut arr: Array2<f64>, alpha: f64, on: bool) -> Array2<f64> {
    if on {
        arr[[0, 0]] += 1e-3 * alpha.sqrt();
    }
    arr
}

/// Retraction outputs stay on the manifold within feas_tol.
fn retraction_feasibility(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "retraction-feasibility";
    let total = scaled(opts.scale, 50, 1000);
    let cases = match retraction_cases(opts, total) {
        Ok(c) => c,
        Err(e) => return fail(NAME, format!("case generation: {e}")),
    };
    let mut worst = 0.0f64;
    for (i, case) in cases.iter().enumerate() {
        let r = match polar_retract(&case.v, &case.u) {
            Ok(r) => r,
            Err(e) => return fail(NAME, format!("case {i}: retraction failed: {e}")),
        };
        let arr = corrupt(r.as_array().clone(), case.alpha, opts.corrupt_retraction);
        let resid = feasibility_residual(&arr, case.alpha);
        let tol = feas_tol(case.alpha, case.n);
        worst = worst.max(resid / tol);
        if resid > tol {
            return fail(NAME, format!("case {i}: residual {resid:e} > feas_tol {tol:e}"));
        }
    }
    pass(NAME, format!("{total} pairs; worst residual at {:.2e} of feas_tol", worst))
}

/// ||R_V(U) - (V+U)||_F <= ||U||_F^2 / sqrt(alpha) whenever ||U||_F <= sqrt(alpha).
fn retraction_local_rigidity(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "retraction-local-rigidity";
    let total = scaled(opts.scale, 50, 1000);
    let cases = match retraction_cases(opts, total) {
        Ok(c) => c,
        Err(e) => return fail(NAME, format!("case generation: {e}")),
    };
    let mut worst = 0.0f64;
    for (i, case) in cases.iter().enumerate() {
        let unorm = case.u.norm();
        debug_assert!(unorm <= case.alpha.sqrt() * (1.0 + 1e-12));
        let r = match polar_retract(&case.v, &case.u) {
            Ok(r) => r,
            Err(e) => return fail(NAME, format!("case {i}: retraction failed: {e}")),
        };
        let arr = corrupt(r.as_array().clone(), case.alpha, opts.corrupt_retraction);
        let stepped = case.v.as_array() + case.u.as_array();
        let dist = (&arr - &stepped).iter().map(|x| x * x).sum::<f64>().sqrt();
        let bound = unorm * unorm / case.alpha.sqrt();
        // the bound is exact mathematics; allow only rounding headroom
        let slack = 1e-12 * case.alpha;
        worst = worst.max(dist / (bound + slack));
        if dist > bound + slack {
            return fail(NAME, format!("case {i}: ||R-(V+U)|| = {dist:e} > ||U||^2/sqrt(alpha) = {bound:e}"));
        }
    }
    pass(NAME, format!("{total} pairs; worst distance at {worst:.3} of the bound"))
}

/// Projection is idempotent and its outputs satisfy the tangency identity.
fn projection_idempotence(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "projection-idempotence";
    let total = scaled(opts.scale, 50, 1000);
    let mut worst = 0.0f64;
    for i in 0..total {
        let d = 16 + 8 * (i % 4);
        let n = 2 + i % 4;
        let alpha = [0.5, 1.0, 2.0][i % 3];
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(40503);
        let r = (|| -> Result<f64> {
            let v = random_feasible_point(d, n, alpha, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
            let raw = Matrix::from_array(Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng)))?;
            let once = tangent_project(&v, &raw)?;
            let twice = tangent_project(&v, &once.to_matrix())?;
            let drift = (once.as_array() - twice.as_array()).iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(drift)
        })();
        match r {
            Ok(drift) => {
                worst = worst.max(drift);
                if drift > 1e-10 {
                    return fail(NAME, format!("case {i}: projection drift {drift:e} > 1e-10"));
                }
            }
            Err(e) => return fail(NAME, format!("case {i}: {e}")),
        }
    }
    pass(NAME, format!("{total} cases; worst idempotence drift {worst:.2e}"))
}

/// Euclidean gradient matches central finite differences entrywise within 1e-5.
fn gradient_finite_difference(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "gradient-finite-difference";
    let total = scaled(opts.scale, 10, 100);
    const STEP: f64 = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..total {
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(69069);
        let r = (|| -> Result<f64> {
            let p = gaussian_problem(16, 4, 0.5, seed)?;
            let v = random_feasible_point(16, 4, p.alpha(), seed ^ 0xf00d)?;
            let g = euclidean_grad(&p, &v)?;
            let mut max_err = 0.0f64;
            for r in 0..16 {
                for c in 0..4 {
                    let mut plus = v.as_array().clone();
                    plus[[r, c]] += STEP;
                    let mut minus = v.as_array().clone();
                    minus[[r, c]] -= STEP;
                    let fd = (objective_raw(&p, &plus)? - objective_raw(&p, &minus)?) / (2.0 * STEP);
                    max_err = max_err.max((g.get(r, c) - fd).abs());
                }
            }
            Ok(max_err)
        })();
        match r {
            Ok(err) => {
                worst = worst.max(err);
                if err > 1e-5 {
                    return fail(NAME, format!("case {i}: max entry error {err:e} > 1e-5"));
                }
            }
            Err(e) => return fail(NAME, format!("case {i}: {e}")),
        }
    }
    pass(NAME, format!("{total} instances; worst finite-difference error {worst:.2e}"))
}

/// Descent traces strictly decrease, satisfy the acceptance inequality at
/// every accepted step, and obey the telescoped decrease bound.
fn rgd_soundness(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "rgd-soundness";
    let total = scaled(opts.scale, 3, 10);
    let params = RgdParams::default();
    let mut steps = 0usize;
    for i in 0..total {
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(3141592653);
        let (d, n) = [(48usize, 6usize), (64, 8)][i % 2];
        let trace = match gaussian_problem(d, n, 0.5, seed).and_then(|p| rgd_solve(&p, &params, seed)) {
            Ok(t) => t,
            Err(e) => return fail(NAME, format!("solve {i}: {e}")),
        };
        let recs = &trace.records;
        let mut telescoped = 0.0;
        for k in 0..recs.len().saturating_sub(1) {
            if !(recs[k + 1].loss < recs[k].loss) {
                return fail(NAME, format!("solve {i} step {k}: loss did not strictly decrease"));
            }
            let need = params.c * recs[k].eta_accepted * recs[k].grad_norm * recs[k].grad_norm;
            if recs[k].loss - recs[k + 1].loss < need {
                return fail(NAME, format!("solve {i} step {k}: acceptance inequality violated"));
            }
            telescoped += need;
            steps += 1;
        }
        if let (Some(first), Some(last)) = (recs.first(), recs.last()) {
            let total_dec = first.loss - last.loss;
            if telescoped > total_dec + 1e-10 * total_dec.abs().max(1.0) {
                return fail(NAME, format!("solve {i}: telescoped bound violated: {telescoped} > {total_dec}"));
            }
        }
    }
    pass(NAME, format!("{total} solves, {steps} accepted steps verified"))
}

/// One-step beats the start point in at least 99% of trials per shape;
/// exceptions are logged in the detail, not failed individually.
fn onestep_improvement(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "onestep-improvement";
    let per_shape = scaled(opts.scale, 20, 200);
    let shapes: &[(usize, usize)] = match opts.scale {
        Scale::Quick => &[(64, 8), (256, 8)],
        Scale::Full => &[(64, 8), (256, 8), (1024, 8)],
    };
    let mut detail = String::new();
    for &(d, n) in shapes {
        let mut improved = 0usize;
        let mut exceptions: Vec<u64> = Vec::new();
        for i in 0..per_shape {
            let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(1442695040888963407);
            let r = gaussian_problem(d, n, 0.5, seed).and_then(|p| {
                let init = init_v0(&p, seed)?;
                onestep_from_init(&p, &init)
            });
            match r {
                Ok(sol) if sol.loss_after < sol.loss_before => improved += 1,
                Ok(_) => exceptions.push(seed),
                Err(e) => return fail(NAME, format!("({d},{n}) case {i}: {e}")),
            }
        }
        let ratio = improved as f64 / per_shape as f64;
        detail.push_str(&format!("({d},{n}): {improved}/{per_shape} improved"));
        if !exceptions.is_empty() {
            detail.push_str(&format!(" [exception seeds: {exceptions:?}]"));
        }
        detail.push_str("; ");
        if ratio < 0.99 {
            return fail(NAME, format!("({d},{n}): only {improved}/{per_shape} trials improved"));
        }
    }
    pass(NAME, detail.trim_end_matches("; ").to_string())
}

/// The start point is orthogonal to col(H), feasible, and satisfies the Gram
/// identity (H+V0)t(H+V0) = HtH + alpha I.
fn init_orthogonality(opts: &CheckOptions) -> PropertyResult {
    const NAME: &str = "init-orthogonality";
    let total = scaled(opts.scale, 20, 200);
    let mut worst = 0.0f64;
    for i in 0..total {
        let seed = opts.seed.wrapping_add(i as u64).wrapping_mul(6364136223846793005);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 32 + 16 * (rng.gen_range(0..4));
        let n = 2 + rng.gen_range(0..7);
        let r = (|| -> Result<f64> {
            let p = gaussian_problem(d, n, 0.5, seed ^ 0xbeef)?;
            let init = init_v0(&p, seed)?;
            let hnorm = p.h().frobenius_norm();
            let htv = p.h().as_array().t().dot(init.v0.as_array());
            let htv_resid = htv.iter().map(|x| x * x).sum::<f64>().sqrt() / (1e-8 * hnorm * (p.alpha() * n as f64).sqrt());

            let feas = feasibility_residual(init.v0.as_array(), p.alpha()) / feas_tol(p.alpha(), n);

            let pm = p.h().as_array() + init.v0.as_array();
            let gram = pm.t().dot(&pm);
            let want = p.h().as_array().t().dot(p.h().as_array());
            let mut err = 0.0f64;
            for a in 0..n {
                for b in 0..n {
                    let e = gram[[a, b]] - want[[a, b]] - if a == b { p.alpha() } else { 0.0 };
                    err += e * e;
                }
            }
            let gram_resid = err.sqrt() / (1e-8 * (hnorm * hnorm + p.alpha() * n as f64));
            Ok(htv_resid.max(feas).max(gram_resid))
        })();
        match r {
            Ok(ratio) => {
                worst = worst.max(ratio);
                if ratio > 1.0 {
                    return fail(NAME, format!("case {i}: residual at {ratio:.2} of tolerance"));
                }
            }
            Err(e) => return fail(NAME, format!("case {i}: {e}")),
        }
    }
    pass(NAME, format!("{total} instances; worst residual at {worst:.2e} of tolerance"))
}
