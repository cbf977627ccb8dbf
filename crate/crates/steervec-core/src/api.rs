//! Transport-neutral solve requests: the CLI runs these in process and the
//! HTTP service exposes the same types over JSON, so results are identical
//! either way.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_alpha, SteerProblem};
use crate::matrix::Matrix;
use crate::solver::{onestep_solve, rgd_solve, RgdParams, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    OneStep,
    Rgd,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::OneStep => "onestep",
            Algo::Rgd => "rgd",
        }
    }
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRequest {
    /// Row-major activation matrix.
    pub matrix: Vec<Vec<f64>>,
    pub algo: Algo,
    /// Fixed α; mutually exclusive with C.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Spectral scaling α = C·‖H‖₂²; mutually exclusive with alpha.
    /// When neither is given, C = 0.5 is used.
    #[serde(default, rename = "C")]
    pub c: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub rgd: Option<RgdParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub algo: String,
    pub alpha_used: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResponse {
    /// Row-major steering matrix.
    pub v: Vec<Vec<f64>>,
    pub summary: SolveRecord,
}

pub fn resolve_alpha(h: &Matrix, alpha: Option<f64>, c: Option<f64>) -> Result<f64> {
    match (alpha, c) {
        (Some(_), Some(_)) => Err(Error::Config("alpha and C are mutually exclusive".into())),
        (Some(a), None) => Ok(a),
        (None, Some(c)) => compute_alpha(h, c),
        (None, None) => compute_alpha(h, 0.5),
    }
}

pub fn solve(req: &SolveRequest) -> Result<SolveResponse> {
    let h = Matrix::from_rows(&req.matrix)?;
    let alpha = resolve_alpha(&h, req.alpha, req.c)?;
    let problem = SteerProblem::new(h, alpha)?;
    let t0 = Instant::now();

    let (v, summary) = match req.algo {
        Algo::OneStep => {
            if req.rgd.is_some() {
                return Err(Error::Config("rgd parameters were supplied but algo is onestep".into()));
            }
            let sol = onestep_solve(&problem, req.seed)?;
            let record = SolveRecord {
                algo: "onestep".into(),
                alpha_used: alpha,
                loss_before: sol.loss_before,
                loss_after: sol.loss_after,
                eta: sol.coeffs.eta_star,
                grad_norm_final: None,
                status: None,
                elapsed_s: t0.elapsed().as_secs_f64(),
            };
            (sol.v1.to_matrix(), record)
        }
        Algo::Rgd => {
            let params = req.rgd.unwrap_or_default();
            let trace = rgd_solve(&problem, &params, req.seed)?;
            let s = trace.summary();
            let record = SolveRecord {
                algo: "rgd".into(),
                alpha_used: alpha,
                loss_before: s.loss_initial,
                loss_after: s.loss_final,
                eta: s.eta_last_accepted,
                grad_norm_final: Some(s.grad_norm_final),
                status: Some(trace.status),
                elapsed_s: t0.elapsed().as_secs_f64(),
            };
            (trace.final_v.to_matrix(), record)
        }
    };

    let rows = (0..v.rows()).map(|i| (0..v.cols()).map(|j| v.get(i, j)).collect()).collect();
    Ok(SolveResponse { v: rows, summary })
}
