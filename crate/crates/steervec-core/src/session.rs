//! Streaming per-token steering: a caller feeds one activation column per
//! live generation path each token, paths drop out as they finish, and every
//! step returns mutually orthogonal steering vectors of squared norm α.
//!
//! The reference transport is one JSON object per line over stdin/stdout;
//! the in-process API below has identical semantics.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_alpha, SteerProblem};
use crate::matrix::{fmt_f64, Matrix};
use crate::solver::{onestep_solve, rgd_solve, RgdParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SolverChoice {
    OneStep,
    Rgd(RgdParams),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum AlphaPolicy {
    /// Use this α for every step.
    Fixed(f64),
    /// α = C·‖H‖₂² recomputed from each step's activations.
    SpectralScaled(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum SeedPolicy {
    /// Column sampling reseeded as base ⊕ token_index each step.
    PerToken(u64),
    /// One seed for every step (the replayable mode).
    Fixed(u64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionConfig {
    pub solver: SolverChoice,
    pub alpha_policy: AlphaPolicy,
    pub dim: usize,
    pub seed_policy: SeedPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub token_index: u64,
    pub active_ids: Vec<String>,
    #[serde(rename = "H")]
    pub h_columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepFlag {
    /// Activations had numerical rank zero; the objective was constant.
    ZeroRank,
    /// d < r + N; no orthogonal complement column set exists.
    InsufficientDimension,
    /// The step was served as a no-op: zero vectors, alpha_used = 0.
    Degraded,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResponse {
    pub token_index: u64,
    #[serde(rename = "V")]
    pub v_columns: Vec<Vec<f64>>,
    pub eta_star: f64,
    pub alpha_used: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub flags: Vec<StepFlag>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SessionSummary {
    pub tokens: u64,
    pub zero_rank: u64,
    pub insufficient_dimension: u64,
    pub degraded: u64,
    pub mean_latency_seconds: f64,
}

#[derive(Debug)]
pub struct SessionState {
    config: SessionConfig,
    /// None until the first step; the token counter starts at −1.
    last_token: Option<u64>,
    active: Option<Vec<String>>,
    zero_rank: u64,
    insufficient_dimension: u64,
    degraded: u64,
    latencies: Vec<f64>,
}

pub fn session_open(config: SessionConfig) -> Result<SessionState> {
    SessionState::open(config)
}

pub fn session_step(state: &mut SessionState, req: &StepRequest) -> Result<StepResponse> {
    state.step(req)
}

pub fn session_close(state: SessionState) -> SessionSummary {
    state.close()
}

impl SessionState {
    pub fn open(config: SessionConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        match config.alpha_policy {
            AlphaPolicy::Fixed(a) if !(a > 0.0) || !a.is_finite() => {
                return Err(Error::Config(format!("alpha_policy: fixed alpha must be positive, got {a}")));
            }
            AlphaPolicy::SpectralScaled(c) if !(c > 0.0) || !c.is_finite() => {
                return Err(Error::Config(format!("alpha_policy: scaling C must be positive, got {c}")));
            }
            _ => {}
        }
        if let SolverChoice::Rgd(params) = &config.solver {
            params.validate()?;
        }
        Ok(SessionState {
            config,
            last_token: None,
            active: None,
            zero_rank: 0,
            insufficient_dimension: 0,
            degraded: 0,
            latencies: Vec::new(),
        })
    }

    /// Validates the request against the protocol (monotone token index,
    /// paths only ever drop, column shapes), then solves for this token's
    /// steering matrix. Dimension exhaustion and zero activations degrade to
    /// a zero-vector no-op response instead of failing the stream. State
    /// advances only when a response is produced.
    pub fn step(&mut self, req: &StepRequest) -> Result<StepResponse> {
        self.validate_protocol(req)?;
        let d = self.config.dim;
        let n = req.active_ids.len();

        let seed = match self.config.seed_policy {
            SeedPolicy::PerToken(base) => base.wrapping_add(req.token_index),
            SeedPolicy::Fixed(seed) => seed,
        };

        let h = Matrix::from_array(Array2::from_shape_fn((d, n), |(i, j)| req.h_columns[j][i]))
            .map_err(|e| Error::Protocol(format!("bad activation columns: {e}")))?;

        let t0 = Instant::now();
        let outcome = self.solve(h, seed, req.token_index);
        let latency = t0.elapsed().as_secs_f64();

        let resp = match outcome {
            Ok(resp) => resp,
            Err(e) => return Err(e),
        };

        for flag in &resp.flags {
            match flag {
                StepFlag::ZeroRank => self.zero_rank += 1,
                StepFlag::InsufficientDimension => self.insufficient_dimension += 1,
                StepFlag::Degraded => self.degraded += 1,
            }
        }
        self.latencies.push(latency);
        self.last_token = Some(req.token_index);
        self.active = Some(req.active_ids.clone());
        Ok(resp)
    }

    fn validate_protocol(&self, req: &StepRequest) -> Result<()> {
        if let Some(last) = self.last_token {
            if req.token_index <= last {
                return Err(Error::Protocol(format!(
                    "token_index must increase: got {} after {last}",
                    req.token_index
                )));
            }
        }
        if req.active_ids.is_empty() {
            return Err(Error::Protocol("active_ids must be non-empty".into()));
        }
        for (i, id) in req.active_ids.iter().enumerate() {
            if req.active_ids[..i].contains(id) {
                return Err(Error::Protocol(format!("duplicate path id {id:?}")));
            }
        }
        if let Some(active) = &self.active {
            for id in &req.active_ids {
                if !active.contains(id) {
                    return Err(Error::Protocol(format!(
                        "path id {id:?} is not in the previous active set (paths may only drop)"
                    )));
                }
            }
        }
        if req.h_columns.len() != req.active_ids.len() {
            return Err(Error::Protocol(format!(
                "got {} activation columns for {} path ids",
                req.h_columns.len(),
                req.active_ids.len()
            )));
        }
        for (j, col) in req.h_columns.iter().enumerate() {
            if col.len() != self.config.dim {
                return Err(Error::Protocol(format!(
                    "column {j} has length {}, session dim is {}",
                    col.len(),
                    self.config.dim
                )));
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::Protocol(format!("column {j} contains a non-finite entry")));
            }
        }
        Ok(())
    }

    fn solve(&self, h: Matrix, seed: u64, token_index: u64) -> Result<StepResponse> {
        let d = self.config.dim;
        let n = h.cols();
        let degraded = |flags: Vec<StepFlag>| StepResponse {
            token_index,
            v_columns: vec![vec![0.0; d]; n],
            eta_star: 0.0,
            alpha_used: 0.0,
            loss_before: 0.0,
            loss_after: 0.0,
            flags,
        };

        let alpha = match self.config.alpha_policy {
            AlphaPolicy::Fixed(a) => a,
            AlphaPolicy::SpectralScaled(c) => match compute_alpha(&h, c) {
                Ok(a) => a,
                Err(Error::DegenerateInput(_)) => return Ok(degraded(vec![StepFlag::Degraded])),
                Err(e) => return Err(e),
            },
        };
        let problem = SteerProblem::new(h, alpha)?;

        match &self.config.solver {
            SolverChoice::OneStep => match onestep_solve(&problem, seed) {
                Ok(sol) => {
                    let mut flags = Vec::new();
                    if sol.coeffs.zero_rank {
                        flags.push(StepFlag::ZeroRank);
                    }
                    Ok(StepResponse {
                        token_index,
                        v_columns: columns_of(sol.v1.as_array()),
                        eta_star: sol.coeffs.eta_star,
                        alpha_used: alpha,
                        loss_before: sol.loss_before,
                        loss_after: sol.loss_after,
                        flags,
                    })
                }
                Err(Error::InsufficientDimension { .. }) => {
                    Ok(degraded(vec![StepFlag::InsufficientDimension, StepFlag::Degraded]))
                }
                Err(e) => Err(e),
            },
            SolverChoice::Rgd(params) => match rgd_solve(&problem, params, seed) {
                Ok(trace) => {
                    let first = trace.records.first().ok_or_else(|| {
                        Error::Numeric("descent produced no iterates".into())
                    })?;
                    let last = trace.records.last().expect("nonempty");
                    Ok(StepResponse {
                        token_index,
                        v_columns: columns_of(trace.final_v.as_array()),
                        eta_star: trace.summary().eta_last_accepted,
                        alpha_used: alpha,
                        loss_before: first.loss,
                        loss_after: last.loss,
                        flags: Vec::new(),
                    })
                }
                Err(Error::InsufficientDimension { .. }) => {
                    Ok(degraded(vec![StepFlag::InsufficientDimension, StepFlag::Degraded]))
                }
                Err(e) => Err(e),
            },
        }
    }

    pub fn tokens(&self) -> u64 {
        self.latencies.len() as u64
    }

    pub fn latencies(&self) -> &[f64] {
        &self.latencies
    }

    pub fn close(self) -> SessionSummary {
        let tokens = self.latencies.len() as u64;
        let mean = if self.latencies.is_empty() {
            0.0
        } else {
            self.latencies.iter().sum::<f64>() / self.latencies.len() as f64
        };
        SessionSummary {
            tokens,
            zero_rank: self.zero_rank,
            insufficient_dimension: self.insufficient_dimension,
            degraded: self.degraded,
            mean_latency_seconds: mean,
        }
    }
}

fn columns_of(v: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..v.ncols()).map(|j| v.column(j).to_vec()).collect()
}

/// Wire form of a response: field order fixed, every float printed with 17
/// significant digits so replays compare byte-for-byte.
pub fn response_to_json_line(r: &StepResponse) -> String {
    let mut s = String::new();
    let _ = write!(s, "{{\"token_index\":{},\"V\":[", r.token_index);
    for (j, col) in r.v_columns.iter().enumerate() {
        if j > 0 {
            s.push(',');
        }
        s.push('[');
        for (i, x) in col.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&fmt_f64(*x));
        }
        s.push(']');
    }
    let _ = write!(
        s,
        "],\"eta_star\":{},\"alpha_used\":{},\"loss_before\":{},\"loss_after\":{},\"flags\":{}}}",
        fmt_f64(r.eta_star),
        fmt_f64(r.alpha_used),
        fmt_f64(r.loss_before),
        fmt_f64(r.loss_after),
        serde_json::to_string(&r.flags).expect("flags serialize")
    );
    s
}

pub fn error_json_line(message: &str) -> String {
    let obj = serde_json::json!({ "error": message });
    obj.to_string()
}

/// One protocol exchange: parse a request line, step the session, return the
/// response line. Malformed input or a protocol violation yields an error
/// object and leaves the session usable.
pub fn handle_line(state: &mut SessionState, line: &str) -> String {
    let req: StepRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return error_json_line(&format!("malformed request: {e}")),
    };
    match state.step(&req) {
        Ok(resp) => response_to_json_line(&resp),
        Err(e) => error_json_line(&e.to_string()),
    }
}
