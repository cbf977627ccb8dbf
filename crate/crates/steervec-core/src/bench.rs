//! Benchmark harness: seeded Gaussian instances, gap-vs-iteration curves for
//! gradient descent, the single-point gap of the one-step update, wall-time
//! aggregation, and tabular export.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_alpha, SteerProblem};
use crate::matrix::{fmt_f64, Matrix};
use crate::solver::{onestep_solve, relative_gap, rgd_solve, RgdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceDistribution {
    GaussianStd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub shapes: Vec<(usize, usize)>,
    pub trials: usize,
    #[serde(rename = "C")]
    pub c: f64,
    pub rgd: RgdParams,
    pub base_seed: u64,
    pub instance_distribution: InstanceDistribution,
}

impl BenchConfig {
    /// The full reference study: four shapes, 50 trials each.
    pub fn full_scale() -> Self {
        BenchConfig {
            shapes: vec![(1024, 8), (1024, 20), (2048, 8), (2048, 20)],
            trials: 50,
            c: 0.5,
            rgd: RgdParams::default(),
            base_seed: 42,
            instance_distribution: InstanceDistribution::GaussianStd,
        }
    }

    /// A seconds-scale smoke variant of the same study.
    pub fn quick() -> Self {
        BenchConfig {
            shapes: vec![(256, 8), (256, 16)],
            trials: 5,
            c: 0.5,
            rgd: RgdParams::default(),
            base_seed: 42,
            instance_distribution: InstanceDistribution::GaussianStd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        for &(d, n) in &self.shapes {
            if n == 0 || d < 2 * n {
                return Err(Error::Config(format!(
                    "shape ({d},{n}) invalid: Gaussian instances have full column rank, so d >= 2N is required"
                )));
            }
        }
        self.rgd.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: BenchConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad bench config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("bench config serializes")
    }
}

/// i.i.d. standard normal d×N matrix, deterministic per (d, N, seed).
pub fn gen_instance(d: usize, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 || d < 2 * n {
        return Err(Error::Dimension(format!("gen_instance requires d >= 2N >= 2, got d={d}, N={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_array(Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeResult {
    pub d: usize,
    pub n: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub failures: Vec<TrialFailure>,
    /// Mean/stddev of the per-iteration gradient-descent gap, rows 0..=K.
    /// Early-stopped trials are padded with their final loss (the iterate no
    /// longer moves).
    pub mean_gap: Vec<f64>,
    pub std_gap: Vec<f64>,
    pub onestep_mean_gap: f64,
    pub onestep_std_gap: f64,
    pub rgd_mean_seconds: f64,
    pub onestep_mean_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSummary {
    pub results: Vec<ShapeResult>,
}

/// Runs every (shape, trial) pair sequentially in deterministic order.
/// Per trial: H = gen_instance(d, N, base_seed + t), α = C·‖H‖₂², both
/// solvers share the start seed base_seed + t, and gaps are measured against
/// the gradient-descent final loss of the same trial. Wall times cover each
/// solve end-to-end, initialization included. Failed trials are recorded and
/// excluded from the statistics.
pub fn run_bench(config: &BenchConfig) -> Result<GapSummary> {
    config.validate()?;
    let k_max = config.rgd.max_iters;
    let mut results = Vec::with_capacity(config.shapes.len());

    for &(d, n) in &config.shapes {
        let mut curves: Vec<Vec<f64>> = Vec::new();
        let mut onestep_gaps: Vec<f64> = Vec::new();
        let mut rgd_secs: Vec<f64> = Vec::new();
        let mut onestep_secs: Vec<f64> = Vec::new();
        let mut failures: Vec<TrialFailure> = Vec::new();

        for t in 0..config.trials {
            let seed = config.base_seed.wrapping_add(t as u64);
            match run_trial(d, n, seed, config, k_max) {
                Ok(trial) => {
                    curves.push(trial.gaps);
                    onestep_gaps.push(trial.onestep_gap);
                    rgd_secs.push(trial.rgd_seconds);
                    onestep_secs.push(trial.onestep_seconds);
                }
                Err(e) => failures.push(TrialFailure { trial: t, error: e.to_string() }),
            }
        }

        let trials_ok = curves.len();
        let mut mean_gap = vec![0.0; k_max + 1];
        let mut std_gap = vec![0.0; k_max + 1];
        for k in 0..=k_max {
            let column: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            let (m, s) = mean_std(&column);
            mean_gap[k] = m;
            std_gap[k] = s;
        }
        let (onestep_mean_gap, onestep_std_gap) = mean_std(&onestep_gaps);
        let (rgd_mean_seconds, _) = mean_std(&rgd_secs);
        let (onestep_mean_seconds, _) = mean_std(&onestep_secs);

        results.push(ShapeResult {
            d,
            n,
            trials_ok,
            trials_failed: failures.len(),
            failures,
            mean_gap,
            std_gap,
            onestep_mean_gap,
            onestep_std_gap,
            rgd_mean_seconds,
            onestep_mean_seconds,
        });
    }

    Ok(GapSummary { results })
}

struct TrialOutcome {
    gaps: Vec<f64>,
    onestep_gap: f64,
    rgd_seconds: f64,
    onestep_seconds: f64,
}

fn run_trial(d: usize, n: usize, seed: u64, config: &BenchConfig, k_max: usize) -> Result<TrialOutcome> {
    let h = gen_instance(d, n, seed)?;
    let alpha = compute_alpha(&h, config.c)?;
    let problem = SteerProblem::new(h, alpha)?;

    let t0 = Instant::now();
    let trace = rgd_solve(&problem, &config.rgd, seed)?;
    let rgd_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let onestep = onestep_solve(&problem, seed)?;
    let onestep_seconds = t1.elapsed().as_secs_f64();

    let reference = trace
        .records
        .last()
        .ok_or_else(|| Error::Numeric("empty descent trace".into()))?
        .loss;
    let mut gaps = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let loss = trace
            .records
            .get(k.min(trace.records.len() - 1))
            .expect("records nonempty")
            .loss;
        gaps.push(relative_gap(loss, reference).0);
    }
    let onestep_gap = relative_gap(onestep.loss_after, reference).0;
    Ok(TrialOutcome { gaps, onestep_gap, rgd_seconds, onestep_seconds })
}

/// Mean and sample standard deviation; (0, 0) for empty input, std 0 for a
/// single observation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// 10 significant digits, the curve-file precision.
fn fmt_curve(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn curve_file_name(d: usize, n: usize) -> String {
    format!("curve_{d}x{n}.csv")
}

pub const SUMMARY_FILE_NAME: &str = "summary.csv";

fn curve_file_body(r: &ShapeResult) -> String {
    let mut out = String::from("iter,mean_gap,std_gap\n");
    for k in 0..r.mean_gap.len() {
        let _ = writeln!(out, "{k},{},{}", fmt_curve(r.mean_gap[k]), fmt_curve(r.std_gap[k]));
    }
    out
}

fn summary_file_body(summary: &GapSummary) -> String {
    let mut out = String::from("d,N,algo,mean_seconds,mean_final_gap,trials_ok,trials_failed\n");
    for r in &summary.results {
        let final_gap = r.mean_gap.last().copied().unwrap_or(0.0);
        let _ = writeln!(
            out,
            "{},{},rgd,{},{},{},{}",
            r.d,
            r.n,
            fmt_f64(r.rgd_mean_seconds),
            fmt_f64(final_gap),
            r.trials_ok,
            r.trials_failed
        );
        let _ = writeln!(
            out,
            "{},{},onestep,{},{},{},{}",
            r.d,
            r.n,
            fmt_f64(r.onestep_mean_seconds),
            fmt_f64(r.onestep_mean_gap),
            r.trials_ok,
            r.trials_failed
        );
    }
    out
}

/// Writes one curve file per shape plus the summary table into `dir`
/// (created if missing). Curve files depend only on the config, never on
/// timing, so identical configs export byte-identical curves.
pub fn export_results(summary: &GapSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for r in &summary.results {
        let path = dir.join(curve_file_name(r.d, r.n));
        std::fs::write(&path, curve_file_body(r)).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    let path = dir.join(SUMMARY_FILE_NAME);
    std::fs::write(&path, summary_file_body(summary)).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Rows of a curve file: (iter, mean_gap, std_gap).
pub fn parse_curve_file(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("iter,mean_gap,std_gap") => {}
        other => return Err(Error::Parse(format!("bad curve header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("curve row {i}: expected 3 fields, got {}", parts.len())));
        }
        let iter: usize = parts[0].parse().map_err(|e| Error::Parse(format!("curve row {i}: {e}")))?;
        let mean: f64 = parts[1].parse().map_err(|e| Error::Parse(format!("curve row {i}: {e}")))?;
        let std: f64 = parts[2].parse().map_err(|e| Error::Parse(format!("curve row {i}: {e}")))?;
        rows.push((iter, mean, std));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub d: usize,
    pub n: usize,
    pub algo: String,
    pub mean_seconds: f64,
    pub mean_final_gap: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

pub fn parse_summary_file(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("d,N,algo,mean_seconds,mean_final_gap,trials_ok,trials_failed") => {}
        other => return Err(Error::Parse(format!("bad summary header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Parse(format!("summary row {i}: expected 7 fields, got {}", parts.len())));
        }
        rows.push(SummaryRow {
            d: parts[0].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
            n: parts[1].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
            algo: parts[2].to_string(),
            mean_seconds: parts[3].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
            mean_final_gap: parts[4].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
            trials_ok: parts[5].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
            trials_failed: parts[6].parse().map_err(|e| Error::Parse(format!("summary row {i}: {e}")))?,
        });
    }
    Ok(rows)
}
