//! `steervec`: solve, bench, session, check, and serve, either in process or
//! against a running service via `--server`.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 property
//! failure, 2 usage or input parse error, 3 runtime failure.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use steervec_client::{Client, ClientError};
use steervec_core::api::{self, Algo, SolveRequest, SolveResponse};
use steervec_core::bench::{
    curve_file_name, export_results, run_bench, BenchConfig, GapSummary, SUMMARY_FILE_NAME,
};
use steervec_core::check::{all_passed, run_checks, CheckOptions, PropertyResult, Scale};
use steervec_core::matrix::Matrix;
use steervec_core::session::{
    handle_line, AlphaPolicy, SeedPolicy, SessionConfig, SessionState, SolverChoice,
};
use steervec_core::solver::RgdParams;
use steervec_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "steervec", version, about = "Steering-matrix solvers over scaled orthonormal frames")]
struct Cli {
    /// Base URL of a running steervec service; work is delegated over HTTP.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a steering matrix for an activation matrix file.
    Solve(SolveArgs),
    /// Run the gap benchmark and write curve/summary files.
    Bench(BenchArgs),
    /// Serve the token-step line protocol on stdin/stdout.
    Session(SessionArgs),
    /// Run the numerical property suites.
    Check(CheckArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Onestep,
    Rgd,
}

#[derive(Copy, Clone, ValueEnum)]
enum ScaleArg {
    Quick,
    Full,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Quick => Scale::Quick,
            ScaleArg::Full => Scale::Full,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SeedPolicyArg {
    /// Same sampling seed every step: replayable transcripts.
    Fixed,
    /// Seed advances with the token index.
    PerToken,
}

#[derive(Args)]
struct SolveArgs {
    /// Activation matrix file ("rows cols" header, one row per line).
    matrix: PathBuf,

    #[arg(long, value_enum, default_value_t = AlgoArg::Onestep)]
    algo: AlgoArg,

    /// Fixed scale alpha for the frame constraint VtV = alpha I.
    #[arg(long, conflicts_with = "spectral_c")]
    alpha: Option<f64>,

    /// Spectral scaling alpha = C * ||H||_2^2; default C = 0.5 if neither
    /// --alpha nor --C is given.
    #[arg(long = "C", id = "spectral_c", value_name = "C")]
    c: Option<f64>,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Iteration cap (rgd only).
    #[arg(long)]
    iters: Option<usize>,

    /// Backtracking shrink factor in (0,1) (rgd only).
    #[arg(long)]
    rho: Option<f64>,

    /// Sufficient-decrease constant (rgd only).
    #[arg(long = "c", id = "armijo_c", value_name = "CONST")]
    armijo_c: Option<f64>,

    /// Line-search starting step (rgd only).
    #[arg(long = "eta-bar")]
    eta_bar: Option<f64>,

    /// Write V to this file; the summary then goes to stdout instead of stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config (TOML). Defaults to the full-scale study.
    #[arg(long, conflicts_with = "scale")]
    config: Option<PathBuf>,

    /// Built-in config instead of a file: quick smoke run or full study.
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,

    /// Directory for curve_{d}x{N}.csv files and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, value_enum, default_value_t = AlgoArg::Onestep)]
    solver: AlgoArg,

    /// Fixed alpha for every step.
    #[arg(long, conflicts_with = "spectral_c")]
    alpha: Option<f64>,

    /// Per-step spectral scaling alpha = C * ||H||_2^2; default C = 0.5.
    #[arg(long = "C", id = "spectral_c", value_name = "C")]
    c: Option<f64>,

    /// Activation dimension; every request must send columns of this length.
    #[arg(long)]
    dim: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = SeedPolicyArg::Fixed)]
    seed_policy: SeedPolicyArg,

    /// Iteration cap (rgd solver only).
    #[arg(long)]
    iters: Option<usize>,

    /// Backtracking shrink factor (rgd solver only).
    #[arg(long)]
    rho: Option<f64>,

    /// Sufficient-decrease constant (rgd solver only).
    #[arg(long = "c", id = "armijo_c", value_name = "CONST")]
    armijo_c: Option<f64>,

    /// Line-search starting step (rgd solver only).
    #[arg(long = "eta-bar")]
    eta_bar: Option<f64>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = ScaleArg::Quick)]
    scale: ScaleArg,

    /// Negative control: perturb retraction outputs so the retraction suites
    /// must fail. Exists to prove the checks can fail.
    #[arg(long, hide = true)]
    corrupt_retraction: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8787")]
    addr: String,
}

/// Usage/input problems exit 2, everything else that fails exits 3.
enum Failure {
    Usage(String),
    Runtime(String),
}

type CmdResult = Result<i32, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// 4xx means the service rejected the request content; everything else is
/// a transport or server-side failure.
fn client_err(e: ClientError) -> Failure {
    match &e {
        ClientError::Service { status, .. } if *status == 400 || *status == 422 => {
            Failure::Usage(e.to_string())
        }
        _ => Failure::Runtime(e.to_string()),
    }
}

/// Same classification the service applies when mapping errors to 400/500,
/// so in-process and --server runs exit identically.
fn core_err(e: CoreError) -> Failure {
    match &e {
        CoreError::Config(_)
        | CoreError::Parse(_)
        | CoreError::Protocol(_)
        | CoreError::Dimension(_)
        | CoreError::NonFinite
        | CoreError::DegenerateInput(_)
        | CoreError::InsufficientDimension { .. } => Failure::Usage(e.to_string()),
        _ => Failure::Runtime(e.to_string()),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Solve(args) => cmd_solve(cli.server, args),
        Command::Bench(args) => cmd_bench(cli.server, args),
        Command::Session(args) => cmd_session(cli.server, args),
        Command::Check(args) => cmd_check(cli.server, args),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn apply_rgd_flags(
    iters: Option<usize>,
    rho: Option<f64>,
    armijo_c: Option<f64>,
    eta_bar: Option<f64>,
) -> RgdParams {
    let mut p = RgdParams::default();
    if let Some(k) = iters {
        p.max_iters = k;
    }
    if let Some(r) = rho {
        p.rho = r;
    }
    if let Some(c) = armijo_c {
        p.c = c;
    }
    if let Some(e) = eta_bar {
        p.eta_bar = e;
    }
    p
}

fn cmd_solve(server: Option<String>, args: SolveArgs) -> CmdResult {
    let has_rgd_flags = args.iters.is_some()
        || args.rho.is_some()
        || args.armijo_c.is_some()
        || args.eta_bar.is_some();
    if args.algo == AlgoArg::Onestep && has_rgd_flags {
        return Err(Failure::Usage(
            "--iters/--rho/--c/--eta-bar apply only with --algo rgd".into(),
        ));
    }

    let h = Matrix::load(&args.matrix).map_err(usage)?;
    let rgd = match args.algo {
        AlgoArg::Onestep => None,
        AlgoArg::Rgd => {
            let p = apply_rgd_flags(args.iters, args.rho, args.armijo_c, args.eta_bar);
            p.validate().map_err(usage)?;
            Some(p)
        }
    };
    let req = SolveRequest {
        matrix: matrix_rows(&h),
        algo: match args.algo {
            AlgoArg::Onestep => Algo::OneStep,
            AlgoArg::Rgd => Algo::Rgd,
        },
        alpha: args.alpha,
        c: args.c,
        seed: args.seed,
        rgd,
    };

    let resp: SolveResponse = match &server {
        Some(url) => Client::new(url.clone()).map_err(client_err)?.solve(&req).map_err(client_err)?,
        None => api::solve(&req).map_err(core_err)?,
    };

    let v = Matrix::from_rows(&resp.v).map_err(runtime)?;
    let summary = serde_json::to_string(&resp.summary).map_err(runtime)?;
    match &args.out {
        Some(path) => {
            v.save(path).map_err(runtime)?;
            println!("{summary}");
        }
        None => {
            let stdout = std::io::stdout();
            v.write_text(stdout.lock()).map_err(runtime)?;
            eprintln!("{summary}");
        }
    }
    Ok(0)
}

fn matrix_rows(h: &Matrix) -> Vec<Vec<f64>> {
    (0..h.rows()).map(|i| (0..h.cols()).map(|j| h.get(i, j)).collect()).collect()
}

fn cmd_bench(server: Option<String>, args: BenchArgs) -> CmdResult {
    let config = match (&args.config, args.scale) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(CoreError::io(path.display().to_string(), e)))?;
            BenchConfig::from_toml_str(&text).map_err(usage)?
        }
        (None, Some(ScaleArg::Quick)) => BenchConfig::quick(),
        (None, Some(ScaleArg::Full)) | (None, None) => BenchConfig::full_scale(),
    };

    let summary: GapSummary = match &server {
        Some(url) => Client::new(url.clone()).map_err(client_err)?.bench(&config).map_err(client_err)?,
        None => run_bench(&config).map_err(core_err)?,
    };

    if let Err(e) = export_results(&summary, &args.out) {
        remove_partial_outputs(&summary, &args.out);
        return Err(runtime(e));
    }
    eprintln!(
        "wrote {} curve files and {} to {}",
        summary.results.len(),
        SUMMARY_FILE_NAME,
        args.out.display()
    );
    Ok(0)
}

fn remove_partial_outputs(summary: &GapSummary, dir: &Path) {
    for r in &summary.results {
        let _ = std::fs::remove_file(dir.join(curve_file_name(r.d, r.n)));
    }
    let _ = std::fs::remove_file(dir.join(SUMMARY_FILE_NAME));
}

fn cmd_session(server: Option<String>, args: SessionArgs) -> CmdResult {
    let solver = match args.solver {
        AlgoArg::Onestep => SolverChoice::OneStep,
        AlgoArg::Rgd => {
            SolverChoice::Rgd(apply_rgd_flags(args.iters, args.rho, args.armijo_c, args.eta_bar))
        }
    };
    if matches!(args.solver, AlgoArg::Onestep)
        && (args.iters.is_some() || args.rho.is_some() || args.armijo_c.is_some() || args.eta_bar.is_some())
    {
        return Err(Failure::Usage(
            "--iters/--rho/--c/--eta-bar apply only with --solver rgd".into(),
        ));
    }
    let alpha_policy = match (args.alpha, args.c) {
        (Some(a), None) => AlphaPolicy::Fixed(a),
        (None, Some(c)) => AlphaPolicy::SpectralScaled(c),
        (None, None) => AlphaPolicy::SpectralScaled(0.5),
        (Some(_), Some(_)) => unreachable!("clap conflict"),
    };
    let seed_policy = match args.seed_policy {
        SeedPolicyArg::Fixed => SeedPolicy::Fixed(args.seed),
        SeedPolicyArg::PerToken => SeedPolicy::PerToken(args.seed),
    };
    let config = SessionConfig { solver, alpha_policy, dim: args.dim, seed_policy };

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();

    let summary = match &server {
        Some(url) => {
            let client = Client::new(url.clone()).map_err(client_err)?;
            let id = client.open_session(&config).map_err(client_err)?;
            for line in stdin.lock().lines() {
                let line = line.map_err(runtime)?;
                let out = client.step_line(&id, &line).map_err(client_err)?;
                writeln!(stdout, "{out}").map_err(runtime)?;
                stdout.flush().map_err(runtime)?;
            }
            client.close_session(&id).map_err(client_err)?
        }
        None => {
            let mut state = SessionState::open(config).map_err(usage)?;
            for line in stdin.lock().lines() {
                let line = line.map_err(runtime)?;
                let out = handle_line(&mut state, &line);
                writeln!(stdout, "{out}").map_err(runtime)?;
                stdout.flush().map_err(runtime)?;
            }
            state.close()
        }
    };
    eprintln!("{}", serde_json::to_string(&summary).map_err(runtime)?);
    Ok(0)
}

fn cmd_check(server: Option<String>, args: CheckArgs) -> CmdResult {
    let opts = CheckOptions {
        seed: args.seed,
        scale: args.scale.into(),
        corrupt_retraction: args.corrupt_retraction,
    };
    let results: Vec<PropertyResult> = match &server {
        Some(url) => Client::new(url.clone()).map_err(client_err)?.check(&opts).map_err(client_err)?,
        None => run_checks(&opts),
    };
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        if r.detail.is_empty() {
            println!("{status} {}", r.name);
        } else {
            println!("{status} {}: {}", r.name, r.detail);
        }
    }
    Ok(if all_passed(&results) { 0 } else { 1 })
}

fn cmd_serve(args: ServeArgs) -> CmdResult {
    let addr: SocketAddr = args.addr.parse().map_err(|e| usage(format!("bad --addr: {e}")))?;
    steervec_server::serve_blocking(addr).map_err(runtime)?;
    Ok(0)
}
