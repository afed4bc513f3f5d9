use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use hu_sdo::optimize::{self, CostMatrix};
use hu_sdo::refine::{self, RefineConfig, Refinement};
use hu_sdo::Error;

use crate::parse::{self, Format};
use crate::report::{
    CertificateInfo, ConfigInfo, ErrorInfo, InstanceInfo, Real, ResultInfo, SolveReport, Status, Timing,
    TraceRecord, SCHEMA_VERSION,
};

pub const EXIT_SOLVED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Mm,
    Edges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Optimize,
    Feasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundArg {
    None,
    Feasible,
    Hyperplane,
}

/// Solve the semidefinite relaxation of a QUBO with Hamiltonian Updates and
/// iterative refinement.
#[derive(Debug, Parser)]
#[command(name = "hu-sdo", version)]
pub struct Args {
    /// Cost matrix file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mm")]
    pub format: FormatArg,
    /// Additive tolerance on the original objective scale.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Inner precision constant; inner solves run at (xi/4)^2.
    #[arg(long, default_value_t = 0.1)]
    pub xi: f64,
    /// Normalized objective level; skips the bisection.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "optimize")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "feasible")]
    pub round: RoundArg,
    /// Hyperplane rounding trials.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub max_outer: usize,
}

/// A failure with its exit code and stderr category.
struct Failure {
    code: i32,
    category: &'static str,
    detail: String,
}

impl Failure {
    fn new(code: i32, category: &'static str, detail: impl Into<String>) -> Self {
        Self {
            code,
            category,
            detail: detail.into(),
        }
    }
}

fn classify(e: &Error) -> Failure {
    let (code, category) = match e {
        Error::Infeasible { .. } => (EXIT_INFEASIBLE, "infeasible"),
        Error::NonConvergence(_) => (EXIT_NONCONVERGENCE, "nonconvergence"),
        Error::Config(_) => (EXIT_ERROR, "config"),
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } => (EXIT_ERROR, "input"),
        _ => (EXIT_ERROR, "numerical"),
    };
    Failure::new(code, category, e.to_string())
}

fn emit(f: &Failure) {
    eprintln!("error: {}: {}", f.category, f.detail);
}

/// Runs the tool and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_SOLVED;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            emit(&Failure::new(EXIT_ERROR, "usage", first));
            return EXIT_ERROR;
        }
    };
    match run(&args) {
        Ok(code) => code,
        Err(f) => {
            emit(&f);
            f.code
        }
    }
}

fn check_args(args: &Args) -> Result<(), Failure> {
    if !(args.epsilon > 0.0 && args.epsilon < 1.0) {
        return Err(Failure::new(EXIT_ERROR, "config", format!("--epsilon {} must lie in (0, 1)", args.epsilon)));
    }
    if let Some(g) = args.gamma {
        if !(g.is_finite() && g.abs() <= 1.0) {
            return Err(Failure::new(EXIT_ERROR, "config", format!("--gamma {g} must lie in [-1, 1]")));
        }
    }
    if args.mode == Mode::Feasibility && args.gamma.is_none() {
        return Err(Failure::new(EXIT_ERROR, "config", "--mode feasibility requires --gamma"));
    }
    if args.round == RoundArg::Hyperplane && args.trials == 0 {
        return Err(Failure::new(EXIT_ERROR, "config", "--trials must be positive"));
    }
    Ok(())
}

fn run(args: &Args) -> Result<i32, Failure> {
    let start = Instant::now();
    check_args(args)?;

    let format = match args.format {
        FormatArg::Mm => Format::MatrixMarket,
        FormatArg::Edges => Format::EdgeList,
    };
    let raw = parse::parse_matrix(&args.input, format).map_err(|e| {
        let category = match e {
            parse::ParseError::Io { .. } => "io",
            _ => "parse",
        };
        Failure::new(EXIT_ERROR, category, e.to_string())
    })?;
    let cost = CostMatrix::new(raw);
    let parse_ms = ms(start);

    let mut cfg = RefineConfig::new(args.xi, args.epsilon, &cost).map_err(|e| classify(&e))?;
    cfg.max_outer = args.max_outer;
    cfg.validate().map_err(|e| classify(&e))?;

    let mut report = SolveReport {
        schema_version: SCHEMA_VERSION,
        instance: InstanceInfo {
            path: args.input.display().to_string(),
            format: match args.format {
                FormatArg::Mm => "mm".into(),
                FormatArg::Edges => "edges".into(),
            },
            n: cost.dim(),
            nnz: cost.raw().nnz(),
            s: cost.raw().row_sparsity(),
            fro_norm: Real(cost.fro_norm()),
        },
        config: ConfigInfo {
            epsilon: Real(args.epsilon),
            xi: Real(args.xi),
            zeta: Real(cfg.zeta),
            gamma: args.gamma.map(Real),
            seed: args.seed,
            mode: match args.mode {
                Mode::Optimize => "optimize".into(),
                Mode::Feasibility => "feasibility".into(),
            },
            round: match args.round {
                RoundArg::None => "none".into(),
                RoundArg::Feasible => "feasible".into(),
                RoundArg::Hyperplane => "hyperplane".into(),
            },
            trials: args.trials,
            max_outer: args.max_outer,
        },
        result: None,
        trace: Vec::new(),
        timing: Timing::default(),
        status: Status::Solved,
        certificate: None,
        error: None,
    };

    let solve_start = Instant::now();
    let solved: Result<(f64, Refinement, usize), Error> = match args.gamma {
        Some(g) => refine::refine_solve(&cost, g, &cfg).map(|r| (g, r, 0)),
        None => optimize::binary_search_gamma(&cost, args.epsilon, &cfg)
            .map(|s| (s.gamma_star, s.refinement, s.probes.len())),
    };
    let solve_ms = ms(solve_start);
    report.timing.parse_ms = Real(parse_ms);
    report.timing.solve_ms = Real(solve_ms);

    let (gamma_star, refinement, probes) = match solved {
        Ok(v) => v,
        Err(e) => {
            let mut f = classify(&e);
            match (&e, args.mode) {
                (Error::Infeasible { gamma_target, certificate }, Mode::Feasibility) => {
                    report.status = Status::Infeasible;
                    report.certificate = Some(CertificateInfo::new(*gamma_target, certificate));
                }
                (Error::Infeasible { .. }, Mode::Optimize) => {
                    // Exit 2 is reserved for feasibility mode.
                    f.code = EXIT_ERROR;
                    report.status = Status::Error;
                }
                _ => report.status = Status::Error,
            }
            report.error = Some(ErrorInfo {
                category: f.category.into(),
                detail: f.detail.clone(),
            });
            report.timing.total_ms = Real(ms(start));
            write_report(args, &report)?;
            return Err(f);
        }
    };

    report.trace = refinement.records.iter().map(TraceRecord::from).collect();
    let round_start = Instant::now();
    let mut result = ResultInfo {
        gamma_star_normalized: Real(gamma_star),
        objective_original_scale: Real(gamma_star * cost.original_scale()),
        rounded_objective: None,
        hyperplane_value: None,
        cut_value: None,
        bad_set_size: None,
        outer_iterations: refinement.outer_iterations(),
        inner_iterations: refinement.inner_iterations(),
        probes,
        solution_path: None,
    };
    if args.round != RoundArg::None {
        let n = cost.dim();
        let zeta = cfg.effective_zeta(n).max(refinement.state.resid_l1());
        let rounded = optimize::round_to_feasible(&refinement.state, zeta, &cost).map_err(|e| classify(&e))?;
        result.rounded_objective = Some(Real(rounded.objective));
        result.bad_set_size = Some(rounded.bad_set_size);
        match args.round {
            RoundArg::Feasible => {
                let path = sidecar_path(args);
                write_sidecar(&path, rounded.x_matrix.matrix())?;
                result.solution_path = Some(path.display().to_string());
            }
            RoundArg::Hyperplane => {
                let (x, value) = optimize::hyperplane_round(&rounded.x_matrix, &cost, args.trials, args.seed)
                    .map_err(|e| classify(&e))?;
                result.hyperplane_value = Some(Real(value));
                result.cut_value = Some(Real(cost.cut_value(&x)));
            }
            RoundArg::None => unreachable!(),
        }
    }
    report.timing.round_ms = Real(ms(round_start));
    report.result = Some(result);
    report.timing.total_ms = Real(ms(start));
    write_report(args, &report)?;
    Ok(EXIT_SOLVED)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// `<output>.x.bin`, or `<input>.x.bin` when the report goes to stdout.
fn sidecar_path(args: &Args) -> PathBuf {
    let base = args.output.as_ref().unwrap_or(&args.input);
    let mut s = base.as_os_str().to_os_string();
    s.push(".x.bin");
    PathBuf::from(s)
}

/// `n` as little-endian u64, then `n²` little-endian f64 in row-major order.
fn write_sidecar(path: &Path, x: &nalgebra::DMatrix<f64>) -> Result<(), Failure> {
    let n = x.nrows();
    let mut buf = Vec::with_capacity(8 + 8 * n * n);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            buf.extend_from_slice(&x[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot write {}: {e}", path.display())))
}

/// Reads a matrix written by the sidecar writer.
pub fn read_sidecar(path: &Path) -> std::io::Result<nalgebra::DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "truncated sidecar");
    let n = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().expect("8 bytes")) as usize;
    if bytes.len() != 8 + 8 * n * n {
        return Err(bad());
    }
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let at = 8 + 8 * (i * n + j);
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
    }))
}

fn write_report(args: &Args, report: &SolveReport) -> Result<(), Failure> {
    let json = report.to_json();
    match &args.output {
        Some(path) => fs::write(path, json)
            .map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::new(EXIT_ERROR, "io", e.to_string()))
        }
    }
}
