use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use orbit_twistor::ale::{self, ALEParams};
use orbit_twistor::continuation::{self, ContinuationConfig, ContinuationResult, PathKind};
use orbit_twistor::metric::{self, Signature};
use orbit_twistor::sections::{self, InvariantSection, RealTriple, DEFAULT_TOL};
use orbit_twistor::{hitchin, json, witness, Error};

#[derive(Parser)]
#[command(name = "orbit-twistor", version, about = "Twistor lines, metrics and invariants on deformed nilpotent cones")]
struct Cli {
    /// Master seed for randomized subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override for verdict tolerances (regularity, reality).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Census of metric signatures on the fibre over a real section.
    ScanSignature {
        #[arg(long)]
        algebra: String,
        #[arg(long)]
        section: PathBuf,
        #[arg(long, default_value_t = 32)]
        samples: usize,
        #[command(flatten)]
        cfg: CfgArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random regular real lines on D2 for sl(3) and their signatures.
    WitnessSu3 {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue a line from a seed on the cone to a target section.
    ContinueLine {
        #[arg(long)]
        algebra: String,
        #[arg(long)]
        target: PathBuf,
        /// Starting triple; defaults to the principal cone seed.
        #[arg(long)]
        seed_triple: Option<PathBuf>,
        #[command(flatten)]
        cfg: CfgArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of the explicit ALE metric on a radial grid, or a curvature report.
    #[command(allow_negative_numbers = true)]
    Ale {
        a1: f64,
        a2: f64,
        a3: f64,
        #[arg(long, default_value_t = 10.0)]
        rmax: f64,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Report finite-difference curvature at `r,theta,phi,psi` instead.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ricci: Option<Vec<f64>>,
        #[arg(long, default_value_t = ale::DEFAULT_FD_STEP)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant forms of a triple.
    Hitchin {
        #[arg(long)]
        triple: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regularity of the level section of a triple.
    CheckLevel {
        #[arg(long)]
        level: PathBuf,
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Try to factor a section through eigenvalue quadratics.
    CartanLift {
        #[arg(long)]
        section: PathBuf,
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct CfgArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    max_newton_iters: Option<usize>,
    #[arg(long)]
    min_p1: Option<f64>,
    #[arg(long, value_enum)]
    path: Option<PathArg>,
}

#[derive(ValueEnum, Clone, Copy)]
enum PathArg {
    Weighted,
    Linear,
}

impl CfgArgs {
    fn config(&self) -> ContinuationConfig {
        let d = ContinuationConfig::default();
        ContinuationConfig {
            steps: self.steps.unwrap_or(d.steps),
            newton_tol: self.newton_tol.unwrap_or(d.newton_tol),
            max_newton_iters: self.max_newton_iters.unwrap_or(d.max_newton_iters),
            min_p1: self.min_p1.unwrap_or(d.min_p1),
            path: match self.path {
                None => d.path,
                Some(PathArg::Weighted) => PathKind::Weighted,
                Some(PathArg::Linear) => PathKind::Linear,
            },
        }
    }
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    detail: serde_json::Value,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "parse", message: message.into(), detail: serde_json::Value::Null }
    }

    fn precondition(message: impl Into<String>) -> Self {
        Self { code: 3, kind: "precondition", message: message.into(), detail: serde_json::Value::Null }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind, detail) = match &e {
            Error::Parse(_) => (2, "parse", serde_json::Value::Null),
            Error::PathSingular { t, p1_ratio } => (4, "path_singular", serde_json::json!({ "t": t, "p1_ratio": p1_ratio })),
            Error::NoConvergence { t, residual } => (4, "no_convergence", serde_json::json!({ "t": t, "residual": residual })),
            Error::Unsolvable { .. }
            | Error::FitFailure { .. }
            | Error::IllConditioned { .. }
            | Error::StepTooLarge { .. }
            | Error::Inconclusive { .. }
            | Error::Degenerate { .. } => (4, "numerical", serde_json::Value::Null),
            _ => (3, "precondition", serde_json::Value::Null),
        };
        Self { code, kind, message, detail }
    }
}

type Outcome = Result<(), Failure>;

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::precondition(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn algebra_rank(name: &str) -> Result<usize, Failure> {
    let n = name
        .strip_prefix("sl")
        .and_then(|d| d.trim_start_matches('(').trim_end_matches(')').parse::<usize>().ok())
        .ok_or_else(|| Failure::parse(format!("unknown algebra {name:?}; expected sl2, sl3, ...")))?;
    if n < 2 {
        return Err(Failure::precondition(format!("sl{n} is not simple")));
    }
    Ok(n)
}

fn require_seed(cli_seed: Option<u64>) -> Result<u64, Failure> {
    cli_seed.ok_or_else(|| Failure::parse("this subcommand needs --seed"))
}

fn read_section(path: &Path, n: usize, tol: f64) -> Result<InvariantSection, Failure> {
    let s: InvariantSection = read(path)?;
    // Re-validate degrees since the payload bypassed the constructor.
    let s = InvariantSection::new(s.n, s.forms)?;
    if s.n != n {
        return Err(Failure::precondition(format!("section is for sl{}, not sl{n}", s.n)));
    }
    if !s.is_real(tol) {
        return Err(Failure::precondition("section is not real"));
    }
    Ok(s)
}

fn read_triple(path: &Path) -> Result<RealTriple, Failure> {
    let t: RealTriple = read(path)?;
    Ok(RealTriple::new(t.t1, t.t2, t.t3)?)
}

#[derive(Serialize)]
struct ContinueLineReport {
    n: usize,
    config: ContinuationConfig,
    result: ContinuationResult,
    signature: Option<Signature>,
    gram_error: Option<String>,
}

fn run(cli: Cli) -> Outcome {
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Failure::precondition("--tol must be positive"));
    }
    match cli.command {
        Command::ScanSignature { algebra, section, samples, cfg, out } => {
            let n = algebra_rank(&algebra)?;
            let seed = require_seed(cli.seed)?;
            let target = read_section(&section, n, tol)?;
            let report = continuation::explore_components(&target, samples, seed, &cfg.config());
            emit(&out, &json::document("component_report", &report))?;
            let c = report.counts;
            if c.definite_positive + c.definite_negative + c.indefinite == 0 {
                return Err(Failure::precondition("no regular samples"));
            }
            Ok(())
        }
        Command::WitnessSu3 { samples, out } => {
            let seed = require_seed(cli.seed)?;
            let report = witness::real_indefinite_search(3, seed, samples);
            emit(&out, &json::document("search_report", &report))?;
            if report.regular == 0 {
                return Err(Failure::precondition("no regular samples"));
            }
            Ok(())
        }
        Command::ContinueLine { algebra, target, seed_triple, cfg, out } => {
            let n = algebra_rank(&algebra)?;
            let target = read_section(&target, n, tol)?;
            let seed = match seed_triple {
                Some(p) => read_triple(&p)?,
                None => continuation::cone_seed(n)?,
            };
            if seed.n != n {
                return Err(Failure::precondition(format!("seed triple is for sl{}, not sl{n}", seed.n)));
            }
            let config = cfg.config();
            let result = continuation::continue_line(&seed, &target, &config)?;
            let (signature, gram_error) = match metric::metric_gram(&result.triple) {
                Ok(g) => (Some(g.signature), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = ContinueLineReport { n, config, result, signature, gram_error };
            emit(&out, &json::document("continuation", &report))
        }
        Command::Ale { a1, a2, a3, rmax, grid, ricci, step, out } => {
            let a = ALEParams::new(a1, a2, a3)?;
            match ricci {
                Some(p) => {
                    if p.len() != 4 {
                        return Err(Failure::parse("--ricci takes r,theta,phi,psi"));
                    }
                    let rep = ale::ricci_fd(&a, [p[0], p[1], p[2], p[3]], step)?;
                    emit(&out, &json::document("ricci_report", &rep))
                }
                None => {
                    let csv = ale::grid_csv(&a, rmax, grid)?;
                    emit(&out, csv.trim_end())
                }
            }
        }
        Command::Hitchin { triple, out } => {
            let t = read_triple(&triple)?;
            emit(&out, &json::document("invariant_section", &hitchin::hitchin_map(&t)))
        }
        Command::CheckLevel { level, grid, out } => {
            let l = read_triple(&level)?;
            let mut rep = sections::check_level_regular(&l, grid);
            rep.determinant_regular = rep.p1_ratio > tol;
            rep.regular = rep.determinant_regular && rep.grid_regular;
            emit(&out, &json::document("level_report", &rep))
        }
        Command::CartanLift { section, grid, out } => {
            let s: InvariantSection = read(&section)?;
            let s = InvariantSection::new(s.n, s.forms)?;
            let lift = sections::cartan_lift(&s, grid)?;
            emit(&out, &json::document("cartan_lift", &lift))
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists, in which case it is kept.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let err = serde_json::json!({
                "schema": json::SCHEMA,
                "kind": "error",
                "data": { "error": f.kind, "message": f.message, "detail": f.detail },
            });
            eprintln!("{err}");
            ExitCode::from(f.code)
        }
    }
}
