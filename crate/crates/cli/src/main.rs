use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use semigood::cert_lower::{max_certified_s_with, LowerBoundOptions};
use semigood::cert_upper::{brute_force_level, brute_force_semigood, upper_bound_s, UpperBoundOptions};
use semigood::ensembles::{generate, EnsembleKind, EnsembleSpec};
use semigood::io::{load_matrix, load_vector, save_matrix};
use semigood::lp::set_dump_dir;
use semigood::recovery::{l1_recover, nemp_design, nemp_run, NempDesignOutcome, RecoveryProblem};
use semigood::{CertParams, Error, ResidualNorm, Result, SenseMatrix, SignPattern};
use semigood_cli::experiment::{run_experiment, ExperimentConfig, RESULTS_FILE};
use semigood_cli::pattern::PatternRecipe;
use semigood_cli::{error_json, error_kind, exit_code, isolate_timings, EXIT_USAGE};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "semigood", version, about = "Verifiable sparsity bounds for sign-restricted l1 recovery")]
struct Cli {
    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
    /// Write every linear program solved to this directory.
    #[arg(long, global = true, value_name = "DIR")]
    dump_lp: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Omit wall-clock timings from reports.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a matrix from an ensemble.
    Gen(GenArgs),
    /// Largest certified sparsity level.
    CertifyLower(LowerArgs),
    /// Search for a certificate that the matrix is not s-semigood.
    CertifyUpper(UpperArgs),
    /// Sign-restricted l1 recovery.
    RecoverL1(L1Args),
    /// Non-Euclidean matching pursuit.
    RecoverNemp(NempArgs),
    /// Run a sweep described by a TOML config.
    Experiment(ExperimentArgs),
    /// Exhaustive semigoodness check for small matrices.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: EnsembleKind,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Degree of the trigonometric fixture.
    #[arg(long)]
    d: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct Common {
    matrix: PathBuf,
    /// unsigned, nonnegative, nonpositive, mixed, or a JSON pattern file.
    #[arg(long, default_value = "unsigned")]
    pattern: PatternRecipe,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LowerArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = CertParams::DEFAULT_XI)]
    xi: f64,
    #[arg(long, default_value_t = CertParams::DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value = "LINF")]
    residual_norm: ResidualNorm,
    #[arg(long)]
    max_s: Option<usize>,
    /// Drop certificate matrices from the report.
    #[arg(long)]
    elide_certificates: bool,
    /// Append a summary row to this CSV file.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct UpperArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = CertParams::DEFAULT_XI)]
    xi: f64,
    #[arg(long, default_value_t = CertParams::DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    s_min: usize,
    #[arg(long)]
    max_s: Option<usize>,
}

#[derive(Args)]
struct L1Args {
    #[command(flatten)]
    common: Common,
    /// Observations as a JSON vector file.
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value = "LINF")]
    residual_norm: ResidualNorm,
}

#[derive(Args)]
struct NempArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    s: usize,
    /// Bound on the observation noise.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Bound on the l1 tail of the signal beyond its s largest entries.
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 100)]
    k_max: usize,
    /// True signal, used only to report errors in the trace.
    #[arg(long)]
    w: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    trace_csv: Option<PathBuf>,
    #[arg(long, default_value = "LINF")]
    residual_norm: ResidualNorm,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip the upper-bound searches.
    #[arg(long)]
    no_upper: bool,
}

#[derive(Args)]
struct OracleArgs {
    matrix: PathBuf,
    #[arg(long, default_value = "unsigned")]
    pattern: PatternRecipe,
    /// Level to test; without it the largest semigood level is reported.
    #[arg(long)]
    s: Option<usize>,
}

fn load_with_pattern(path: &Path, recipe: &PatternRecipe) -> Result<(SenseMatrix, SignPattern)> {
    recipe.apply(&load_matrix(path)?)
}

fn emit(report: Value, output: Option<&Path>, deterministic: bool) -> Result<()> {
    let report = isolate_timings(report, !deterministic);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn elide_certificates(report: &mut Value) {
    if let Some(Value::Array(certs)) = report.get_mut("certificates") {
        for c in certs {
            if let Some(Value::Object(inner)) = c.get_mut("certificate") {
                inner.remove("y");
                inner.remove("v");
                inner.remove("margins");
            }
        }
    }
}

fn append_summary(path: &Path, rep: &semigood::cert_lower::LowerBoundReport) -> Result<()> {
    let fresh = !path.exists();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(fs::OpenOptions::new().create(true).append(true).open(path)?);
    if fresh {
        w.write_record(["s_mu", "s_unsigned", "s_signed", "t_mu", "t_unsigned", "t_signed"])?;
    }
    let t = &rep.times;
    w.write_record([
        rep.s_mu.to_string(),
        rep.s_unsigned.to_string(),
        rep.s_signed.to_string(),
        format!("{:.3}", t.mu),
        format!("{:.3}", t.unsigned),
        format!("{:.3}", t.warm + t.signed),
    ])?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let det = cli.deterministic;
    match cli.command {
        Command::Gen(g) => {
            let spec = match g.kind {
                EnsembleKind::Trig => {
                    let d = g
                        .d
                        .ok_or_else(|| Error::InvalidParameter("trig requires --d".into()))?;
                    EnsembleSpec::trig(d, g.n)
                }
                kind => {
                    let m = g
                        .m
                        .ok_or_else(|| Error::InvalidParameter("--m is required".into()))?;
                    EnsembleSpec::new(kind, m, g.n, g.seed)
                }
            };
            save_matrix(&g.output, &generate(&spec)?)
        }
        Command::CertifyLower(l) => {
            let (a, pattern) = load_with_pattern(&l.common.matrix, &l.common.pattern)?;
            let opts = LowerBoundOptions {
                xi: l.xi,
                theta: l.theta,
                residual_norm: l.residual_norm,
                max_s: l.max_s,
            };
            let rep = max_certified_s_with(&a, &pattern, &opts, None)?;
            if let Some(path) = &l.csv {
                append_summary(path, &rep)?;
            }
            let mut v = serde_json::to_value(&rep)?;
            if l.elide_certificates {
                elide_certificates(&mut v);
            }
            v["pattern"] = json!(l.common.pattern.label());
            emit(v, l.common.output.as_deref(), det)
        }
        Command::CertifyUpper(u) => {
            let (a, pattern) = load_with_pattern(&u.common.matrix, &u.common.pattern)?;
            let opts = UpperBoundOptions {
                xi: u.xi,
                theta: u.theta,
                restarts: u.restarts,
                tol: u.tol,
                seed: u.seed,
                max_s: u.max_s,
            };
            let out = upper_bound_s(&a, &pattern, u.s_min, &opts)?;
            let mut v = serde_json::to_value(&out)?;
            v["pattern"] = json!(u.common.pattern.label());
            emit(v, u.common.output.as_deref(), det)
        }
        Command::RecoverL1(r) => {
            let (a, pattern) = load_with_pattern(&r.common.matrix, &r.common.pattern)?;
            let prob = RecoveryProblem::new(a, pattern, load_vector(&r.y)?, r.eps, r.residual_norm)?;
            let out = l1_recover(&prob)?;
            emit(serde_json::to_value(&out)?, r.common.output.as_deref(), det)
        }
        Command::RecoverNemp(r) => {
            let (a, pattern) = load_with_pattern(&r.common.matrix, &r.common.pattern)?;
            let w = r.w.as_deref().map(load_vector).transpose()?;
            let design = nemp_design(&a, &pattern, r.s, r.residual_norm)?;
            let NempDesignOutcome::Design(design) = design else {
                return emit(serde_json::to_value(&design)?, r.common.output.as_deref(), det);
            };
            let prob = RecoveryProblem::new(a, pattern, load_vector(&r.y)?, r.delta, r.residual_norm)?;
            let mut trace = nemp_run(&design, &prob, r.mu, r.delta, r.k_max)?;
            // iterates live in the flipped coordinates of the normalized matrix
            for v in trace.iterates.iter_mut() {
                prob.pattern.unflip(v);
            }
            if let Some(path) = &r.trace_csv {
                fs::write(path, trace.to_csv(w.as_deref()))?;
            }
            let v = json!({
                "status": "design",
                "lambda": design.lambda,
                "rho": design.rho,
                "sigma": design.sigma,
                "alpha_infinity": design.alpha_infinity(r.delta, r.mu).ok(),
                "x": trace.last(),
                "alphas": trace.alphas,
            });
            emit(v, r.common.output.as_deref(), det)
        }
        Command::Experiment(e) => {
            let mut cfg = ExperimentConfig::load(&e.config)?;
            if let Some(dir) = e.output_dir {
                cfg.output_dir = dir;
            }
            if let Some(j) = e.jobs {
                cfg.jobs = j;
            }
            if e.no_upper {
                cfg.upper_bounds = false;
            }
            let rows = run_experiment(&cfg)?;
            let bad: usize = rows.iter().filter(|r| !r.error.is_empty()).count();
            eprintln!(
                "{} rows in {} ({} with errors)",
                rows.len(),
                cfg.output_dir.join(RESULTS_FILE).display(),
                bad
            );
            Ok(())
        }
        Command::Oracle(o) => {
            let (a, pattern) = load_with_pattern(&o.matrix, &o.pattern)?;
            let v = match o.s {
                Some(s) => json!({ "semigood": brute_force_semigood(&a, &pattern, s)? }),
                None => json!({ "level": brute_force_level(&a, &pattern)? }),
            };
            emit(v, None, det)
        }
    }
}

fn main() -> ExitCode {
    let wants_json = std::env::args().any(|a| a == "--error-json");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if wants_json {
                eprintln!("{}", error_json("usage", e.to_string().trim(), EXIT_USAGE));
            } else {
                let _ = e.print();
            }
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        2 => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();

    let error_json_flag = cli.error_json;
    let result = set_dump_dir(cli.dump_lp.clone()).and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if error_json_flag {
                eprintln!("{}", error_json(error_kind(&e), &e.to_string(), code));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code as u8)
        }
    }
}
