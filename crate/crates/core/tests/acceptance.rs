//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    l1_dist, linf_dist, pattern_named, random_sparse, rng, semigood_by_uniqueness, small_suite, Case,
};
use itertools::Itertools;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use semigood::cert_lower::{
    beta_from_certificate, max_certified_s, max_certified_s_from, rescale_certificate,
    unsigned_max_s, validate_certificate, LowerBoundOptions, LowerBoundReport,
};
use semigood::cert_upper::{
    brute_force_level, brute_force_semigood, u_polytope_max, u_step, upper_bound_s,
    UpperBoundOptions,
};
use semigood::ensembles::{generate, EnsembleKind, EnsembleSpec};
use semigood::lp::{solve, stop_norm_epigraph, LinExpr, LpBuilder, Sense};
use semigood::recovery::{
    error_bound_alpha, error_bound_theta, l1_recover, max_column_norm, nemp_design,
    nemp_error_limit, nemp_run, NempDesign, RecoveryProblem,
};
use semigood::{
    best_s_approx, phi_s, s_top_norm, CertParams, ResidualNorm, SenseMatrix, SignPattern,
};

type Verdict = Result<String, String>;

const XI: f64 = CertParams::DEFAULT_XI;
const THETA: f64 = CertParams::DEFAULT_THETA;

struct SmallRow {
    case: Case,
    report: LowerBoundReport,
    exact: usize,
}

struct LargeRow {
    label: String,
    m: usize,
    a: SenseMatrix,
    pattern: SignPattern,
    report: LowerBoundReport,
}

struct Ctx {
    small: Vec<SmallRow>,
    large: Option<(Vec<LargeRow>, Duration)>,
}

impl Ctx {
    fn large(&mut self) -> &[LargeRow] {
        if self.large.is_none() {
            let clock = Instant::now();
            let rows = large_suite();
            self.large = Some((rows, clock.elapsed()));
        }
        &self.large.as_ref().unwrap().0
    }

    /// Every certified (matrix, pattern, report) from both suites.
    fn certified(&mut self) -> Vec<(SenseMatrix, SignPattern, LowerBoundReport)> {
        let mut out: Vec<_> = self
            .small
            .iter()
            .filter(|r| r.report.s_signed > 0)
            .map(|r| (r.case.a.clone(), r.case.pattern.clone(), r.report.clone()))
            .collect();
        out.extend(
            self.large()
                .iter()
                .filter(|r| r.report.s_signed > 0)
                .map(|r| (r.a.clone(), r.pattern.clone(), r.report.clone())),
        );
        out
    }
}

fn large_suite() -> Vec<LargeRow> {
    let mut rows = Vec::new();
    for kind in [EnsembleKind::Gaussian, EnsembleKind::Rademacher] {
        for m in [32, 48, 56] {
            for seed in 0..2 {
                let a = generate(&EnsembleSpec::new(kind, m, 64, seed)).unwrap();
                let unsigned = unsigned_max_s(&a).unwrap();
                let pattern = pattern_named("nonnegative", 64);
                let report =
                    max_certified_s_from(&a, &pattern, &LowerBoundOptions::default(), None, &unsigned).unwrap();
                rows.push(LargeRow {
                    label: format!("{}-{m}x64-seed{seed}", kind.name()),
                    m,
                    a,
                    pattern,
                    report,
                });
            }
        }
    }
    rows
}

fn criterion(id: usize, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let clock = Instant::now();
    let verdict = f();
    report_line(id, title, budget, clock.elapsed(), verdict)
}

fn report_line(id: usize, title: &str, budget: Option<Duration>, took: Duration, verdict: Verdict) -> bool {
    let verdict = match (verdict, budget) {
        (Ok(_), Some(b)) if took > b => Err(format!("runtime {:.1} s exceeds {:.0} s", took.as_secs_f64(), b.as_secs_f64())),
        (v, _) => v,
    };
    let (tag, detail, ok) = match verdict {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} C{id} {title}: {detail} [{:.1} s]", took.as_secs_f64());
    ok
}

fn c1_oracle_sandwich() -> (Vec<SmallRow>, Verdict) {
    let upper_opts = UpperBoundOptions::default();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut certificates = 0;
    for case in small_suite(60, 9) {
        let (a, p) = (&case.a, &case.pattern);
        let report = max_certified_s(a, p, XI, THETA, None).unwrap();
        let exact = brute_force_level(a, p).unwrap();
        if report.s_signed > exact {
            violations.push(format!("{}: s_signed {} > s* {exact}", case.label, report.s_signed));
        }
        let upper = upper_bound_s(a, p, 1, &upper_opts).unwrap();
        if let (Some(s), Some(cert)) = (upper.s_ub, &upper.certificate) {
            certificates += 1;
            if cert.validate(a, p).is_err() || brute_force_semigood(a, p, s).unwrap() {
                violations.push(format!("{}: certificate at {s} but s* = {exact}", case.label));
            }
        }
        rows.push(SmallRow {
            case,
            report,
            exact,
        });
    }
    let verdict = if violations.is_empty() {
        let tight = rows.iter().filter(|r| r.report.s_signed == r.exact).count();
        Ok(format!(
            "{} instances, 0 violations, {certificates} non-semigood certificates confirmed, lower bound tight on {tight}",
            rows.len()
        ))
    } else {
        Err(violations.join("; "))
    };
    (rows, verdict)
}

fn c2_dominance(ctx: &mut Ctx) -> Verdict {
    let mut bad: Vec<String> = ctx
        .small
        .iter()
        .filter(|r| r.report.s_signed < r.report.s_mu)
        .map(|r| r.case.label.clone())
        .collect();
    let n_small = ctx.small.len();
    let large = ctx.large();
    bad.extend(large.iter().filter(|r| r.report.s_signed < r.report.s_mu).map(|r| r.label.clone()));
    if bad.is_empty() {
        Ok(format!("{} rows, s_signed >= s_mu on all", n_small + large.len()))
    } else {
        Err(format!("s_signed < s_mu on {}", bad.join(", ")))
    }
}

fn c3_ceiling() -> Verdict {
    let (m, n) = (5usize, 128usize);
    let ceiling = (2.0 * (2.0 * m as f64).sqrt() + 1.0).floor() as usize;
    let mut levels = Vec::new();
    for seed in 0..10 {
        let a = generate(&EnsembleSpec::new(EnsembleKind::Gaussian, m, n, seed)).unwrap();
        let rep = max_certified_s(&a, &SignPattern::nonnegative(n), XI, THETA, None).unwrap();
        levels.push(rep.s_signed.max(rep.s_unsigned));
    }
    if levels.iter().all(|&s| s <= ceiling) {
        Ok(format!("certified levels {levels:?} all <= {ceiling}"))
    } else {
        Err(format!("certified levels {levels:?} exceed {ceiling}"))
    }
}

fn c4_trig() -> Verdict {
    let a = generate(&EnsembleSpec::trig(2, 32)).unwrap();
    let p = SignPattern::nonnegative(32);
    let rep = max_certified_s(&a, &p, XI, THETA, None).unwrap();
    if rep.s_signed > 2 {
        return Err(format!("s_signed = {} > 2", rep.s_signed));
    }
    if !semigood_by_uniqueness(&a, &p, 1) {
        return Err("not 1-semigood by l1 uniqueness".into());
    }
    Ok(format!("s_signed = {}, 1-semigood confirmed by uniqueness", rep.s_signed))
}

fn c5_exact_recovery(ctx: &mut Ctx) -> Verdict {
    let mut r = rng(5);
    let mut failures = Vec::new();
    let mut solved = 0;
    let certified = ctx.certified();
    for (a, p, rep) in &certified {
        let s = rep.s_signed;
        for _ in 0..100 {
            let w = random_sparse(&mut r, p, s);
            let prob = RecoveryProblem::new(a.clone(), p.clone(), a.mul_vec(&w), 0.0, ResidualNorm::Linf).unwrap();
            let err = match l1_recover(&prob) {
                Ok(out) => out.solved().map_or(f64::INFINITY, |rec| linf_dist(&rec.x, &w)),
                Err(_) => f64::INFINITY,
            };
            if err > 1e-6 {
                failures.push(format!("{}x{} s={s}: error {err:.2e}", a.rows(), a.cols()));
            }
            solved += 1;
        }
    }
    if failures.is_empty() {
        Ok(format!("{solved} signals over {} certified (A, s), 0 failures", certified.len()))
    } else {
        Err(format!("{} failures, e.g. {}", failures.len(), failures[0]))
    }
}

/// A sign-feasible signal whose `s` leading entries are large and whose tail
/// has l1 mass about `tail`.
fn signal_with_tail(r: &mut ChaCha8Rng, p: &SignPattern, s: usize, tail: f64) -> Vec<f64> {
    let n = p.n();
    let mut w = random_sparse(r, p, s);
    for v in w.iter_mut() {
        if *v != 0.0 {
            *v = v.signum() * (1.0 + v.abs());
        }
    }
    let zeros: Vec<usize> = (0..n).filter(|&i| w[i] == 0.0).collect();
    if !zeros.is_empty() {
        for &i in &zeros {
            let mag = tail / zeros.len() as f64 * r.random_range(0.0..2.0);
            w[i] = if p.is_plus(i) || r.random::<bool>() { mag } else { -mag };
        }
    }
    w
}

fn noise(r: &mut ChaCha8Rng, m: usize, delta: f64) -> Vec<f64> {
    (0..m).map(|_| r.random_range(-delta..=delta)).collect()
}

fn c6_error_bounds(ctx: &mut Ctx) -> Verdict {
    let mut r = rng(6);
    let certified = ctx.certified();
    let norm = ResidualNorm::Linf;
    let (mut checked, mut worst_ratio) = (0usize, 0.0f64);
    let mut violations = Vec::new();
    for k in 0..100 {
        let (a, p, rep) = &certified[k % certified.len()];
        let cert = rep.best_certificate().expect("certified rows carry a certificate");
        let s = rep.s_signed;
        let beta = beta_from_certificate(cert, p);
        if !beta.is_finite() || !cert.sigma_achieved.is_finite() || !cert.rho_achieved.is_finite() {
            return Err("certificate without finite (rho, sigma, beta)".into());
        }
        let delta = r.random_range(1e-3..5e-2);
        let tail = r.random_range(0.0..0.05);
        let w = signal_with_tail(&mut r, p, s, tail);
        let (_, mu_tail) = best_s_approx(&w, s).unwrap();
        let e = noise(&mut r, a.rows(), delta);
        let y: Vec<f64> = a.mul_vec(&w).iter().zip(&e).map(|(u, v)| u + v).collect();
        let prob = RecoveryProblem::new(a.clone(), p.clone(), y, delta, norm).unwrap();
        let out = l1_recover(&prob).map_err(|e| e.to_string())?;
        let rec = out.solved().ok_or("noisy instance reported infeasible")?;
        let nu = rec.duality_gap.abs() + 1e-7;
        let err = l1_dist(&rec.x, &w);
        let p_ = cert.params;
        let b11 = error_bound_theta(p_.xi, p_.theta, beta, nu, mu_tail, delta, delta).unwrap();
        let b12 = error_bound_alpha(p_.xi, beta, max_column_norm(a, norm), nu, mu_tail, delta, delta).unwrap();
        if err > b11 {
            violations.push(format!("(11): {err:.3e} > {b11:.3e}"));
        }
        if err > b12 {
            violations.push(format!("(12): {err:.3e} > {b12:.3e}"));
        }
        worst_ratio = worst_ratio.max(err / b11.min(b12));
        checked += 1;
    }
    if violations.is_empty() {
        Ok(format!("{checked} noisy instances, both bounds hold, largest error/bound ratio {worst_ratio:.2e}"))
    } else {
        Err(violations.join("; "))
    }
}

fn nemp_designs() -> Vec<(SenseMatrix, SignPattern, NempDesign)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < 10 && seed < 200 {
        let (m, n) = (12 + seed as usize % 5, 16 + seed as usize % 4);
        let a = generate(&EnsembleSpec::new(EnsembleKind::Gaussian, m, n, 700 + seed)).unwrap();
        let name = common::PATTERNS[seed as usize % 3];
        let p = pattern_named(name, n);
        let s = 1 + usize::from(seed % 4 == 0);
        if let Some(d) = nemp_design(&a, &p, s, ResidualNorm::Linf).unwrap().design() {
            if d.lambda < 1.0 {
                out.push((a.clone(), p, d.clone()));
            }
        }
        seed += 1;
    }
    out
}

fn c7_nemp() -> Verdict {
    let designs = nemp_designs();
    if designs.len() < 5 {
        return Err(format!("only {} designs with lambda < 1", designs.len()));
    }
    let mut r = rng(7);
    let (mut runs, mut steps) = (0usize, 0usize);
    for k in 0..100 {
        let (a, p, d) = &designs[k % designs.len()];
        let s = d.s;
        let delta = if k % 4 == 0 { 0.0 } else { r.random_range(0.0..0.05) };
        let w = signal_with_tail(&mut r, p, s, if k % 3 == 0 { 0.0 } else { 0.02 });
        let (_, mu) = best_s_approx(&w, s).unwrap();
        let e = noise(&mut r, a.rows(), delta);
        let y: Vec<f64> = a.mul_vec(&w).iter().zip(&e).map(|(u, v)| u + v).collect();
        let prob = RecoveryProblem::new(a.clone(), p.clone(), y.clone(), delta, ResidualNorm::Linf).unwrap();
        let trace = nemp_run(d, &prob, mu, delta, 60).map_err(|e| e.to_string())?;

        let yty: Vec<f64> = (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| d.y[(i, j)] * y[i]).sum())
            .collect();
        let sd = d.sigma * delta;
        let mut alpha = (s_top_norm(&yty, s).unwrap() + s as f64 * sd + mu) / (1.0 - d.rho);
        for (t, (v, &alpha_t)) in trace.iterates.iter().zip(&trace.alphas).enumerate() {
            if t > 0 {
                alpha = d.lambda * alpha + 2.0 * s as f64 * sd + mu;
            }
            if (alpha - alpha_t).abs() > 1e-12 * alpha.abs().max(1.0) {
                return Err(format!("run {k} step {t}: alpha {alpha_t} vs recursion {alpha}"));
            }
            let closed = nemp_error_limit(d, delta, mu, trace.alphas[0], t).unwrap();
            if (closed - alpha_t).abs() > 1e-9 * alpha_t.abs().max(1.0) {
                return Err(format!("run {k} step {t}: closed form {closed} vs {alpha_t}"));
            }
            for (i, (&vi, &wi)) in v.iter().zip(&w).enumerate() {
                let tol = 1e-9 * (1.0 + wi.abs());
                if vi < wi.min(0.0) - tol || vi > wi.max(0.0) + tol {
                    return Err(format!("run {k} step {t}: v[{i}] = {vi} outside conv(0, {wi})"));
                }
            }
            let err = l1_dist(v, &w);
            if err > alpha_t * (1.0 + 1e-9) + 1e-12 {
                return Err(format!("run {k} step {t}: error {err} > alpha {alpha_t}"));
            }
            steps += 1;
        }
        runs += 1;
    }
    Ok(format!("{runs} runs over {} designs, {steps} iterates checked", designs.len()))
}

fn c8_rescale() -> Verdict {
    let mut r = rng(8);
    let (xi, theta) = (0.9, 2.0);
    let mut done = 0;
    let mut tried = 0;
    for case in small_suite(300, 9) {
        if done == 50 {
            break;
        }
        tried += 1;
        let rep = max_certified_s(&case.a, &case.pattern, xi, theta, None).unwrap();
        let Some(cert) = rep.best_certificate() else { continue };
        let xi_new = r.random_range(xi..1.0).max(xi + 1e-6);
        let theta_new = theta + r.random_range(0.0..50.0);
        let moved = rescale_certificate(&case.a, &case.pattern, cert, xi_new, theta_new)
            .map_err(|e| format!("{}: {e}", case.label))?;
        validate_certificate(&case.a, &case.pattern, &moved)
            .map_err(|e| format!("{} to ({xi_new}, {theta_new}): {e}", case.label))?;
        done += 1;
    }
    if done < 50 {
        return Err(format!("only {done} certified instances among {tried}"));
    }
    Ok(format!("{done} rescaled certificates re-validated"))
}

/// The functional as a maximum over index sets of size at most `s`.
fn theta_functional(x: &[f64], s: usize, xi: f64, theta: f64, p: &SignPattern) -> f64 {
    let term = |i: usize| {
        if p.is_plus(i) {
            ((1.0 - xi) * x[i]).max((1.0 + theta * xi) * x[i])
        } else {
            (1.0 + xi) * x[i].abs()
        }
    };
    (0..=s)
        .flat_map(|k| (0..x.len()).combinations(k))
        .map(|j| j.into_iter().map(term).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn c9_functionals() -> Verdict {
    let mut r = rng(9);
    let (mut worst_phi, mut worst_u, mut worst_top) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = r.random_range(1..=8);
        let s = r.random_range(1..=n);
        let p = SignPattern::new(n, &(0..n).filter(|_| r.random::<bool>()).collect::<Vec<_>>()).unwrap();
        let xi = r.random_range(0.0..1.0);
        let theta = r.random_range(1.0..20.0);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let phi = phi_s(&x, s, xi, theta, &p).unwrap();
        worst_phi = worst_phi.max((phi - theta_functional(&x, s, xi, theta, &p)).abs());

        let u = u_step(&x, s, xi, theta, &p);
        let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        let lp = u_polytope_max(&x, s, xi, theta, &p).unwrap();
        worst_u = worst_u.max((ux - phi).abs()).max((lp - phi).abs());

        let mut b = LpBuilder::new(Sense::Min);
        let t = b.add_free_var();
        b.set_objective_coeff(t, 1.0);
        let z: Vec<LinExpr> = x.iter().map(|&v| LinExpr::constant(v)).collect();
        stop_norm_epigraph(&mut b, &z, s, &t.into()).unwrap();
        let out = solve(&b.build().unwrap()).unwrap();
        worst_top = worst_top.max((out.objective - s_top_norm(&x, s).unwrap()).abs());
    }
    let detail = format!(
        "1000 samples; max deviations: phi {worst_phi:.1e}, u-step/LP {worst_u:.1e}, epigraph {worst_top:.1e}"
    );
    if worst_phi <= 1e-10 && worst_u <= 1e-8 && worst_top <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10_table_shape(ctx: &mut Ctx) -> Verdict {
    let large = ctx.large();
    let mut bad = Vec::new();
    let mut strict_56 = 0;
    let mut lines = Vec::new();
    for r in large {
        let rep = &r.report;
        lines.push(format!("{}: mu {} unsigned {} signed {}", r.label, rep.s_mu, rep.s_unsigned, rep.s_signed));
        if rep.s_signed < rep.s_unsigned {
            bad.push(r.label.clone());
        }
        if r.m == 56 && rep.s_signed > rep.s_unsigned {
            strict_56 += 1;
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    if !bad.is_empty() {
        return Err(format!("s_signed < s_unsigned on {}", bad.join(", ")));
    }
    let note = if strict_56 == 0 {
        "no strict gap on the m = 56 rows".to_string()
    } else {
        format!("strict gap on {strict_56} of the m = 56 rows")
    };
    Ok(format!("{} rows, signed >= unsigned everywhere, {note}", lines.len()))
}

fn main() -> ExitCode {
    let mut results = Vec::new();

    let clock = Instant::now();
    let (small, v1) = c1_oracle_sandwich();
    results.push(report_line(1, "oracle sandwich", Some(Duration::from_secs(600)), clock.elapsed(), v1));
    let mut ctx = Ctx { small, large: None };

    let clock = Instant::now();
    let v2 = c2_dominance(&mut ctx);
    let shared = ctx.large.as_ref().map_or(Duration::ZERO, |l| l.1);
    results.push(report_line(2, "dominance over incoherence", None, clock.elapsed(), v2));

    results.push(criterion(3, "incoherence-free ceiling", None, c3_ceiling));
    results.push(criterion(4, "trigonometric limit", Some(Duration::from_secs(120)), c4_trig));
    results.push(criterion(5, "exact recovery", None, || c5_exact_recovery(&mut ctx)));
    results.push(criterion(6, "l1 error bounds", None, || c6_error_bounds(&mut ctx)));
    results.push(criterion(7, "matching pursuit invariants", None, c7_nemp));
    results.push(criterion(8, "rescaling monotonicity", None, c8_rescale));
    results.push(criterion(9, "functional identities", None, c9_functionals));

    let clock = Instant::now();
    let v10 = c10_table_shape(&mut ctx);
    results.push(report_line(
        10,
        "table shape at n = 64",
        Some(Duration::from_secs(1800)),
        clock.elapsed() + shared,
        v10,
    ));

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
