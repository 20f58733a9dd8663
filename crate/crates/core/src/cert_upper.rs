//! Upper bounds on the semigoodness level: alternating maximization over
//! the kernel, disproof programs producing checkable non-semigoodness
//! witnesses, and an exhaustive oracle for tiny matrices.

use std::time::Instant;

use itertools::Itertools;
use log::{debug, warn};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{psi_level_set, solve, LinExpr, LpBuilder, LpStatus, Relation, Sense, Var};
use crate::model::{
    functionals::phi_weights, top_s_indices, validate_xi_theta, SenseMatrix, SignPattern,
};
use crate::rng;

/// A disproof program optimum at or above this level refutes semigoodness.
pub const DISPROOF_LEVEL: f64 = 1.0 - 1e-9;

const WITNESS_TOL: f64 = 1e-8;
const SIGN_TOL: f64 = 1e-9;

/// Gains at or below this are treated as zero in the u-step.
const GAIN_FLOOR: f64 = 1e-12;

/// Cap on x/u alternations within one restart.
const MAX_SWEEPS: usize = 100;

/// Objective cap used when the disproof program is unbounded.
const UNBOUNDED_CAP: f64 = 2.0;

/// Kernel vector showing that some `s`-sparse sign-feasible signal is not the
/// unique sign-restricted l1 minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotSemigoodCertificate {
    /// The index set `I`, ascending.
    pub support: Vec<usize>,
    /// Objective signs aligned with `support`; always `+1` on `P+`.
    pub signs: Vec<i8>,
    pub x: Vec<f64>,
    pub lp_value: f64,
    /// The program was unbounded and solved again with a capped objective.
    pub unbounded: bool,
}

impl NotSemigoodCertificate {
    pub fn level(&self) -> usize {
        self.support.len()
    }

    /// Checks the witness against `A` and the sign pattern, without solver state.
    pub fn validate(&self, a: &SenseMatrix, pattern: &SignPattern) -> Result<()> {
        let n = a.cols();
        pattern.check_len(n)?;
        let fail = |msg: String| Err(Error::Revalidation(msg));
        if self.x.len() != n || self.signs.len() != self.support.len() {
            return fail("witness dimensions do not match".into());
        }
        let mut in_support = vec![false; n];
        for &i in &self.support {
            if i >= n || in_support[i] {
                return fail(format!("bad support index {i}"));
            }
            in_support[i] = true;
        }
        let scale = self.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let ax = a.mul_vec(&self.x);
        let res = ax.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res > WITNESS_TOL * scale {
            return fail(format!("|Ax| = {res:.3e} is not zero"));
        }
        for i in 0..n {
            if !in_support[i] && pattern.is_plus(i) && self.x[i] > SIGN_TOL {
                return fail(format!("x[{i}] = {:.3e} > 0 outside the support", self.x[i]));
            }
        }
        let outside: f64 = (0..n).filter(|&i| !in_support[i]).map(|i| self.x[i].abs()).sum();
        if outside > 1.0 + WITNESS_TOL {
            return fail(format!("off-support mass {outside:.3e} exceeds 1"));
        }
        let value = objective_value(&self.support, &self.signs, &self.x);
        if value < 1.0 - WITNESS_TOL {
            return fail(format!("objective {value:.3e} is below 1"));
        }
        Ok(())
    }
}

fn objective_value(support: &[usize], signs: &[i8], x: &[f64]) -> f64 {
    support.iter().zip(signs).map(|(&i, &e)| f64::from(e) * x[i]).sum()
}

/// Raw answer of the disproof program.
#[derive(Debug, Clone, PartialEq)]
enum Disproof {
    Bounded { value: f64, x: Vec<f64> },
    Unbounded,
}

fn normalized_signs(pattern: &SignPattern, support: &[usize], signs: &[i8]) -> Result<Vec<i8>> {
    if signs.len() != support.len() {
        return Err(Error::DimensionMismatch {
            expected: support.len(),
            got: signs.len(),
        });
    }
    Ok(support
        .iter()
        .zip(signs)
        .map(|(&i, &e)| if pattern.is_plus(i) || e >= 0 { 1 } else { -1 })
        .collect())
}

fn disproof_program(
    a: &SenseMatrix,
    pattern: &SignPattern,
    support: &[usize],
    signs: &[i8],
    cap: Option<f64>,
) -> Result<Disproof> {
    let (m, n) = (a.rows(), a.cols());
    let mut in_support = vec![false; n];
    for &i in support {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        in_support[i] = true;
    }
    let mut b = LpBuilder::new(Sense::Max);
    // x_i = p_i - q_i off the support; the support entries are free
    let mut x: Vec<LinExpr> = Vec::with_capacity(n);
    let mut mass = LinExpr::new();
    let mut parts: Vec<(Var, Option<Var>)> = Vec::with_capacity(n);
    for i in 0..n {
        if in_support[i] {
            let xi = b.add_free_var();
            x.push(xi.into());
            parts.push((xi, None));
        } else {
            let p_hi = if pattern.is_plus(i) { 0.0 } else { f64::INFINITY };
            let p = b.add_var(0.0, p_hi);
            let q = b.add_nonneg_var();
            let mut e = LinExpr::term(p, 1.0);
            e.add_term(q, -1.0);
            x.push(e);
            mass.add_term(p, 1.0).add_term(q, 1.0);
            parts.push((p, Some(q)));
        }
    }
    let mut obj = LinExpr::new();
    for (&i, &e) in support.iter().zip(signs) {
        obj.add_scaled(&x[i], f64::from(e));
    }
    b.set_objective(&obj);
    for k in 0..m {
        let mut row = LinExpr::new();
        for (j, xj) in x.iter().enumerate() {
            let akj = a.get(k, j);
            if akj != 0.0 {
                row.add_scaled(xj, akj);
            }
        }
        b.add_constraint(&row, Relation::Eq, 0.0);
    }
    b.add_constraint(&mass, Relation::Le, 1.0);
    if let Some(c) = cap {
        b.add_constraint(&obj, Relation::Le, c);
    }
    let lp = b.build()?;
    let out = solve(&lp)?;
    match out.status {
        LpStatus::Optimal => {
            let xs: Vec<f64> = parts
                .iter()
                .map(|&(p, q)| out.x[p.0] - q.map_or(0.0, |q| out.x[q.0]))
                .collect();
            Ok(Disproof::Bounded {
                value: out.objective,
                x: xs,
            })
        }
        LpStatus::Unbounded => Ok(Disproof::Unbounded),
        LpStatus::Infeasible => Err(Error::numerical(
            "disproof",
            "program with the zero point feasible reported infeasible",
        )),
    }
}

/// Solves the disproof program for index set `support` and signs on it.
///
/// Returns a re-validated certificate iff the optimum is at least
/// [`DISPROOF_LEVEL`]. Solver failures are logged and yield `None`.
pub fn disproof_lp(
    a: &SenseMatrix,
    pattern: &SignPattern,
    support: &[usize],
    signs: &[i8],
) -> Option<NotSemigoodCertificate> {
    match try_disproof(a, pattern, support, signs) {
        Ok(c) => c,
        Err(e) => {
            warn!("disproof program on {support:?} failed: {e}");
            None
        }
    }
}

fn try_disproof(
    a: &SenseMatrix,
    pattern: &SignPattern,
    support: &[usize],
    signs: &[i8],
) -> Result<Option<NotSemigoodCertificate>> {
    pattern.check_len(a.cols())?;
    let mut support_sorted: Vec<(usize, i8)> = support
        .iter()
        .copied()
        .zip(normalized_signs(pattern, support, signs)?)
        .collect();
    support_sorted.sort_unstable();
    support_sorted.dedup_by_key(|p| p.0);
    let (support, signs): (Vec<usize>, Vec<i8>) = support_sorted.into_iter().unzip();
    let raw = disproof_program(a, pattern, &support, &signs, None)?;
    let (value, x, unbounded) = match raw {
        Disproof::Bounded { value, x } => (value, x, false),
        Disproof::Unbounded => match disproof_program(a, pattern, &support, &signs, Some(UNBOUNDED_CAP))? {
            Disproof::Bounded { value, x } => (value, x, true),
            Disproof::Unbounded => {
                return Err(Error::numerical("disproof", "capped program reported unbounded"))
            }
        },
    };
    if value < DISPROOF_LEVEL {
        return Ok(None);
    }
    let cert = NotSemigoodCertificate {
        support,
        signs,
        x,
        lp_value: value,
        unbounded,
    };
    match cert.validate(a, pattern) {
        Ok(()) => Ok(Some(cert)),
        Err(e) => {
            warn!("disproof optimum {value:.6} but witness rejected: {e}");
            Ok(None)
        }
    }
}

/// Closed-form maximizer over the vertices of the weighted polytope: the `s`
/// largest weighted gains, with signs matching `x` on `Pn`.
pub fn u_step(x: &[f64], s: usize, xi: f64, theta: f64, pattern: &SignPattern) -> Vec<f64> {
    let gains = phi_weights(x, xi, theta, pattern);
    let mut u = vec![0.0; x.len()];
    for i in top_s_indices(&gains, s) {
        if gains[i] <= GAIN_FLOOR {
            break;
        }
        u[i] = if pattern.is_plus(i) {
            1.0 + theta * xi
        } else {
            (1.0 + xi).copysign(x[i])
        };
    }
    u
}

/// `max u^T x` over the weighted polytope, solved as a linear program.
/// Serves as an independent check of [`u_step`].
pub fn u_polytope_max(x: &[f64], s: usize, xi: f64, theta: f64, pattern: &SignPattern) -> Result<f64> {
    pattern.check_len(x.len())?;
    validate_xi_theta(xi, theta)?;
    let (wp, wn) = (1.0 + theta * xi, 1.0 + xi);
    let mut b = LpBuilder::new(Sense::Max);
    let mut budget = LinExpr::new();
    let mut obj = LinExpr::new();
    for (i, &xv) in x.iter().enumerate() {
        if pattern.is_plus(i) {
            let v = b.add_var(0.0, wp);
            obj.add_term(v, xv);
            budget.add_term(v, 1.0 / wp);
        } else {
            let p = b.add_var(0.0, wn);
            let q = b.add_var(0.0, wn);
            obj.add_term(p, xv).add_term(q, -xv);
            budget.add_term(p, 1.0 / wn).add_term(q, 1.0 / wn);
        }
    }
    b.set_objective(&obj);
    b.add_constraint(&budget, Relation::Le, s as f64);
    let out = solve(&b.build()?)?;
    if !out.is_optimal() {
        return Err(Error::numerical("u-polytope", format!("status {:?}", out.status)));
    }
    Ok(out.objective)
}

fn random_vertex(
    rng: &mut impl Rng,
    n: usize,
    s: usize,
    xi: f64,
    theta: f64,
    pattern: &SignPattern,
) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for i in index::sample(rng, n, s.min(n)) {
        u[i] = if pattern.is_plus(i) {
            1.0 + theta * xi
        } else if rng.random::<bool>() {
            1.0 + xi
        } else {
            -(1.0 + xi)
        };
    }
    u
}

fn support_and_signs(u: &[f64]) -> (Vec<usize>, Vec<i8>) {
    u.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, if *v > 0.0 { 1i8 } else { -1 }))
        .unzip()
}

/// The x-step program `max u^T x` over `Ax = 0, Psi(x) <= 1`, objective left open.
struct XStep {
    base: LpBuilder,
    x: Vec<Var>,
}

impl XStep {
    fn new(a: &SenseMatrix, theta: f64, pattern: &SignPattern) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        let mut b = LpBuilder::new(Sense::Max);
        let x = b.add_vars(n, f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..m {
            let mut row = LinExpr::new();
            for (j, &xj) in x.iter().enumerate() {
                let akj = a.get(k, j);
                if akj != 0.0 {
                    row.add_term(xj, akj);
                }
            }
            b.add_constraint(&row, Relation::Eq, 0.0);
        }
        psi_level_set(&mut b, &x, theta, pattern)?;
        Ok(XStep { base: b, x })
    }

    fn solve(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut b = self.base.clone();
        for (&xi, &ui) in self.x.iter().zip(u) {
            b.set_objective_coeff(xi, ui);
        }
        let out = solve(&b.build()?)?;
        if !out.is_optimal() {
            return Err(Error::numerical("x-step", format!("status {:?}", out.status)));
        }
        let x: Vec<f64> = self.x.iter().map(|v| out.x[v.0]).collect();
        Ok((out.objective, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundOptions {
    pub xi: f64,
    pub theta: f64,
    pub restarts: usize,
    pub tol: f64,
    pub seed: u64,
    /// Highest level tried; `None` searches up to `n`.
    pub max_s: Option<usize>,
}

impl Default for UpperBoundOptions {
    fn default() -> Self {
        UpperBoundOptions {
            xi: crate::model::CertParams::DEFAULT_XI,
            theta: crate::model::CertParams::DEFAULT_THETA,
            restarts: 20,
            tol: 1e-6,
            seed: 0,
            max_s: None,
        }
    }
}

/// Lower bounds `u^T x` collected along one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub values: Vec<f64>,
    pub disproofs_tried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationResult {
    pub s: usize,
    pub traces: Vec<RestartTrace>,
    /// Largest lower bound on `Opt(xi, theta)` found.
    pub best_value: f64,
    pub best_u: Vec<f64>,
    pub best_x: Vec<f64>,
    pub certificate: Option<NotSemigoodCertificate>,
    pub restarts_used: usize,
}

/// Alternating maximization of `u^T x` at level `s` from random vertices,
/// running the disproof program on the support of every visited vertex.
/// Stops at the first certificate.
pub fn alternate_maximize(
    a: &SenseMatrix,
    pattern: &SignPattern,
    s: usize,
    opts: &UpperBoundOptions,
) -> Result<AlternationResult> {
    let n = a.cols();
    pattern.check_len(n)?;
    if s < 1 || s > n {
        return Err(Error::SparsityOutOfRange { s, n });
    }
    validate_xi_theta(opts.xi, opts.theta)?;
    if opts.xi <= 0.0 {
        return Err(Error::InvalidParameter("xi must be positive".into()));
    }
    let (xi, theta) = (opts.xi, opts.theta);
    let xstep = XStep::new(a, theta, pattern)?;
    let mut result = AlternationResult {
        s,
        traces: Vec::new(),
        best_value: f64::NEG_INFINITY,
        best_u: vec![0.0; n],
        best_x: vec![0.0; n],
        certificate: None,
        restarts_used: 0,
    };
    for r in 0..opts.restarts {
        result.restarts_used = r + 1;
        let mut rng = rng::substream(opts.seed, rng::STREAM_UPPER_BOUND, s, r);
        let mut u = random_vertex(&mut rng, n, s, xi, theta, pattern);
        let mut trace = RestartTrace {
            restart: r,
            values: Vec::new(),
            disproofs_tried: 0,
        };
        for _ in 0..MAX_SWEEPS {
            let (value, x) = match xstep.solve(&u) {
                Ok(v) => v,
                Err(e) => {
                    warn!("restart {r} at s={s} abandoned: {e}");
                    break;
                }
            };
            let last = trace.values.last().copied();
            if last.is_none_or(|l| value >= l) {
                trace.values.push(value);
            }
            if value > result.best_value {
                result.best_value = value;
                result.best_u.clone_from(&u);
                result.best_x.clone_from(&x);
            }
            let (support, signs) = support_and_signs(&u);
            trace.disproofs_tried += 1;
            if let Some(cert) = disproof_lp(a, pattern, &support, &signs) {
                debug!("s={s}: disproof on {support:?} with value {:.6}", cert.lp_value);
                result.certificate = Some(cert);
                result.traces.push(trace);
                return Ok(result);
            }
            if last.is_some_and(|l| value - l < opts.tol) {
                break;
            }
            let next = u_step(&x, s, xi, theta, pattern);
            if next == u {
                break;
            }
            u = next;
        }
        result.traces.push(trace);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSearch {
    pub s: usize,
    pub best_value: f64,
    pub restarts_used: usize,
    pub traces: Vec<RestartTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundOutcome {
    /// Smallest level proven not semigood.
    pub s_ub: Option<usize>,
    pub certificate: Option<NotSemigoodCertificate>,
    pub restarts_used: usize,
    pub levels: Vec<LevelSearch>,
    pub options: UpperBoundOptions,
    pub seconds: f64,
}

/// Searches `s = s_min, s_min + 1, ...` for a level at which the matrix is
/// provably not semigood. A search without a certificate proves nothing.
pub fn upper_bound_s(
    a: &SenseMatrix,
    pattern: &SignPattern,
    s_min: usize,
    opts: &UpperBoundOptions,
) -> Result<UpperBoundOutcome> {
    let n = a.cols();
    if s_min < 1 {
        return Err(Error::SparsityOutOfRange { s: s_min, n });
    }
    let clock = Instant::now();
    let cap = opts.max_s.unwrap_or(n).min(n);
    let mut outcome = UpperBoundOutcome {
        s_ub: None,
        certificate: None,
        restarts_used: 0,
        levels: Vec::new(),
        options: *opts,
        seconds: 0.0,
    };
    for s in s_min..=cap {
        let res = alternate_maximize(a, pattern, s, opts)?;
        outcome.restarts_used += res.restarts_used;
        outcome.levels.push(LevelSearch {
            s,
            best_value: res.best_value,
            restarts_used: res.restarts_used,
            traces: res.traces,
        });
        if let Some(cert) = res.certificate {
            outcome.s_ub = Some(s);
            outcome.certificate = Some(cert);
            break;
        }
    }
    outcome.seconds = clock.elapsed().as_secs_f64();
    Ok(outcome)
}

/// Largest `n` accepted by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_N: usize = 12;

fn check_brute_force_size(n: usize) -> Result<()> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard(format!(
            "exhaustive check limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    Ok(())
}

fn full_column_rank(a: &SenseMatrix, cols: &[usize]) -> bool {
    if cols.len() > a.rows() {
        return false;
    }
    let sub = DMatrix::from_fn(a.rows(), cols.len(), |i, j| a.get(i, cols[j]));
    let sv = sub.singular_values();
    let top = sv.max();
    top > 0.0 && sv.min() > 1e-9 * top
}

/// Whether every index set of size exactly `k` passes the exhaustive test.
fn level_holds(a: &SenseMatrix, pattern: &SignPattern, k: usize) -> Result<bool> {
    let n = a.cols();
    let symmetric = pattern.count_plus() == 0;
    for support in (0..n).combinations(k) {
        if !full_column_rank(a, &support) {
            return Ok(false);
        }
        let free: Vec<usize> = (0..k).filter(|&t| !pattern.is_plus(support[t])).collect();
        // without P+ the program is symmetric under x -> -x, so one sign may be fixed
        let fixed = usize::from(symmetric && !free.is_empty());
        for mask in 0..(1u64 << (free.len() - fixed)) {
            let mut signs = vec![1i8; k];
            for (bit, &t) in free[fixed..].iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    signs[t] = -1;
                }
            }
            match disproof_program(a, pattern, &support, &signs, None)? {
                Disproof::Unbounded => return Ok(false),
                Disproof::Bounded { value, .. } if value >= DISPROOF_LEVEL => return Ok(false),
                Disproof::Bounded { .. } => {}
            }
        }
    }
    Ok(true)
}

/// Exhaustive semigoodness test at level `s` over every index set of size at
/// most `s` and every sign choice. Limited to `n <= 12`.
pub fn brute_force_semigood(a: &SenseMatrix, pattern: &SignPattern, s: usize) -> Result<bool> {
    let n = a.cols();
    pattern.check_len(n)?;
    check_brute_force_size(n)?;
    if s > n {
        return Err(Error::SparsityOutOfRange { s, n });
    }
    for k in 1..=s {
        if !level_holds(a, pattern, k)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The exact level `s*(A)`: the largest `s` passing [`brute_force_semigood`].
pub fn brute_force_level(a: &SenseMatrix, pattern: &SignPattern) -> Result<usize> {
    let n = a.cols();
    pattern.check_len(n)?;
    check_brute_force_size(n)?;
    for k in 1..=n {
        if !level_holds(a, pattern, k)? {
            return Ok(k - 1);
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{generate, EnsembleKind, EnsembleSpec};
    use crate::model::CertParams;
    use crate::model::phi_s;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> SenseMatrix {
        SenseMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    fn opts(restarts: usize) -> UpperBoundOptions {
        UpperBoundOptions {
            restarts,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn injective_matrix_has_no_disproof() {
        let a = SenseMatrix::identity(3);
        let p = SignPattern::unsigned(3);
        assert!(disproof_lp(&a, &p, &[0, 1], &[1, -1]).is_none());
        let res = alternate_maximize(&a, &p, 2, &opts(5)).unwrap();
        assert!(res.certificate.is_none());
        assert!(res.best_value.abs() < 1e-12);
        let out = upper_bound_s(&a, &p, 1, &opts(3)).unwrap();
        assert_eq!(out.s_ub, None);
        assert!(brute_force_semigood(&a, &p, 3).unwrap());
    }

    #[test]
    fn two_equal_columns_disproved() {
        let a = row(&[1.0, 1.0]);
        let p = SignPattern::unsigned(2);
        let c = disproof_lp(&a, &p, &[0], &[1]).unwrap();
        assert!((c.x[0] - 1.0).abs() < 1e-9 && (c.x[1] + 1.0).abs() < 1e-9);
        assert!((c.lp_value - 1.0).abs() < 1e-9);
        let out = upper_bound_s(&a, &p, 1, &opts(2)).unwrap();
        assert_eq!(out.s_ub, Some(1));
        assert!(!brute_force_semigood(&a, &p, 1).unwrap());
    }

    #[test]
    fn x_step_on_one_dimensional_kernel() {
        let a = row(&[1.0, 1.0]);
        let p = SignPattern::unsigned(2);
        let xs = XStep::new(&a, 10.0, &p).unwrap();
        let (value, x) = xs.solve(&[1.9999, 0.0]).unwrap();
        assert!((value - 0.99995).abs() < 1e-12);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonnegative_row_disproved_with_value_two() {
        let a = row(&[1.0, 2.0]);
        let p = SignPattern::nonnegative(2);
        let c = disproof_lp(&a, &p, &[0], &[1]).unwrap();
        assert!((c.lp_value - 2.0).abs() < 1e-9);
        assert!((c.x[0] - 2.0).abs() < 1e-9 && (c.x[1] + 1.0).abs() < 1e-9);
        assert!(!brute_force_semigood(&a, &p, 1).unwrap());
    }

    #[test]
    fn unbounded_program_gives_capped_witness() {
        // columns 0 and 1 coincide, so the kernel lives inside I = {0, 1}
        let a = SenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let p = SignPattern::unsigned(3);
        let c = disproof_lp(&a, &p, &[0, 1], &[1, -1]).unwrap();
        assert!(c.unbounded);
        c.validate(&a, &p).unwrap();
        assert!(!brute_force_semigood(&a, &p, 2).unwrap());
    }

    #[test]
    fn rank_deficiency_inside_support_is_not_semigood() {
        // columns 0 and 2 coincide, columns 0 and 1 are orthogonal
        let a = SenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let p = SignPattern::nonnegative(3);
        assert!(!full_column_rank(&a, &[0, 2]));
        assert!(full_column_rank(&a, &[0, 1]));
        assert!(!brute_force_semigood(&a, &p, 1).unwrap());
        assert_eq!(brute_force_level(&a, &p).unwrap(), 0);
        let b = SenseMatrix::identity(2);
        assert!(!full_column_rank(&b, &[0, 1, 1]));
    }

    #[test]
    fn size_guard() {
        let a = SenseMatrix::identity(13);
        assert!(matches!(
            brute_force_semigood(&a, &SignPattern::unsigned(13), 1),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn tampered_witness_is_rejected() {
        let a = row(&[1.0, 1.0]);
        let p = SignPattern::unsigned(2);
        let mut c = disproof_lp(&a, &p, &[0], &[1]).unwrap();
        c.x[1] = -0.9;
        assert!(c.validate(&a, &p).is_err());
    }

    #[test]
    fn gaussian_sandwich() {
        for seed in 0..3 {
            let a = generate(&EnsembleSpec::new(EnsembleKind::Gaussian, 4, 10, seed)).unwrap();
            let p = SignPattern::unsigned(10);
            let exact = brute_force_level(&a, &p).unwrap();
            let out = upper_bound_s(&a, &p, 1, &opts(10)).unwrap();
            let s_ub = out.s_ub.expect("a 4x10 matrix is not 5-semigood");
            assert!(s_ub > exact, "seed {seed}: s_ub {s_ub} <= s* {exact}");
            let cert = out.certificate.unwrap();
            cert.validate(&a, &p).unwrap();
            assert!(!brute_force_semigood(&a, &p, cert.level()).unwrap());
            let lower = crate::cert_lower::max_certified_s(&a, &p, 0.9999, 10.0, None).unwrap();
            assert!(lower.s_signed <= exact);
        }
    }

    #[test]
    fn traces_never_decrease() {
        let a = generate(&EnsembleSpec::new(EnsembleKind::Rademacher, 5, 9, 2)).unwrap();
        let p = SignPattern::new(9, &[0, 1, 2, 3]).unwrap();
        for s in 1..=3 {
            let res = alternate_maximize(&a, &p, s, &opts(6)).unwrap();
            for t in &res.traces {
                assert!(t.values.windows(2).all(|w| w[1] >= w[0]), "{:?}", t.values);
            }
        }
    }

    #[test]
    fn semigood_certified_level_survives_brute_force() {
        let a = generate(&EnsembleSpec::new(EnsembleKind::Gaussian, 5, 8, 11)).unwrap();
        let p = SignPattern::nonnegative(8);
        let params = CertParams::new(1, 0.9999, 10.0);
        if crate::cert_lower::check_vsg(&a, &p, &params).unwrap().certificate().is_some() {
            assert!(brute_force_semigood(&a, &p, 1).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn u_step_matches_phi_and_polytope(
            x in prop::collection::vec(-3.0f64..3.0, 1..9),
            s_frac in 0.0f64..1.0,
            plus_mask in prop::collection::vec(any::<bool>(), 9),
            xi in 0.05f64..0.9999,
            theta in 1.0f64..20.0,
        ) {
            let n = x.len();
            let s = 1 + ((n - 1) as f64 * s_frac) as usize;
            let plus: Vec<usize> = (0..n).filter(|&i| plus_mask[i]).collect();
            let p = SignPattern::new(n, &plus).unwrap();
            let u = u_step(&x, s, xi, theta, &p);
            let value: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
            let phi = phi_s(&x, s, xi, theta, &p).unwrap();
            let lp = u_polytope_max(&x, s, xi, theta, &p).unwrap();
            prop_assert!((value - phi).abs() <= 1e-8 * (1.0 + phi.abs()));
            prop_assert!((value - lp).abs() <= 1e-8 * (1.0 + lp.abs()));
            prop_assert!(u.iter().filter(|v| **v != 0.0).count() <= s);
        }
    }
}
