//! Non-Euclidean matching pursuit: design of the matrix `Y` and band widths,
//! the shrinkage iteration, and its error radius.

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RecoveryProblem;
use crate::cert_lower::{c_matrix, column_dual_norms, matrix_rows};
use crate::error::{Error, Result};
use crate::lp::{solve, LinExpr, LpBuilder, Relation, Sense};
use crate::model::{s_top_norm, validate_xi_theta, ResidualNorm, SenseMatrix, SignPattern};

const BAND_TOL: f64 = 1e-9;

/// Slack allowed when checking the closed bands of the barred condition.
const BAR_TOL: f64 = 1e-10;

/// `Y` together with entrywise bands on `C = I - Y^T A`: rows in `Pn` lie in
/// `[-tau, tau]`; a row in `P+` lies in `[-tau_minus, tau_plus]` on columns
/// in `P+` and in `[-min(tau_minus, tau_plus), min(tau_minus, tau_plus)]` on
/// columns in `Pn`. The symmetric band on the mixed block is what the error
/// recursion needs when the free coordinates of `w - v` change sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NempDesign {
    #[serde(with = "matrix_rows")]
    pub y: DMatrix<f64>,
    pub s: usize,
    pub tau: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
    /// `max_j ||y_j||_*`.
    pub sigma: f64,
    /// `s max(2 tau, tau_minus + tau_plus)`, the contraction rate.
    pub lambda: f64,
    /// `s max(tau_plus, tau_minus, tau)`.
    pub rho: f64,
    pub residual_norm: ResidualNorm,
}

fn entry_band(pattern: &SignPattern, i: usize, j: usize, taus: (f64, f64, f64)) -> (f64, f64) {
    let (tau, tau_minus, tau_plus) = taus;
    match (pattern.is_plus(i), pattern.is_plus(j)) {
        (false, _) => (-tau, tau),
        (true, true) => (-tau_minus, tau_plus),
        (true, false) => {
            let w = tau_minus.min(tau_plus);
            (-w, w)
        }
    }
}

fn band_violation(c: &DMatrix<f64>, pattern: &SignPattern, taus: (f64, f64, f64)) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..c.nrows() {
        for (j, &v) in c.row(i).iter().enumerate() {
            let (lo, hi) = entry_band(pattern, i, j, taus);
            worst = worst.max(lo - v).max(v - hi);
        }
    }
    worst
}

impl NempDesign {
    /// Assembles a design from explicit parts, checking the bands directly.
    pub fn from_parts(
        a: &SenseMatrix,
        pattern: &SignPattern,
        y: DMatrix<f64>,
        s: usize,
        taus: (f64, f64, f64),
        residual_norm: ResidualNorm,
    ) -> Result<Self> {
        let (tau, tau_minus, tau_plus) = taus;
        pattern.check_len(a.cols())?;
        if y.shape() != a.entries().shape() {
            return Err(Error::DimensionMismatch {
                expected: a.rows() * a.cols(),
                got: y.nrows() * y.ncols(),
            });
        }
        if s == 0 || s > a.cols() {
            return Err(Error::SparsityOutOfRange { s, n: a.cols() });
        }
        if [tau, tau_minus, tau_plus].iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter("band widths must be finite and >= 0".into()));
        }
        let viol = band_violation(&c_matrix(&y, a), pattern, taus);
        if viol > BAND_TOL {
            return Err(Error::Revalidation(format!("bands violated by {viol:.3e}")));
        }
        let sf = s as f64;
        Ok(NempDesign {
            sigma: column_dual_norms(&y, residual_norm),
            lambda: sf * (2.0 * tau).max(tau_minus + tau_plus),
            rho: sf * tau_plus.max(tau_minus).max(tau),
            y,
            s,
            tau,
            tau_minus,
            tau_plus,
            residual_norm,
        })
    }

    /// Constants implied by a matrix satisfying the barred condition at
    /// `(s, xi, theta)`. Unused bands are set to zero.
    pub fn from_vsg_bar(
        a: &SenseMatrix,
        pattern: &SignPattern,
        y: DMatrix<f64>,
        s: usize,
        xi: f64,
        theta: f64,
        residual_norm: ResidualNorm,
    ) -> Result<Self> {
        validate_xi_theta(xi, theta)?;
        let sf = s as f64;
        let (tau, tau_minus, tau_plus) = (
            if pattern.count_n() > 0 { xi / ((1.0 + xi) * sf) } else { 0.0 },
            if pattern.count_plus() > 0 { xi / ((1.0 + xi * theta) * sf) } else { 0.0 },
            if pattern.count_plus() > 0 { xi * theta / ((1.0 + xi * theta) * sf) } else { 0.0 },
        );
        Self::from_parts(a, pattern, y, s, (tau, tau_minus, tau_plus), residual_norm)
    }

    /// `alpha_inf = (2 s sigma delta + mu) / (1 - lambda)`.
    pub fn alpha_infinity(&self, delta: f64, mu_tail: f64) -> Result<f64> {
        if !(self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "no limit radius for lambda = {} >= 1",
                self.lambda
            )));
        }
        Ok((2.0 * self.s as f64 * self.sigma * delta + mu_tail) / (1.0 - self.lambda))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NempDesignOutcome {
    Design(Box<NempDesign>),
    /// The smallest achievable contraction rate is not below one.
    NoGuarantee { opt: f64 },
}

impl NempDesignOutcome {
    pub fn design(&self) -> Option<&NempDesign> {
        match self {
            NempDesignOutcome::Design(d) => Some(d),
            NempDesignOutcome::NoGuarantee { .. } => None,
        }
    }
}

/// Minimizes `s max(2 tau, tau_minus + tau_plus)` over `Y` and the bands.
pub fn nemp_design(
    a: &SenseMatrix,
    pattern: &SignPattern,
    s: usize,
    residual_norm: ResidualNorm,
) -> Result<NempDesignOutcome> {
    let (m, n) = (a.rows(), a.cols());
    pattern.check_len(n)?;
    if s == 0 || s > n {
        return Err(Error::SparsityOutOfRange { s, n });
    }
    let mut b = LpBuilder::new(Sense::Min);
    let y = b.add_vars(m * n, f64::NEG_INFINITY, f64::INFINITY);
    let free_hi = if pattern.count_n() > 0 { f64::INFINITY } else { 0.0 };
    let plus_hi = if pattern.count_plus() > 0 { f64::INFINITY } else { 0.0 };
    let tau = b.add_var(0.0, free_hi);
    let tau_minus = b.add_var(0.0, plus_hi);
    let tau_plus = b.add_var(0.0, plus_hi);
    let z = b.add_nonneg_var();
    b.set_objective_coeff(z, s as f64);
    let mut e = LinExpr::term(z, 1.0);
    e.add_term(tau, -2.0);
    b.add_constraint(&e, Relation::Ge, 0.0);
    let mut e = LinExpr::term(z, 1.0);
    e.add_term(tau_minus, -1.0).add_term(tau_plus, -1.0);
    b.add_constraint(&e, Relation::Ge, 0.0);
    for i in 0..n {
        for j in 0..n {
            // [I - Y^T A]_{ij} = delta_ij - sum_k Y_{ki} A_{kj}
            let mut c = LinExpr::constant(if i == j { 1.0 } else { 0.0 });
            for k in 0..m {
                let akj = a.get(k, j);
                if akj != 0.0 {
                    c.add_term(y[k * n + i], -akj);
                }
            }
            let widths = match (pattern.is_plus(i), pattern.is_plus(j)) {
                (false, _) => vec![(tau, tau)],
                (true, true) => vec![(tau_minus, tau_plus)],
                (true, false) => vec![(tau_minus, tau_minus), (tau_plus, tau_plus)],
            };
            for (lo, hi) in widths {
                b.add_constraint(&(LinExpr::from(hi) - c.clone()), Relation::Ge, 0.0);
                b.add_constraint(&(LinExpr::from(lo) + c.clone()), Relation::Ge, 0.0);
            }
        }
    }
    let lp = b.build()?;
    debug!("nemp_design s={s}: {} rows, {} columns", lp.num_rows(), lp.num_vars());
    let out = solve(&lp).map_err(|e| e.in_stage("nemp_design"))?;
    if !out.is_optimal() {
        return Err(Error::numerical("nemp_design", format!("status {:?}", out.status)));
    }
    if out.objective >= 1.0 {
        return Ok(NempDesignOutcome::NoGuarantee { opt: out.objective });
    }
    let ymat = DMatrix::from_fn(m, n, |k, j| out.x[y[k * n + j].0]);
    // tighten the bands to the realized entries so they hold exactly
    let c = c_matrix(&ymat, a);
    let (mut t, mut tm, mut tp) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for (j, &v) in c.row(i).iter().enumerate() {
            match (pattern.is_plus(i), pattern.is_plus(j)) {
                (false, _) => t = t.max(v.abs()),
                (true, true) => {
                    tp = tp.max(v);
                    tm = tm.max(-v);
                }
                (true, false) => {
                    tp = tp.max(v.abs());
                    tm = tm.max(v.abs());
                }
            }
        }
    }
    let design = NempDesign::from_parts(a, pattern, ymat, s, (t, tm, tp), residual_norm)?;
    if design.lambda >= 1.0 {
        return Ok(NempDesignOutcome::NoGuarantee { opt: design.lambda });
    }
    Ok(NempDesignOutcome::Design(Box::new(design)))
}

/// Iterates and error radii of one pursuit run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NempTrace {
    pub s: usize,
    pub mu_tail: f64,
    pub delta: f64,
    pub lambda: f64,
    pub iterates: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
}

impl NempTrace {
    pub fn last(&self) -> &[f64] {
        self.iterates.last().map_or(&[], Vec::as_slice)
    }

    /// CSV rows `k,alpha_k[,||w - v_k||_1]`.
    pub fn to_csv(&self, w: Option<&[f64]>) -> String {
        let mut out = String::from(if w.is_some() { "k,alpha,error_l1\n" } else { "k,alpha\n" });
        for (k, (v, alpha)) in self.iterates.iter().zip(&self.alphas).enumerate() {
            match w {
                Some(w) => {
                    let err: f64 = w.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
                    out.push_str(&format!("{k},{alpha:e},{err:e}\n"));
                }
                None => out.push_str(&format!("{k},{alpha:e}\n")),
            }
        }
        out
    }
}

fn positive_part(v: f64) -> f64 {
    v.max(0.0)
}

/// Runs the pursuit for at most `k_max` steps, stopping early once the radius
/// is within `1e-12` of its limit. `delta` bounds `||Aw - y||` and `mu_tail`
/// bounds `||w - w^s||_1`; both are caller-supplied.
pub fn nemp_run(
    design: &NempDesign,
    prob: &RecoveryProblem,
    mu_tail: f64,
    delta: f64,
    k_max: usize,
) -> Result<NempTrace> {
    let (a, pattern) = (&prob.a, &prob.pattern);
    let n = a.cols();
    if design.y.shape() != a.entries().shape() {
        return Err(Error::DimensionMismatch {
            expected: a.rows() * n,
            got: design.y.nrows() * design.y.ncols(),
        });
    }
    if design.residual_norm != prob.residual_norm {
        return Err(Error::InvalidParameter("design and problem use different residual norms".into()));
    }
    if !(design.rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho = {} must be below 1", design.rho)));
    }
    if !(mu_tail >= 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter("mu and delta must be >= 0".into()));
    }
    let s = design.s;
    let sf = s as f64;
    let sd = design.sigma * delta;
    let yt_y: Vec<f64> = design.y.tr_mul(&nalgebra::DVector::from_column_slice(&prob.y)).iter().copied().collect();
    let alpha0 = (s_top_norm(&yt_y, s)? + sf * sd + mu_tail) / (1.0 - design.rho);
    let alpha_inf = design.alpha_infinity(delta, mu_tail).ok();
    let mut trace = NempTrace {
        s,
        mu_tail,
        delta,
        lambda: design.lambda,
        iterates: vec![vec![0.0; n]],
        alphas: vec![alpha0],
    };
    let mut v = vec![0.0; n];
    let mut alpha = alpha0;
    for _ in 0..k_max {
        let av = a.mul_vec(&v);
        let r: Vec<f64> = prob.y.iter().zip(&av).map(|(p, q)| p - q).collect();
        let u = design.y.tr_mul(&nalgebra::DVector::from_vec(r));
        for i in 0..n {
            let ui = u[i];
            let step = if pattern.is_plus(i) {
                positive_part(ui - design.tau_minus * alpha - sd)
            } else {
                positive_part(ui.abs() - design.tau * alpha - sd).copysign(ui)
            };
            v[i] += step;
        }
        alpha = design.lambda * alpha + 2.0 * sf * sd + mu_tail;
        trace.iterates.push(v.clone());
        trace.alphas.push(alpha);
        if alpha_inf.is_some_and(|lim| alpha - lim < 1e-12) {
            break;
        }
    }
    Ok(trace)
}

/// Closed form of the radius after `t` steps:
/// `alpha_inf + lambda^t (alpha0 - alpha_inf)`.
pub fn nemp_error_limit(design: &NempDesign, delta: f64, mu_tail: f64, alpha0: f64, t: usize) -> Result<f64> {
    let lim = design.alpha_infinity(delta, mu_tail)?;
    Ok(lim + design.lambda.powi(t as i32) * (alpha0 - lim))
}

/// Direct check of the barred condition: entrywise bands on `I - Y^T A` and
/// `||y_i||_* <= sigma` for the dual of `residual_norm`.
#[allow(clippy::too_many_arguments)]
pub fn check_vsg_bar(
    y: &DMatrix<f64>,
    a: &SenseMatrix,
    pattern: &SignPattern,
    s: usize,
    xi: f64,
    theta: f64,
    sigma: f64,
    residual_norm: ResidualNorm,
) -> bool {
    if y.shape() != a.entries().shape() || pattern.n() != a.cols() || s == 0 {
        return false;
    }
    let sf = s as f64;
    let free = xi / ((1.0 + xi) * sf);
    let low_plus = xi / ((1.0 + xi * theta) * sf);
    let high_plus = xi * theta / ((1.0 + xi * theta) * sf);
    let c = c_matrix(y, a);
    for i in 0..a.cols() {
        for j in 0..a.cols() {
            let v = c[(i, j)];
            let (lo, hi) = match (pattern.is_plus(i), pattern.is_plus(j)) {
                (false, _) => (-free, free),
                (true, false) => (-low_plus, low_plus),
                (true, true) => (-low_plus, high_plus),
            };
            if v < lo - BAR_TOL || v > hi + BAR_TOL {
                return false;
            }
        }
    }
    column_dual_norms(y, residual_norm) <= sigma * (1.0 + BAR_TOL)
}
