//! Sign-restricted l1 recovery, its error bounds, and the matching pursuit
//! driven by a certificate matrix.

mod nemp;

pub use nemp::{
    check_vsg_bar, nemp_design, nemp_error_limit, nemp_run, NempDesign, NempDesignOutcome,
    NempTrace,
};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve, LinExpr, LpBuilder, LpStatus, Relation, Sense, Var};
use crate::model::{ResidualNorm, SenseMatrix, SignPattern};

/// `min ||z||_1` subject to `||Az - y|| <= eps` and `z >= 0` on `P+`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryProblem {
    pub a: SenseMatrix,
    pub pattern: SignPattern,
    pub y: Vec<f64>,
    pub eps: f64,
    pub residual_norm: ResidualNorm,
}

impl RecoveryProblem {
    pub fn new(
        a: SenseMatrix,
        pattern: SignPattern,
        y: Vec<f64>,
        eps: f64,
        residual_norm: ResidualNorm,
    ) -> Result<Self> {
        pattern.check_len(a.cols())?;
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: y.len(),
            });
        }
        if !(eps >= 0.0) || !eps.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need finite observations and eps >= 0, got eps = {eps}"
            )));
        }
        Ok(RecoveryProblem {
            a,
            pattern,
            y,
            eps,
            residual_norm,
        })
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let ax = self.a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(&self.y).map(|(p, q)| p - q).collect();
        self.residual_norm.norm(&r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Minimizer in the normalized (`P-` flipped) coordinates.
    pub x: Vec<f64>,
    /// The minimizer with flipped columns restored to their original sign.
    pub x_original: Vec<f64>,
    pub opt: f64,
    /// `||A x - y||` at the returned point.
    pub residual: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecoveryOutcome {
    Solved(Recovery),
    Infeasible,
}

impl RecoveryOutcome {
    pub fn solved(&self) -> Option<&Recovery> {
        match self {
            RecoveryOutcome::Solved(r) => Some(r),
            RecoveryOutcome::Infeasible => None,
        }
    }
}

pub fn l1_recover(prob: &RecoveryProblem) -> Result<RecoveryOutcome> {
    let (m, n) = (prob.a.rows(), prob.a.cols());
    let mut b = LpBuilder::new(Sense::Min);
    let mut parts: Vec<(Var, Var)> = Vec::with_capacity(n);
    let mut obj = LinExpr::new();
    for i in 0..n {
        let p = b.add_nonneg_var();
        let q_hi = if prob.pattern.is_plus(i) { 0.0 } else { f64::INFINITY };
        let q = b.add_var(0.0, q_hi);
        obj.add_term(p, 1.0).add_term(q, 1.0);
        parts.push((p, q));
    }
    b.set_objective(&obj);
    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        let mut row = LinExpr::constant(-prob.y[k]);
        for (j, &(p, q)) in parts.iter().enumerate() {
            let akj = prob.a.get(k, j);
            if akj != 0.0 {
                row.add_term(p, akj).add_term(q, -akj);
            }
        }
        rows.push(row);
    }
    match prob.residual_norm {
        _ if prob.eps == 0.0 => {
            for row in &rows {
                b.add_constraint(row, Relation::Eq, 0.0);
            }
        }
        ResidualNorm::Linf => {
            for row in &rows {
                b.add_constraint(row, Relation::Le, prob.eps);
                b.add_constraint(row, Relation::Ge, -prob.eps);
            }
        }
        ResidualNorm::L1 => {
            let r = b.add_vars(m, 0.0, f64::INFINITY);
            let mut total = LinExpr::new();
            for (row, &rk) in rows.iter().zip(&r) {
                b.add_constraint(&(LinExpr::from(rk) - row.clone()), Relation::Ge, 0.0);
                b.add_constraint(&(LinExpr::from(rk) + row.clone()), Relation::Ge, 0.0);
                total.add_term(rk, 1.0);
            }
            b.add_constraint(&total, Relation::Le, prob.eps);
        }
    }
    let out = solve(&b.build()?).map_err(|e| e.in_stage("l1_recover"))?;
    match out.status {
        LpStatus::Infeasible => Ok(RecoveryOutcome::Infeasible),
        LpStatus::Unbounded => Err(Error::numerical("l1_recover", "l1 objective reported unbounded")),
        LpStatus::Optimal => {
            let x: Vec<f64> = parts.iter().map(|&(p, q)| out.x[p.0] - out.x[q.0]).collect();
            let mut x_original = x.clone();
            prob.pattern.unflip(&mut x_original);
            let residual = prob.residual(&x);
            debug!("l1_recover: opt {:.6e}, residual {residual:.3e}", out.objective);
            Ok(RecoveryOutcome::Solved(Recovery {
                opt: x.iter().map(|v| v.abs()).sum(),
                x,
                x_original,
                residual,
                duality_gap: out.duality_gap.unwrap_or(0.0).max(0.0),
            }))
        }
    }
}

fn check_bound_inputs(xi: f64, rest: &[(&str, f64)]) -> Result<()> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("xi must lie in [0, 1), got {xi}")));
    }
    for &(name, v) in rest {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// Error bound under the signed condition with parameters `(xi, theta, beta)`:
/// `(1+xi)/(1-xi) nu + 2(1+xi theta)/(1-xi) mu + 2 beta/(1-xi) (eps+delta)`.
pub fn error_bound_theta(
    xi: f64,
    theta: f64,
    beta: f64,
    nu: f64,
    mu_tail: f64,
    eps: f64,
    delta: f64,
) -> Result<f64> {
    check_bound_inputs(xi, &[("beta", beta), ("nu", nu), ("mu", mu_tail), ("eps", eps), ("delta", delta)])?;
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta must be >= 1, got {theta}")));
    }
    let d = 1.0 - xi;
    Ok((1.0 + xi) / d * nu + 2.0 * (1.0 + xi * theta) / d * mu_tail + 2.0 * beta / d * (eps + delta))
}

/// Error bound under the sign-only condition, `alpha_col` being the largest
/// column norm of `A`:
/// `(1+xi)/(1-xi) nu + 2(1+beta alpha)/(1-xi) mu + 2 beta/(1-xi) (eps+delta)`.
pub fn error_bound_alpha(
    xi: f64,
    beta: f64,
    alpha_col: f64,
    nu: f64,
    mu_tail: f64,
    eps: f64,
    delta: f64,
) -> Result<f64> {
    check_bound_inputs(
        xi,
        &[("beta", beta), ("alpha", alpha_col), ("nu", nu), ("mu", mu_tail), ("eps", eps), ("delta", delta)],
    )?;
    let d = 1.0 - xi;
    Ok((1.0 + xi) / d * nu + 2.0 * (1.0 + beta * alpha_col) / d * mu_tail + 2.0 * beta / d * (eps + delta))
}

/// Largest column norm of `A` under the residual norm.
pub fn max_column_norm(a: &SenseMatrix, norm: ResidualNorm) -> f64 {
    (0..a.cols())
        .map(|j| norm.norm(&a.column(j)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_recovers_exactly() {
        let w = vec![0.0, 2.5, -1.0, 0.0];
        let p = SignPattern::new(4, &[0, 1]).unwrap();
        for norm in [ResidualNorm::L1, ResidualNorm::Linf] {
            let prob = RecoveryProblem::new(SenseMatrix::identity(4), p.clone(), w.clone(), 0.0, norm).unwrap();
            let r = l1_recover(&prob).unwrap();
            let r = r.solved().unwrap();
            for (a, b) in r.x.iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((r.opt - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_conflict_is_infeasible() {
        let prob = RecoveryProblem::new(
            SenseMatrix::from_rows(&[vec![1.0]]).unwrap(),
            SignPattern::nonnegative(1),
            vec![-1.0],
            0.0,
            ResidualNorm::Linf,
        )
        .unwrap();
        assert_eq!(l1_recover(&prob).unwrap(), RecoveryOutcome::Infeasible);
    }

    #[test]
    fn budget_shrinks_the_solution() {
        for (norm, eps) in [(ResidualNorm::Linf, 0.5), (ResidualNorm::L1, 0.5)] {
            let prob = RecoveryProblem::new(
                SenseMatrix::identity(2),
                SignPattern::unsigned(2),
                vec![2.0, -1.0],
                eps,
                norm,
            )
            .unwrap();
            let r = l1_recover(&prob).unwrap();
            let r = r.solved().unwrap();
            // every unit of budget removes one unit of l1 mass (Linf: per coordinate)
            let expect = if norm == ResidualNorm::Linf { 2.0 } else { 2.5 };
            assert!((r.opt - expect).abs() < 1e-9, "{norm:?}: {}", r.opt);
            assert!(r.residual <= eps + 1e-9);
        }
    }

    #[test]
    fn flipped_columns_restored() {
        let a = SenseMatrix::identity(2);
        let (an, p) = crate::model::normalize_sign_restrictions(&a, &[], &[1]).unwrap();
        // original signal (0, -3); in flipped coordinates it reads (0, 3)
        let prob = RecoveryProblem::new(an, p, vec![0.0, -3.0], 0.0, ResidualNorm::Linf).unwrap();
        let r = l1_recover(&prob).unwrap();
        let r = r.solved().unwrap();
        assert!((r.x[1] - 3.0).abs() < 1e-12);
        assert!((r.x_original[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn error_bounds_by_substitution() {
        assert_eq!(error_bound_theta(0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        let v = error_bound_theta(0.5, 2.0, 3.0, 0.1, 0.2, 0.05, 0.05).unwrap();
        assert!((v - 3.1).abs() < 1e-12);
        let v = error_bound_theta(0.0, 7.0, 3.0, 0.1, 0.2, 0.05, 0.05).unwrap();
        assert!((v - (0.1 + 0.4 + 0.6)).abs() < 1e-12);
        assert!(error_bound_theta(1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert_eq!(error_bound_alpha(0.3, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        let v = error_bound_alpha(0.5, 0.0, 4.0, 0.1, 0.2, 0.3, 0.3).unwrap();
        assert!((v - (3.0 * 0.1 + 4.0 * 0.2)).abs() < 1e-12);
        let v = error_bound_alpha(0.5, 2.0, 0.5, 0.0, 0.1, 0.0, 0.0).unwrap();
        assert!((v - 2.0 * 2.0 / 0.5 * 0.1).abs() < 1e-12);
        assert!(error_bound_alpha(1.2, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(error_bound_alpha(0.2, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }
}
