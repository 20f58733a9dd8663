//! LP encodings of `||.||_{s,1}`, `Phi_s` and the level set `Psi <= 1`,
//! all based on `||z||_{s,1} = min { s lambda + sum mu_j : lambda + mu_j >= |z_j|, lambda, mu >= 0 }`.

use super::{LinExpr, LpBuilder, Relation, Var};
use crate::error::{Error, Result};
use crate::model::{validate_xi_theta, SignPattern};

/// Variables and rows appended by one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Epigraph {
    pub lambda: Option<Var>,
    pub aux: Vec<Var>,
    pub rows: Vec<usize>,
}

fn check(s: usize, n: usize) -> Result<()> {
    if s < 1 || s > n {
        return Err(Error::SparsityOutOfRange { s, n });
    }
    Ok(())
}

/// Encodes `||z||_{s,1} <= bound`, with `z` given by affine expressions
/// scaled entrywise by `weights` and `pos_only[j]` dropping the `-z_j`
/// branch.
fn weighted_top_norm(
    b: &mut LpBuilder,
    z: &[LinExpr],
    weights: &[f64],
    pos_only: &[bool],
    s: usize,
    bound: &LinExpr,
) -> Result<Epigraph> {
    check(s, z.len())?;
    let lambda = b.add_nonneg_var();
    let mu = b.add_vars(z.len(), 0.0, f64::INFINITY);
    let mut rows = Vec::with_capacity(2 * z.len() + 1);
    let mut total = LinExpr::term(lambda, s as f64);
    for &m in &mu {
        total.add_term(m, 1.0);
    }
    total.add_scaled(bound, -1.0);
    rows.push(b.add_constraint(&total, Relation::Le, 0.0));
    for (j, zj) in z.iter().enumerate() {
        let mut up = LinExpr::term(lambda, 1.0);
        up.add_term(mu[j], 1.0).add_scaled(zj, -weights[j]);
        rows.push(b.add_constraint(&up, Relation::Ge, 0.0));
        if !pos_only[j] {
            let mut down = LinExpr::term(lambda, 1.0);
            down.add_term(mu[j], 1.0).add_scaled(zj, weights[j]);
            rows.push(b.add_constraint(&down, Relation::Ge, 0.0));
        }
    }
    Ok(Epigraph {
        lambda: Some(lambda),
        aux: mu,
        rows,
    })
}

/// Appends rows enforcing `||z||_{s,1} <= bound`.
pub fn stop_norm_epigraph(
    b: &mut LpBuilder,
    z: &[LinExpr],
    s: usize,
    bound: &LinExpr,
) -> Result<Epigraph> {
    let n = z.len();
    weighted_top_norm(b, z, &vec![1.0; n], &vec![false; n], s, bound)
}

/// Appends rows enforcing `Phi_s(x) <= bound`. The clip at zero on `P+` is
/// implied by the nonnegativity of the auxiliaries.
pub fn phi_epigraph(
    b: &mut LpBuilder,
    x: &[LinExpr],
    s: usize,
    xi: f64,
    theta: f64,
    pattern: &SignPattern,
    bound: &LinExpr,
) -> Result<Epigraph> {
    validate_xi_theta(xi, theta)?;
    pattern.check_len(x.len())?;
    let weights: Vec<f64> = (0..x.len())
        .map(|j| {
            if pattern.is_plus(j) {
                1.0 + theta * xi
            } else {
                1.0 + xi
            }
        })
        .collect();
    let pos_only: Vec<bool> = (0..x.len()).map(|j| pattern.is_plus(j)).collect();
    weighted_top_norm(b, x, &weights, &pos_only, s, bound)
}

/// Appends auxiliaries `t_i` with `t_i >= -x_i, t_i >= theta x_i` on `P+`,
/// `t_i >= |x_i|` on `Pn`, and `sum t_i <= 1`.
pub fn psi_level_set(
    b: &mut LpBuilder,
    x: &[Var],
    theta: f64,
    pattern: &SignPattern,
) -> Result<Epigraph> {
    pattern.check_len(x.len())?;
    let t = b.add_vars(x.len(), 0.0, f64::INFINITY);
    let mut rows = Vec::with_capacity(2 * x.len() + 1);
    for (i, (&xi, &ti)) in x.iter().zip(&t).enumerate() {
        let scale = if pattern.is_plus(i) { theta } else { 1.0 };
        let mut up = LinExpr::term(ti, 1.0);
        up.add_term(xi, -scale);
        rows.push(b.add_constraint(&up, Relation::Ge, 0.0));
        let mut down = LinExpr::term(ti, 1.0);
        down.add_term(xi, 1.0);
        rows.push(b.add_constraint(&down, Relation::Ge, 0.0));
    }
    let mut total = LinExpr::new();
    for &ti in &t {
        total.add_term(ti, 1.0);
    }
    rows.push(b.add_constraint(&total, Relation::Le, 1.0));
    Ok(Epigraph {
        lambda: None,
        aux: t,
        rows,
    })
}
