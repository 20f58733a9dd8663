//! Lower bounds on the semigoodness level: LP-verifiable certificates
//! `(Y, v)` and the cheaper incoherence and unsigned bounds used to
//! warm-start the search.

use std::time::Instant;

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{
    phi_epigraph, solve, stop_norm_epigraph, LinExpr, LpBuilder, Relation, Sense, Var,
};
use crate::model::{
    functionals::{phi_weights, top_sum},
    mutual_incoherence, phi_s, validate_xi_theta, s_top_norm, CertParams, ResidualNorm, SenseMatrix, SignPattern,
};

/// Smallest margin a re-evaluated constraint of a certificate may have.
pub const CERT_SLACK_TOL: f64 = 1e-7;

/// Margin the certificate programs aim for beyond the closed constraints.
const TARGET_MARGIN: f64 = 1e-5;

/// Solutions of the unsigned program count as certified below this level.
const UNSIGNED_LEVEL: f64 = 0.5 - 1e-9;

/// A feasible point `(Y, v)` of the verifiable condition, checked directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsgCertificate {
    #[serde(with = "matrix_rows")]
    pub y: DMatrix<f64>,
    pub v: Vec<f64>,
    pub params: CertParams,
    /// `[xi - Phi_s(-C_i) - (A^T v)_i, eta_i - Phi_s(C_i) + (A^T v)_i]` per column `i`,
    /// flattened.
    pub margins: Vec<f64>,
    pub beta: f64,
    pub sigma_achieved: f64,
    pub rho_achieved: f64,
}

/// Outcome of one feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum VsgOutcome {
    Certified(Box<VsgCertificate>),
    /// The sufficient condition fails at these parameters. Says nothing
    /// about semigoodness itself.
    Refuted {
        /// Optimal value of the smallest uniform constraint relaxation.
        violation: f64,
    },
}

impl VsgOutcome {
    pub fn certificate(&self) -> Option<&VsgCertificate> {
        match self {
            VsgOutcome::Certified(c) => Some(c),
            VsgOutcome::Refuted { .. } => None,
        }
    }
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }
}

/// `C[Y, A] = I - Y^T A`; column `i` is `C_i`.
pub fn c_matrix(y: &DMatrix<f64>, a: &SenseMatrix) -> DMatrix<f64> {
    let n = a.cols();
    DMatrix::identity(n, n) - y.tr_mul(a.entries())
}

fn check_y_shape(y: &DMatrix<f64>, a: &SenseMatrix) -> Result<()> {
    if y.shape() != a.entries().shape() {
        return Err(Error::DimensionMismatch {
            expected: a.rows() * a.cols(),
            got: y.nrows() * y.ncols(),
        });
    }
    Ok(())
}

/// Directly evaluated margins of the constraints (a)-(c) for `(Y, v)`.
pub fn vsg_margins(
    a: &SenseMatrix,
    pattern: &SignPattern,
    y: &DMatrix<f64>,
    v: &[f64],
    params: &CertParams,
) -> Result<Vec<f64>> {
    check_y_shape(y, a)?;
    pattern.check_len(a.cols())?;
    if v.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: v.len(),
        });
    }
    params.validate(a.cols())?;
    let c = c_matrix(y, a);
    let atv = a.tr_mul_vec(v);
    let (s, xi, theta) = (params.s, params.xi, params.theta);
    let mut margins = Vec::with_capacity(2 * a.cols());
    for i in 0..a.cols() {
        let ci: Vec<f64> = c.column(i).iter().copied().collect();
        let neg: Vec<f64> = ci.iter().map(|x| -x).collect();
        let eta = if pattern.is_plus(i) { theta * xi } else { xi };
        margins.push(xi - phi_s(&neg, s, xi, theta, pattern)? - atv[i]);
        margins.push(eta - phi_s(&ci, s, xi, theta, pattern)? + atv[i]);
    }
    Ok(margins)
}

/// `max_i ||y_i||_*` for the dual of `norm`.
pub fn column_dual_norms(y: &DMatrix<f64>, norm: ResidualNorm) -> f64 {
    y.column_iter()
        .map(|c| norm.dual_norm(c.as_slice()))
        .fold(0.0, f64::max)
}

/// The constant of the error bound: `rho + sigma * max { k+ (1 + theta xi) + kn (1 + xi) }`
/// over splits with `k+ <= |P+|, kn <= |Pn|, k+ + kn <= s`.
pub fn beta_value(
    rho: f64,
    sigma: f64,
    s: usize,
    xi: f64,
    theta: f64,
    n_plus: usize,
    n_free: usize,
) -> f64 {
    if !rho.is_finite() || !sigma.is_finite() {
        return f64::INFINITY;
    }
    let mut best: f64 = 0.0;
    for k_plus in 0..=s.min(n_plus) {
        let k_n = (s - k_plus).min(n_free);
        best = best.max(k_plus as f64 * (1.0 + theta * xi) + k_n as f64 * (1.0 + xi));
    }
    let beta = rho + sigma * best;
    debug_assert!(beta <= rho + sigma * s as f64 * (1.0 + theta * xi) + 1e-12 * beta.abs().max(1.0));
    beta
}

pub fn beta_from_certificate(cert: &VsgCertificate, pattern: &SignPattern) -> f64 {
    let p = &cert.params;
    beta_value(
        cert.rho_achieved,
        cert.sigma_achieved,
        p.s,
        p.xi,
        p.theta,
        pattern.count_plus(),
        pattern.count_n(),
    )
}

/// Builds a certificate from `(Y, v)` if it passes direct evaluation of
/// every constraint, `None` otherwise.
pub fn certify_point(
    a: &SenseMatrix,
    pattern: &SignPattern,
    y: DMatrix<f64>,
    v: Vec<f64>,
    params: &CertParams,
) -> Result<Option<VsgCertificate>> {
    let margins = vsg_margins(a, pattern, &y, &v, params)?;
    if margins.iter().any(|&g| g < -CERT_SLACK_TOL) {
        return Ok(None);
    }
    let sigma_achieved = column_dual_norms(&y, params.residual_norm);
    let rho_achieved = params.residual_norm.dual_norm(&v);
    let tol = |bound: f64| bound + CERT_SLACK_TOL * (1.0 + bound.abs());
    if sigma_achieved > tol(params.sigma) || rho_achieved > tol(params.rho) {
        return Ok(None);
    }
    let mut cert = VsgCertificate {
        y,
        v,
        params: *params,
        margins,
        beta: 0.0,
        sigma_achieved,
        rho_achieved,
    };
    cert.beta = beta_from_certificate(&cert, pattern);
    Ok(Some(cert))
}

/// Re-checks a certificate from scratch.
pub fn validate_certificate(
    a: &SenseMatrix,
    pattern: &SignPattern,
    cert: &VsgCertificate,
) -> Result<()> {
    let margins = vsg_margins(a, pattern, &cert.y, &cert.v, &cert.params)?;
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    if worst < -CERT_SLACK_TOL {
        return Err(Error::Revalidation(format!(
            "constraint violated by {:.3e}",
            -worst
        )));
    }
    let sigma = column_dual_norms(&cert.y, cert.params.residual_norm);
    if sigma > cert.sigma_achieved * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Revalidation("recorded sigma is too small".into()));
    }
    Ok(())
}

/// Variables of an `m x n` matrix `Y` in an LP, `y[k * n + j]` for entry `(k, j)`.
struct YVars {
    m: usize,
    n: usize,
    vars: Vec<Var>,
}

impl YVars {
    fn new(b: &mut LpBuilder, m: usize, n: usize) -> Self {
        YVars {
            m,
            n,
            vars: b.add_vars(m * n, f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn at(&self, k: usize, j: usize) -> Var {
        self.vars[k * self.n + j]
    }

    fn column(&self, j: usize) -> Vec<Var> {
        (0..self.m).map(|k| self.at(k, j)).collect()
    }

    /// `C_{ji} = delta_{ji} - sum_k Y_{kj} A_{ki}`.
    fn c_entry(&self, a: &SenseMatrix, j: usize, i: usize) -> LinExpr {
        let mut e = LinExpr::constant(if i == j { 1.0 } else { 0.0 });
        for k in 0..self.m {
            let coeff = a.get(k, i);
            if coeff != 0.0 {
                e.add_term(self.at(k, j), -coeff);
            }
        }
        e
    }

    fn c_column(&self, a: &SenseMatrix, i: usize) -> Vec<LinExpr> {
        (0..self.n).map(|j| self.c_entry(a, j, i)).collect()
    }

    fn extract(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.n, |k, j| x[self.at(k, j).0])
    }
}

/// Restricts `||vars||_* <= bound` where `*` is the dual of `norm`.
fn add_dual_norm_bound(b: &mut LpBuilder, vars: &[Var], norm: ResidualNorm, bound: f64) {
    if !bound.is_finite() {
        return;
    }
    match norm.dual() {
        ResidualNorm::Linf => {
            for &v in vars {
                b.set_bounds(v, -bound, bound);
            }
        }
        ResidualNorm::L1 => {
            let t = b.add_vars(vars.len(), 0.0, f64::INFINITY);
            let mut total = LinExpr::new();
            for (&v, &tv) in vars.iter().zip(&t) {
                let mut up = LinExpr::term(tv, 1.0);
                up.add_term(v, -1.0);
                b.add_constraint(&up, Relation::Ge, 0.0);
                let mut down = LinExpr::term(tv, 1.0);
                down.add_term(v, 1.0);
                b.add_constraint(&down, Relation::Ge, 0.0);
                total.add_term(tv, 1.0);
            }
            b.add_constraint(&total, Relation::Le, bound);
        }
    }
}

/// Decides the verifiable condition at `params` with one linear program.
///
/// The program minimizes a uniform relaxation `t >= -1e-5` of the constraints,
/// so its optimum always exists; the condition holds iff `t <= 0`. The
/// returned certificate is the program's `(Y, v)` after direct evaluation.
pub fn check_vsg(a: &SenseMatrix, pattern: &SignPattern, params: &CertParams) -> Result<VsgOutcome> {
    let (m, n) = (a.rows(), a.cols());
    pattern.check_len(n)?;
    params.validate(n)?;
    let (s, xi, theta) = (params.s, params.xi, params.theta);
    let mut b = LpBuilder::new(Sense::Min);
    let yv = YVars::new(&mut b, m, n);
    let v = b.add_vars(m, f64::NEG_INFINITY, f64::INFINITY);
    let t = b.add_var(-TARGET_MARGIN, f64::INFINITY);
    b.set_objective_coeff(t, 1.0);
    for j in 0..n {
        add_dual_norm_bound(&mut b, &yv.column(j), params.residual_norm, params.sigma);
    }
    add_dual_norm_bound(&mut b, &v, params.residual_norm, params.rho);
    for i in 0..n {
        let ci = yv.c_column(a, i);
        let mut atv = LinExpr::new();
        for (k, &vk) in v.iter().enumerate() {
            atv.add_term(vk, a.get(k, i));
        }
        // (a): Phi_s(-C_i) <= xi + t - (A^T v)_i
        let neg: Vec<LinExpr> = ci.iter().map(|e| -e.clone()).collect();
        let bound_a = LinExpr::constant(xi) + LinExpr::from(t) - atv.clone();
        phi_epigraph(&mut b, &neg, s, xi, theta, pattern, &bound_a)?;
        // (b), (c): Phi_s(C_i) <= eta_i + t + (A^T v)_i
        let eta = if pattern.is_plus(i) { theta * xi } else { xi };
        let bound_bc = LinExpr::constant(eta) + LinExpr::from(t) + atv;
        phi_epigraph(&mut b, &ci, s, xi, theta, pattern, &bound_bc)?;
    }
    let lp = b.build()?;
    debug!(
        "check_vsg s={s}: {} rows, {} columns, {} nonzeros",
        lp.num_rows(),
        lp.num_vars(),
        lp.num_nonzeros()
    );
    let out = solve(&lp).map_err(|e| e.in_stage("check_vsg"))?;
    if !out.is_optimal() {
        return Err(Error::numerical(
            "check_vsg",
            format!("relaxed program reported {:?}", out.status),
        ));
    }
    let t_opt = out.x[t.0];
    let y = yv.extract(&out.x);
    let vvals: Vec<f64> = v.iter().map(|vk| out.x[vk.0]).collect();
    match certify_point(a, pattern, y, vvals, params)? {
        Some(cert) => Ok(VsgOutcome::Certified(Box::new(cert))),
        None if t_opt > CERT_SLACK_TOL => Ok(VsgOutcome::Refuted { violation: t_opt }),
        None => Err(Error::numerical(
            "check_vsg",
            format!("program optimum {t_opt:.3e} but the point fails direct evaluation"),
        )),
    }
}

/// Largest `s` with `2 s mu < 1 + mu`, capped at `n` (and equal to `n` when `mu = 0`).
pub fn mu_bound(a: &SenseMatrix) -> Result<usize> {
    let mu = mutual_incoherence(a)?;
    Ok(mu_bound_value(mu, a.cols()))
}

pub(crate) fn mu_bound_value(mu: f64, n: usize) -> usize {
    if mu == 0.0 {
        return n;
    }
    let mut s = (((1.0 + mu) / (2.0 * mu)).floor() as usize).min(n);
    while s > 0 && 2.0 * s as f64 * mu >= 1.0 + mu {
        s -= 1;
    }
    s
}

/// `y_i = A_i / ((1 + mu) A_i^T A_i)`.
pub fn mu_matrix(a: &SenseMatrix) -> Result<(DMatrix<f64>, f64)> {
    let mu = mutual_incoherence(a)?;
    let mut y = a.entries().clone();
    for (j, mut col) in y.column_iter_mut().enumerate() {
        let sq = a.entries().column(j).norm_squared();
        col.unscale_mut((1.0 + mu) * sq);
    }
    Ok((y, mu))
}

/// The incoherence-built certificate matrix with the parameters it certifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCertificate {
    #[serde(with = "matrix_rows")]
    pub y: DMatrix<f64>,
    pub mu: f64,
    pub s: usize,
    /// Solves `xi / (1 + xi) = s mu / (1 + mu)`; pairs with `theta = 1`.
    pub xi: f64,
    pub sigma: f64,
}

pub fn mu_certificate(a: &SenseMatrix, s: usize, norm: ResidualNorm) -> Result<MuCertificate> {
    let (y, mu) = mu_matrix(a)?;
    let r = s as f64 * mu / (1.0 + mu);
    if s == 0 || !(r < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "s mu / (1 + mu) = {r} must be below 1/2 for s = {s}"
        )));
    }
    let sigma = (0..a.cols())
        .map(|j| {
            let col = a.column(j);
            let sq: f64 = col.iter().map(|x| x * x).sum();
            norm.dual_norm(&col) / ((1.0 + mu) * sq)
        })
        .fold(0.0, f64::max);
    Ok(MuCertificate {
        y,
        mu,
        s,
        xi: r / (1.0 - r),
        sigma,
    })
}

/// Result of the unsigned search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsignedBound {
    pub s: usize,
    /// `max_i ||C_i||_{s,1}` at the certified level, evaluated directly.
    pub gamma: f64,
    #[serde(with = "opt_matrix_rows")]
    pub y: Option<DMatrix<f64>>,
    /// Number of linear programs solved.
    pub programs: usize,
}

pub(crate) mod opt_matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(rows.map(|rows| {
            let n = rows.first().map_or(0, Vec::len);
            DMatrix::from_fn(rows.len(), n, |i, j| rows[i].get(j).copied().unwrap_or(0.0))
        }))
    }
}

/// `max_i ||C_i[Y, A]||_{s,1}` computed directly.
pub fn unsigned_level(a: &SenseMatrix, y: &DMatrix<f64>, s: usize) -> Result<f64> {
    check_y_shape(y, a)?;
    let c = c_matrix(y, a);
    let mut worst: f64 = 0.0;
    for col in c.column_iter() {
        worst = worst.max(s_top_norm(col.as_slice(), s)?);
    }
    Ok(worst)
}

/// `min_Y max_i ||C_i[Y, A]||_{s,1}` with its minimizer.
pub fn unsigned_program(a: &SenseMatrix, s: usize) -> Result<(f64, DMatrix<f64>)> {
    let (m, n) = (a.rows(), a.cols());
    let mut b = LpBuilder::new(Sense::Min);
    let yv = YVars::new(&mut b, m, n);
    let gamma = b.add_free_var();
    b.set_objective_coeff(gamma, 1.0);
    for i in 0..n {
        stop_norm_epigraph(&mut b, &yv.c_column(a, i), s, &gamma.into())?;
    }
    let out = solve(&b.build()?).map_err(|e| e.in_stage("unsigned"))?;
    if !out.is_optimal() {
        return Err(Error::numerical(
            "unsigned",
            format!("program reported {:?}", out.status),
        ));
    }
    let y = yv.extract(&out.x);
    Ok((unsigned_level(a, &y, s)?, y))
}

/// Largest `s` for which some `Y` has `||C_i[Y, A]||_{s,1} < 1/2` for all `i`.
///
/// Levels already covered by the incoherence matrix are accepted without a
/// program; since the optimum is nondecreasing in `s`, the search then
/// scans upward until the first level that fails.
pub fn unsigned_max_s(a: &SenseMatrix) -> Result<UnsignedBound> {
    let n = a.cols();
    let (ymu, _) = mu_matrix(a)?;
    let mut best = UnsignedBound {
        s: 0,
        gamma: f64::NAN,
        y: None,
        programs: 0,
    };
    let mut s = 1;
    while s <= n {
        let g = unsigned_level(a, &ymu, s)?;
        if g >= UNSIGNED_LEVEL {
            break;
        }
        best.s = s;
        best.gamma = g;
        best.y = Some(ymu.clone());
        s += 1;
    }
    while s <= n {
        let (g, y) = unsigned_program(a, s)?;
        best.programs += 1;
        debug!("unsigned s={s}: gamma={g}");
        if g >= UNSIGNED_LEVEL {
            break;
        }
        best.s = s;
        best.gamma = g;
        best.y = Some(y);
        s += 1;
    }
    Ok(best)
}

/// Rescales the columns of `Y` from `(xi, theta)` to `(xi', theta')`
/// without re-checking.
fn rescale_y(
    y: &DMatrix<f64>,
    pattern: &SignPattern,
    from: (f64, f64),
    to: (f64, f64),
) -> DMatrix<f64> {
    let (xi, theta) = from;
    let (xi2, theta2) = to;
    let a_plus = (1.0 + xi * theta) / (1.0 + xi2 * theta2);
    let a_free = (1.0 + xi) / (1.0 + xi2);
    let mut out = y.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        col.scale_mut(if pattern.is_plus(i) { a_plus } else { a_free });
    }
    out
}

/// Moves a certificate to `(xi', theta')` with `xi <= xi' < 1`, `theta' >= theta`
/// by scaling the columns of `Y`, and re-validates it there.
pub fn rescale_certificate(
    a: &SenseMatrix,
    pattern: &SignPattern,
    cert: &VsgCertificate,
    xi_new: f64,
    theta_new: f64,
) -> Result<VsgCertificate> {
    let p = cert.params;
    if !(xi_new >= p.xi && xi_new < 1.0 && theta_new >= p.theta) {
        return Err(Error::InvalidParameter(format!(
            "cannot move from (xi, theta) = ({}, {}) to ({xi_new}, {theta_new})",
            p.xi, p.theta
        )));
    }
    let y = rescale_y(&cert.y, pattern, (p.xi, p.theta), (xi_new, theta_new));
    let params = CertParams {
        xi: xi_new,
        theta: theta_new,
        ..p
    };
    certify_point(a, pattern, y, cert.v.clone(), &params)?.ok_or_else(|| {
        Error::Revalidation(format!(
            "rescaled certificate fails at xi = {xi_new}, theta = {theta_new}"
        ))
    })
}

/// `max_i max(||z(C_i)||_{s,1}, ||z(-C_i)||_{s,1})` where `z` clips `P+`
/// entries at zero: with `theta = 1` the point `(Y, 0)` then satisfies the
/// condition for every `xi >= g / (1 - g)`.
fn signed_level(c: &DMatrix<f64>, pattern: &SignPattern, s: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for col in c.column_iter() {
        let pos: Vec<f64> = col.iter().copied().collect();
        let neg: Vec<f64> = pos.iter().map(|x| -x).collect();
        for z in [pos, neg] {
            worst = worst.max(top_sum(phi_weights(&z, 0.0, 1.0, pattern), s));
        }
    }
    worst
}

/// Largest `s` such that `(Y, 0)`, either as given or rescaled from the
/// parameters it certifies with `theta = 1`, satisfies the condition at
/// `(xi, theta)`; with the certificate.
pub fn best_fixed_level(
    a: &SenseMatrix,
    pattern: &SignPattern,
    y: &DMatrix<f64>,
    xi: f64,
    theta: f64,
    norm: ResidualNorm,
) -> Result<Option<VsgCertificate>> {
    check_y_shape(y, a)?;
    let c = c_matrix(y, a);
    let zero = vec![0.0; a.rows()];
    let mut best = None;
    for s in 1..=a.cols() {
        let params = CertParams::new(s, xi, theta).with_residual_norm(norm);
        let mut found = certify_point(a, pattern, y.clone(), zero.clone(), &params)?;
        if found.is_none() {
            let g = signed_level(&c, pattern, s);
            if g < 1.0 {
                let xi0 = g / (1.0 - g);
                if xi0 <= xi {
                    let scaled = rescale_y(y, pattern, (xi0, 1.0), (xi, theta));
                    found = certify_point(a, pattern, scaled, zero.clone(), &params)?;
                }
            }
        }
        match found {
            Some(cert) => best = Some(cert),
            None => break,
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateSource {
    /// A supplied warm-start certificate.
    Warm,
    /// The matrix from the unsigned program, with `v = 0`.
    Unsigned,
    /// The incoherence-built matrix, with `v = 0`.
    Incoherence,
    /// A solution of the full program.
    Program,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub s: usize,
    pub source: CertificateSource,
    pub certificate: VsgCertificate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub mu: f64,
    pub unsigned: f64,
    pub warm: f64,
    pub signed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub s_mu: usize,
    pub s_unsigned: usize,
    pub s_signed: usize,
    pub xi: f64,
    pub theta: f64,
    pub residual_norm: ResidualNorm,
    /// Level at which the full program first failed, if reached.
    pub refuted_at: Option<usize>,
    pub unsigned_gamma: f64,
    pub programs_solved: usize,
    /// Every certified level of the incremental phase, plus the warm-start level.
    pub certificates: Vec<LevelCertificate>,
    pub times: StageTimes,
}

impl LowerBoundReport {
    pub fn best_certificate(&self) -> Option<&VsgCertificate> {
        self.certificates
            .iter()
            .find(|c| c.s == self.s_signed)
            .map(|c| &c.certificate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundOptions {
    pub xi: f64,
    pub theta: f64,
    pub residual_norm: ResidualNorm,
    /// Stop the incremental search above this level.
    pub max_s: Option<usize>,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        LowerBoundOptions {
            xi: CertParams::DEFAULT_XI,
            theta: CertParams::DEFAULT_THETA,
            residual_norm: ResidualNorm::default(),
            max_s: None,
        }
    }
}

/// The full lower-bound pipeline: incoherence bound, unsigned bound, the
/// best level reachable from fixed warm-start matrices, then the full
/// program at increasing `s` until it fails.
pub fn max_certified_s(
    a: &SenseMatrix,
    pattern: &SignPattern,
    xi: f64,
    theta: f64,
    warm: Option<&VsgCertificate>,
) -> Result<LowerBoundReport> {
    let opts = LowerBoundOptions {
        xi,
        theta,
        ..Default::default()
    };
    max_certified_s_with(a, pattern, &opts, warm)
}

pub fn max_certified_s_with(
    a: &SenseMatrix,
    pattern: &SignPattern,
    opts: &LowerBoundOptions,
    warm: Option<&VsgCertificate>,
) -> Result<LowerBoundReport> {
    let n = a.cols();
    pattern.check_len(n)?;
    if !(opts.xi > 0.0 && opts.xi < 1.0) || !(opts.theta >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < xi < 1 and theta >= 1, got ({}, {})",
            opts.xi, opts.theta
        )));
    }
    let clock = Instant::now();
    let unsigned = unsigned_max_s(a).map_err(|e| e.in_stage("unsigned"))?;
    let elapsed = clock.elapsed().as_secs_f64();
    let mut report = max_certified_s_from(a, pattern, opts, warm, &unsigned)?;
    report.times.unsigned = elapsed;
    report.programs_solved += unsigned.programs;
    Ok(report)
}

/// As [`max_certified_s_with`], reusing an unsigned bound already computed
/// for `a` (it does not depend on the sign pattern). The unsigned stage time
/// is left at zero.
pub fn max_certified_s_from(
    a: &SenseMatrix,
    pattern: &SignPattern,
    opts: &LowerBoundOptions,
    warm: Option<&VsgCertificate>,
    unsigned: &UnsignedBound,
) -> Result<LowerBoundReport> {
    let n = a.cols();
    pattern.check_len(n)?;
    validate_xi_theta(opts.xi, opts.theta)?;
    if opts.xi <= 0.0 {
        return Err(Error::InvalidParameter("xi must be positive".into()));
    }
    let (xi, theta, norm) = (opts.xi, opts.theta, opts.residual_norm);
    let mut times = StageTimes::default();

    let clock = Instant::now();
    let s_mu = mu_bound(a)?;
    let (ymu, _) = mu_matrix(a)?;
    times.mu = clock.elapsed().as_secs_f64();
    let mut programs = 0;

    let clock = Instant::now();
    let mut candidates: Vec<(CertificateSource, DMatrix<f64>)> = Vec::new();
    if let Some(w) = warm {
        candidates.push((CertificateSource::Warm, w.y.clone()));
    }
    if let Some(y) = &unsigned.y {
        candidates.push((CertificateSource::Unsigned, y.clone()));
    }
    candidates.push((CertificateSource::Incoherence, ymu));
    let mut best: Option<LevelCertificate> = None;
    if let Some(w) = warm {
        // a supplied certificate may use v != 0; take it as is when it moves
        if w.params.xi <= xi && w.params.theta <= theta && w.y.shape() == a.entries().shape() {
            if let Ok(c) = rescale_certificate(a, pattern, w, xi, theta) {
                best = Some(LevelCertificate {
                    s: c.params.s,
                    source: CertificateSource::Warm,
                    certificate: c,
                });
            }
        }
    }
    for (source, y) in &candidates {
        if let Some(cert) = best_fixed_level(a, pattern, y, xi, theta, norm)? {
            if best.as_ref().is_none_or(|b| cert.params.s > b.s) {
                best = Some(LevelCertificate {
                    s: cert.params.s,
                    source: *source,
                    certificate: cert,
                });
            }
        }
    }
    times.warm = clock.elapsed().as_secs_f64();
    let s_warm = best.as_ref().map_or(0, |b| b.s);
    debug!("warm start level {s_warm}");

    let clock = Instant::now();
    let mut certificates: Vec<LevelCertificate> = best.into_iter().collect();
    let mut s_signed = s_warm;
    let mut refuted_at = None;
    let cap = opts.max_s.unwrap_or(n).min(n);
    let mut s = s_warm + 1;
    while s <= cap {
        let params = CertParams::new(s, xi, theta).with_residual_norm(norm);
        let outcome = check_vsg(a, pattern, &params).map_err(|e| e.in_stage(&format!("signed s={s}")))?;
        programs += 1;
        match outcome {
            VsgOutcome::Certified(cert) => {
                info!("certified s={s}");
                s_signed = s;
                certificates.push(LevelCertificate {
                    s,
                    source: CertificateSource::Program,
                    certificate: *cert,
                });
            }
            VsgOutcome::Refuted { violation } => {
                info!("refuted at s={s} (violation {violation:.3e})");
                refuted_at = Some(s);
                break;
            }
        }
        s += 1;
    }
    times.signed = clock.elapsed().as_secs_f64();

    Ok(LowerBoundReport {
        s_mu,
        s_unsigned: unsigned.s,
        s_signed,
        xi,
        theta,
        residual_norm: norm,
        refuted_at,
        unsigned_gamma: unsigned.gamma,
        programs_solved: programs,
        certificates,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> SenseMatrix {
        SenseMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn identity_is_certified_with_trivial_point() {
        let a = SenseMatrix::identity(4);
        let pat = SignPattern::new(4, &[0, 2]).unwrap();
        for s in 1..=4 {
            let params = CertParams::new(s, 0.5, 1.0);
            let out = check_vsg(&a, &pat, &params).unwrap();
            let cert = out.certificate().expect("identity is certified");
            validate_certificate(&a, &pat, cert).unwrap();
            let direct = certify_point(&a, &pat, DMatrix::identity(4, 4), vec![0.0; 4], &params)
                .unwrap()
                .unwrap();
            assert!(direct.margins.iter().all(|&g| g >= 0.5 - 1e-15));
        }
    }

    #[test]
    fn ones_row_nonnegative_is_refuted() {
        let a = row(&[1.0, 1.0]);
        let pat = SignPattern::nonnegative(2);
        let out = check_vsg(&a, &pat, &CertParams::new(1, 0.9999, 10.0)).unwrap();
        assert!(matches!(out, VsgOutcome::Refuted { .. }));
    }

    #[test]
    fn small_unsigned_matrix_is_certified() {
        let mut a = SenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        a.normalize_columns().unwrap();
        let pat = SignPattern::unsigned(3);
        let out = check_vsg(&a, &pat, &CertParams::new(1, 0.9, 1.0)).unwrap();
        validate_certificate(&a, &pat, out.certificate().unwrap()).unwrap();
    }

    #[test]
    fn finite_bounds_are_respected() {
        let mut a = SenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        a.normalize_columns().unwrap();
        let pat = SignPattern::unsigned(3);
        for norm in [ResidualNorm::L1, ResidualNorm::Linf] {
            let params = CertParams::new(1, 0.9, 1.0)
                .with_bounds(2.0, 3.0)
                .with_residual_norm(norm);
            let cert = check_vsg(&a, &pat, &params).unwrap();
            let cert = cert.certificate().unwrap();
            assert!(cert.sigma_achieved <= 3.0 + 1e-6);
            assert!(cert.rho_achieved <= 2.0 + 1e-6);
            assert!(cert.beta.is_finite());
        }
    }

    #[test]
    fn beta_examples() {
        assert!((beta_value(0.0, 1.0, 2, 0.5, 2.0, 1, 3) - 3.5).abs() < 1e-15);
        assert_eq!(beta_value(1.5, 0.0, 3, 0.5, 2.0, 2, 2), 1.5);
        let b = beta_value(0.25, 2.0, 3, 0.5, 4.0, 5, 0);
        assert!((b - (0.25 + 2.0 * 3.0 * 3.0)).abs() < 1e-15);
        assert_eq!(beta_value(f64::INFINITY, 1.0, 1, 0.5, 1.0, 1, 1), f64::INFINITY);
    }

    #[test]
    fn mu_bound_examples() {
        assert_eq!(mu_bound_value(0.2, 10), 2);
        assert_eq!(mu_bound_value(1.0, 10), 0);
        assert_eq!(mu_bound_value(0.0, 7), 7);
        assert_eq!(mu_bound(&SenseMatrix::identity(5)).unwrap(), 5);
    }

    #[test]
    fn mu_certificate_bands() {
        let a = SenseMatrix::identity(3);
        let c = mu_certificate(&a, 1, ResidualNorm::Linf).unwrap();
        assert_eq!(c.y, DMatrix::identity(3, 3));
        assert_eq!(c_matrix(&c.y, &a), DMatrix::zeros(3, 3));

        let phi = 1.1f64;
        let a = SenseMatrix::from_rows(&[vec![1.0, phi.cos()], vec![0.0, phi.sin()]]).unwrap();
        let c = mu_certificate(&a, 1, ResidualNorm::Linf).unwrap();
        let band = c.mu / (1.0 + c.mu);
        for v in c_matrix(&c.y, &a).iter() {
            assert!(v.abs() <= band + 1e-15);
        }
        assert!(mu_certificate(&row(&[1.0, 1.0]), 1, ResidualNorm::Linf).is_err());
    }

    #[test]
    fn unsigned_examples() {
        let u = unsigned_max_s(&SenseMatrix::identity(3)).unwrap();
        assert_eq!(u.s, 3);
        assert_eq!(u.gamma, 0.0);
        let (g, y) = unsigned_program(&row(&[1.0, 1.0]), 1).unwrap();
        assert!((g - 0.5).abs() < 1e-9);
        assert!((y[(0, 0)] - 0.5).abs() < 1e-9 && (y[(0, 1)] - 0.5).abs() < 1e-9);
        assert_eq!(unsigned_max_s(&row(&[1.0, 1.0])).unwrap().s, 0);
    }

    #[test]
    fn rescale_examples() {
        let a = SenseMatrix::identity(2);
        let pat = SignPattern::new(2, &[0]).unwrap();
        let y = DMatrix::identity(2, 2);
        let cert = certify_point(&a, &pat, y.clone(), vec![0.0; 2], &CertParams::new(1, 0.5, 2.0))
            .unwrap()
            .unwrap();
        let moved = rescale_certificate(&a, &pat, &cert, 0.8, 2.0).unwrap();
        assert!((moved.y[(0, 0)] - 2.0 / 2.6).abs() < 1e-15);
        assert!((moved.y[(1, 1)] - 1.5 / 1.8).abs() < 1e-15);
        let same = rescale_certificate(&a, &pat, &cert, 0.5, 2.0).unwrap();
        assert_eq!(same.y, y);
        assert!(rescale_certificate(&a, &pat, &cert, 0.4, 2.0).is_err());
    }

    #[test]
    fn pipeline_on_small_cases() {
        let r = max_certified_s(&SenseMatrix::identity(3), &SignPattern::nonnegative(3), 0.9999, 10.0, None)
            .unwrap();
        assert_eq!(r.s_signed, 3);
        assert_eq!(r.s_mu, 3);
        let r = max_certified_s(&row(&[1.0, 1.0]), &SignPattern::nonnegative(2), 0.9999, 10.0, None).unwrap();
        assert_eq!(r.s_signed, 0);
        assert_eq!(r.refuted_at, Some(1));
        assert!(r.best_certificate().is_none());
    }
}
