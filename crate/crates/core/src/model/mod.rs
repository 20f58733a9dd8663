//! Domain types: sensing matrices, sign patterns, certificate parameters, and
//! the norm-like functionals every certificate is expressed in.
//!
//! All indices are 0-based. A pattern partitions `0..n` into the
//! nonnegativity-restricted set `P+` and the unrestricted set `Pn`;
//! nonpositive restrictions are folded into `P+` by negating the
//! corresponding columns of the sensing matrix (see
//! [`normalize_sign_restrictions`]).

pub(crate) mod functionals;

pub use functionals::{
    best_s_approx, mutual_incoherence, phi_s, psi, s_top_norm, top_s_indices,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of the column indices into `P+` (nonnegative) and `Pn` (free).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignPattern {
    n: usize,
    p_plus: Vec<usize>,
    p_n: Vec<usize>,
    /// Original `P-` indices whose columns were negated during normalization.
    flipped: Vec<usize>,
    #[serde(skip)]
    plus_mask: Vec<bool>,
}

impl SignPattern {
    /// Builds a pattern from an explicit `P+` set; every other index is free.
    pub fn new(n: usize, p_plus: &[usize]) -> Result<Self> {
        Self::with_flipped(n, p_plus, &[])
    }

    fn with_flipped(n: usize, p_plus: &[usize], flipped: &[usize]) -> Result<Self> {
        let mut plus_mask = vec![false; n];
        for &i in p_plus {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            plus_mask[i] = true;
        }
        let p_plus: Vec<usize> = (0..n).filter(|&i| plus_mask[i]).collect();
        let p_n: Vec<usize> = (0..n).filter(|&i| !plus_mask[i]).collect();
        let mut flipped = flipped.to_vec();
        flipped.sort_unstable();
        flipped.dedup();
        Ok(SignPattern {
            n,
            p_plus,
            p_n,
            flipped,
            plus_mask,
        })
    }

    /// No sign restrictions at all.
    pub fn unsigned(n: usize) -> Self {
        Self::new(n, &[]).expect("empty P+ is always valid")
    }

    /// Every entry restricted to be nonnegative.
    pub fn nonnegative(n: usize) -> Self {
        let all: Vec<usize> = (0..n).collect();
        Self::new(n, &all).expect("full P+ is always valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_plus(&self) -> &[usize] {
        &self.p_plus
    }

    pub fn p_n(&self) -> &[usize] {
        &self.p_n
    }

    pub fn flipped(&self) -> &[usize] {
        &self.flipped
    }

    #[inline]
    pub fn is_plus(&self, i: usize) -> bool {
        self.plus_mask[i]
    }

    pub fn count_plus(&self) -> usize {
        self.p_plus.len()
    }

    pub fn count_n(&self) -> usize {
        self.p_n.len()
    }

    /// Whether `x` obeys the nonnegativity restrictions (up to `tol`).
    pub fn admits(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n && self.p_plus.iter().all(|&i| x[i] >= -tol)
    }

    /// Maps a signal of the normalized problem back to the original sign
    /// convention by negating the flipped coordinates.
    pub fn unflip(&self, x: &mut [f64]) {
        for &i in &self.flipped {
            x[i] = -x[i];
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }
}

/// Dense `m x n` sensing matrix together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseMatrix {
    entries: DMatrix<f64>,
    ensemble: String,
    seed: u64,
    column_normalized: bool,
}

impl SenseMatrix {
    pub fn new(entries: DMatrix<f64>) -> Self {
        SenseMatrix {
            entries,
            ensemble: "custom".to_string(),
            seed: 0,
            column_normalized: false,
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(m: usize, n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("matrix entries must be finite".into()));
        }
        Ok(Self::new(DMatrix::from_row_slice(m, n, data)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(m, n, &data)
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::new(DMatrix::identity(n, n));
        a.column_normalized = true;
        a.ensemble = "identity".to_string();
        a
    }

    pub fn with_provenance(mut self, ensemble: impl Into<String>, seed: u64) -> Self {
        self.ensemble = ensemble.into();
        self.seed = seed;
        self
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn ensemble(&self) -> &str {
        &self.ensemble
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_column_normalized(&self) -> bool {
        self.column_normalized
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.entries.column(j).iter().copied().collect()
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let (m, n) = self.entries.shape();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for j in 0..self.cols() {
            let norm = self.entries.column(j).norm();
            if norm == 0.0 {
                return Err(Error::ZeroColumn(j));
            }
            self.entries.column_mut(j).unscale_mut(norm);
        }
        self.column_normalized = true;
        Ok(())
    }

    /// Sets the normalization flag from the actual column norms.
    pub(crate) fn detect_normalization(&mut self) {
        self.column_normalized = (0..self.cols())
            .all(|j| (self.entries.column(j).norm() - 1.0).abs() <= 1e-12);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        (&self.entries * xv).iter().copied().collect()
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let yv = DVector::from_column_slice(y);
        self.entries.tr_mul(&yv).iter().copied().collect()
    }

    /// Negates the listed columns in place.
    pub(crate) fn negate_columns(&mut self, cols: &[usize]) {
        for &j in cols {
            self.entries.column_mut(j).neg_mut();
        }
    }
}

/// The norm `||.||` on observation space. Only polyhedral choices are
/// supported so every recovery problem stays a linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResidualNorm {
    #[serde(rename = "L1")]
    L1,
    #[default]
    #[serde(rename = "LINF")]
    Linf,
}

impl ResidualNorm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            ResidualNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            ResidualNorm::Linf => v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())),
        }
    }

    /// The conjugate norm `||.||_*`.
    pub fn dual(self) -> ResidualNorm {
        match self {
            ResidualNorm::L1 => ResidualNorm::Linf,
            ResidualNorm::Linf => ResidualNorm::L1,
        }
    }

    pub fn dual_norm(self, v: &[f64]) -> f64 {
        self.dual().norm(v)
    }

    pub fn name(self) -> &'static str {
        match self {
            ResidualNorm::L1 => "L1",
            ResidualNorm::Linf => "LINF",
        }
    }
}

impl std::str::FromStr for ResidualNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(ResidualNorm::L1),
            "linf" | "inf" => Ok(ResidualNorm::Linf),
            other => Err(Error::Parse(format!("unknown residual norm '{other}'"))),
        }
    }
}

/// A signal obeying the sign restrictions of a pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: Vec<f64>,
}

impl SparseSignal {
    pub fn new(values: Vec<f64>, pattern: &SignPattern) -> Result<Self> {
        pattern.check_len(values.len())?;
        if let Some(&i) = pattern.p_plus().iter().find(|&&i| values[i] < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "entry {i} is restricted to be nonnegative but equals {}",
                values[i]
            )));
        }
        Ok(SparseSignal { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] != 0.0)
            .collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// Parameters `(s, xi, theta, rho, sigma)` of the verifiable condition.
/// `rho` and `sigma` may be `f64::INFINITY`, in which case the corresponding
/// norm constraints are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertParams {
    pub s: usize,
    pub xi: f64,
    pub theta: f64,
    #[serde(with = "crate::io::inf_as_null")]
    pub rho: f64,
    #[serde(with = "crate::io::inf_as_null")]
    pub sigma: f64,
    pub residual_norm: ResidualNorm,
}

impl CertParams {
    pub const DEFAULT_XI: f64 = 0.9999;
    pub const DEFAULT_THETA: f64 = 10.0;

    /// Parameters with `rho = sigma = infinity`.
    pub fn new(s: usize, xi: f64, theta: f64) -> Self {
        CertParams {
            s,
            xi,
            theta,
            rho: f64::INFINITY,
            sigma: f64::INFINITY,
            residual_norm: ResidualNorm::default(),
        }
    }

    pub fn with_bounds(mut self, rho: f64, sigma: f64) -> Self {
        self.rho = rho;
        self.sigma = sigma;
        self
    }

    pub fn with_residual_norm(mut self, norm: ResidualNorm) -> Self {
        self.residual_norm = norm;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s < 1 || self.s > n {
            return Err(Error::SparsityOutOfRange { s: self.s, n });
        }
        validate_xi_theta(self.xi, self.theta)?;
        if self.rho.is_nan() || self.rho < 0.0 || self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(Error::InvalidParameter(
                "rho and sigma must be nonnegative (or infinite)".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn validate_xi_theta(xi: f64, theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("xi = {xi} must lie in [0, 1)")));
    }
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta = {theta} must be >= 1")));
    }
    Ok(())
}

/// Folds nonpositivity restrictions into nonnegativity ones by negating the
/// `P-` columns. The pair (matrix, pattern) returned is s-semigood exactly
/// when the original one is.
pub fn normalize_sign_restrictions(
    a: &SenseMatrix,
    p_plus: &[usize],
    p_minus: &[usize],
) -> Result<(SenseMatrix, SignPattern)> {
    let n = a.cols();
    for &i in p_plus.iter().chain(p_minus) {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
    }
    if let Some(&i) = p_minus.iter().find(|i| p_plus.contains(i)) {
        return Err(Error::OverlappingSets(i));
    }
    let mut flipped_matrix = a.clone();
    flipped_matrix.negate_columns(p_minus);
    let merged: Vec<usize> = p_plus.iter().chain(p_minus).copied().collect();
    let pattern = SignPattern::with_flipped(n, &merged, p_minus)?;
    Ok((flipped_matrix, pattern))
}
