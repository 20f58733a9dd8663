//! Linear programming: a solver-agnostic program representation, a dense
//! revised simplex, a HiGHS backend for the large certificate programs, and
//! epigraph encodings of the norms used throughout the crate.

mod dense;
mod dump;
mod epigraph;
mod highs;

pub use dense::DenseSimplex;
pub use dump::{set_dump_dir, write_lp_format};
pub use epigraph::{phi_epigraph, psi_level_set, stop_norm_epigraph};
pub use highs::HighsSolver;

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows whose activity misses the bound by more than this (relative to
/// `1 + |rhs|`) make an OPTIMAL claim invalid.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Handle to a variable of an [`LpBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

/// An affine expression `sum c_j x_j + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(var: Var, coeff: f64) -> Self {
        LinExpr {
            terms: vec![(var.0, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, var: Var, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((var.0, coeff));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) -> &mut Self {
        if k != 0.0 {
            self.terms
                .extend(other.terms.iter().map(|&(j, c)| (j, c * k)));
            self.constant += other.constant * k;
        }
        self
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    /// Terms with repeated variables merged and zeros dropped, sorted by index.
    pub fn merged_terms(&self) -> Vec<(usize, f64)> {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

/// One row `sum coeffs <rel> rhs`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Bounds `[lo, hi]` on the row activity.
    pub fn range(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Eq => (self.rhs, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
        }
    }
}

/// A validated linear program. Build one with [`LpBuilder`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.coeffs.len()).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`, each measured relative
    /// to `1 + |bound|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let act = c.activity(x);
            let (lo, hi) = c.range();
            worst = worst.max((lo - act) / (1.0 + lo.abs()));
            worst = worst.max((act - hi) / (1.0 + hi.abs()));
        }
        for j in 0..self.num_vars() {
            worst = worst.max((self.lower[j] - x[j]) / (1.0 + self.lower[j].abs()));
            worst = worst.max((x[j] - self.upper[j]) / (1.0 + self.upper[j].abs()));
        }
        worst.max(0.0)
    }

    /// `c^T x - L(y)` where `L` is the Lagrangian lower bound (upper bound
    /// for MAX programs) induced by the row multipliers `y`. Reduced costs
    /// below `tol` in the wrong direction are treated as zero.
    pub fn duality_gap(&self, x: &[f64], y: &[f64]) -> f64 {
        let flip = if self.sense == Sense::Max { -1.0 } else { 1.0 };
        let tol = 1e-9;
        let mut reduced: Vec<f64> = self.objective.iter().map(|c| flip * c).collect();
        for (c, &yi) in self.constraints.iter().zip(y) {
            for &(j, a) in &c.coeffs {
                reduced[j] -= yi * a;
            }
        }
        let box_min = |d: f64, lo: f64, hi: f64, at: f64| -> f64 {
            if d.abs() <= tol {
                d * at
            } else if d > 0.0 {
                if lo.is_finite() { d * lo } else { f64::NEG_INFINITY }
            } else if hi.is_finite() {
                d * hi
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut bound = 0.0;
        for j in 0..self.num_vars() {
            bound += box_min(reduced[j], self.lower[j], self.upper[j], x[j]);
        }
        for (c, &yi) in self.constraints.iter().zip(y) {
            let (lo, hi) = c.range();
            bound += box_min(yi, lo, hi, c.activity(x));
        }
        let primal = flip * self.objective_value(x);
        (primal - bound).max(0.0)
    }
}

/// Incremental construction of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        LpBuilder {
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> Var {
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        Var(self.objective.len() - 1)
    }

    pub fn add_free_var(&mut self) -> Var {
        self.add_var(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_nonneg_var(&mut self) -> Var {
        self.add_var(0.0, f64::INFINITY)
    }

    pub fn add_vars(&mut self, count: usize, lower: f64, upper: f64) -> Vec<Var> {
        (0..count).map(|_| self.add_var(lower, upper)).collect()
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    pub fn set_objective_coeff(&mut self, var: Var, c: f64) {
        self.objective[var.0] = c;
    }

    /// Sets the objective to the linear part of `expr`; the constant is dropped.
    pub fn set_objective(&mut self, expr: &LinExpr) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        for (j, c) in expr.merged_terms() {
            self.objective[j] = c;
        }
    }

    /// Adds `expr <rel> rhs`, moving the constant of `expr` to the right.
    pub fn add_constraint(&mut self, expr: &LinExpr, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs: expr.merged_terms(),
            relation,
            rhs: rhs - expr.constant_part(),
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn build(self) -> Result<LinearProgram> {
        let n = self.objective.len();
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::MalformedProgram(format!(
                    "variable {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedProgram("non-finite objective coefficient".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::MalformedProgram(format!("row {i} has rhs {}", c.rhs)));
            }
            if c.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::MalformedProgram(format!(
                    "row {i} references an unknown variable or a non-finite coefficient"
                )));
            }
        }
        Ok(LinearProgram {
            sense: self.sense,
            objective: self.objective,
            constraints: self.constraints,
            lower: self.lower,
            upper: self.upper,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal solution; empty unless OPTIMAL.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers, sign convention `c - A^T y = reduced costs` in the
    /// minimization form of the program.
    pub duals: Option<Vec<f64>>,
    pub duality_gap: Option<f64>,
}

impl LpOutcome {
    pub(crate) fn infeasible() -> Self {
        LpOutcome {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::NAN,
            duals: None,
            duality_gap: None,
        }
    }

    pub(crate) fn unbounded() -> Self {
        LpOutcome {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NAN,
            duals: None,
            duality_gap: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// A backend able to solve a [`LinearProgram`].
pub trait LpSolver {
    fn name(&self) -> &'static str;

    /// Solves `lp`. Implementations return `Error::Numerical` rather than a
    /// status they cannot stand behind.
    fn solve_raw(&self, lp: &LinearProgram) -> Result<LpOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SolverChoice {
    /// Dense simplex for small programs, HiGHS otherwise.
    #[default]
    Auto,
    Dense,
    Highs,
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(SolverChoice::Auto),
            "dense" => Ok(SolverChoice::Dense),
            "highs" => Ok(SolverChoice::Highs),
            other => Err(Error::Parse(format!("unknown solver '{other}'"))),
        }
    }
}

const DENSE_MAX_ROWS: usize = 400;

impl SolverChoice {
    fn pick(self, lp: &LinearProgram) -> SolverChoice {
        match self {
            SolverChoice::Auto if lp.num_rows() <= DENSE_MAX_ROWS => SolverChoice::Dense,
            SolverChoice::Auto => SolverChoice::Highs,
            other => other,
        }
    }
}

/// Solves with the automatically chosen backend.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_with(lp, SolverChoice::Auto)
}

/// Solves `lp` and independently re-checks any OPTIMAL answer against the
/// program before returning it.
pub fn solve_with(lp: &LinearProgram, choice: SolverChoice) -> Result<LpOutcome> {
    dump::maybe_dump(lp);
    let mut out = match choice.pick(lp) {
        SolverChoice::Highs => HighsSolver.solve_raw(lp)?,
        _ => DenseSimplex::default().solve_raw(lp)?,
    };
    if out.status == LpStatus::Optimal {
        let viol = lp.max_violation(&out.x);
        if viol > FEASIBILITY_TOL {
            return Err(Error::numerical(
                "lp",
                format!("solution violates the program by {viol:.3e}"),
            ));
        }
        out.objective = lp.objective_value(&out.x);
        if let Some(y) = &out.duals {
            out.duality_gap = Some(lp.duality_gap(&out.x, y));
        }
    }
    Ok(out)
}
