//! Bounded revised simplex on an explicit dense basis inverse.
//!
//! Rows are turned into equalities `A x - r = 0` with one logical variable
//! `r_i` per row carrying the row bounds, so the all-logical basis is always
//! available as a starting point. Phase 1 minimizes the sum of bound
//! violations of the basic variables (costs recomputed every iteration);
//! phase 2 runs on the true costs. Pricing is Dantzig's rule with a
//! switch to Bland's rule after a run of degenerate pivots.

use log::{debug, trace};
use nalgebra::DMatrix;

use super::{LinearProgram, LpOutcome, LpSolver, LpStatus, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseSimplex {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// `None` scales the limit with the program size.
    pub max_iterations: Option<usize>,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            pivot_tol: 1e-9,
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iterations: None,
        }
    }
}

impl LpSolver for DenseSimplex {
    fn name(&self) -> &'static str {
        "dense-simplex"
    }

    fn solve_raw(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        Tableau::new(self, lp).run()
    }
}

const REFACTOR_EVERY: usize = 100;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable parked at zero.
    Zero,
}

struct Tableau<'a> {
    cfg: &'a DenseSimplex,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Column-major `m x m` basis inverse.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
}

enum Step {
    Flip,
    Pivot { row: usize, to_upper: bool },
}

impl<'a> Tableau<'a> {
    fn new(cfg: &'a DenseSimplex, lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut cols = vec![Vec::new(); n];
        for (i, c) in lp.constraints().iter().enumerate() {
            for &(j, a) in &c.coeffs {
                cols[j].push((i, a));
            }
        }
        let flip = if lp.sense() == Sense::Max { -1.0 } else { 1.0 };
        let mut cost: Vec<f64> = lp.objective().iter().map(|c| flip * c).collect();
        cost.resize(n + m, 0.0);
        let mut lb = lp.lower().to_vec();
        let mut ub = lp.upper().to_vec();
        for c in lp.constraints() {
            let (lo, hi) = c.range();
            lb.push(lo);
            ub.push(hi);
        }
        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Basic; n + m];
        for j in 0..n {
            if lb[j].is_finite() {
                x[j] = lb[j];
                state[j] = State::Lower;
            } else if ub[j].is_finite() {
                x[j] = ub[j];
                state[j] = State::Upper;
            } else {
                state[j] = State::Zero;
            }
        }
        for (i, c) in lp.constraints().iter().enumerate() {
            x[n + i] = c.activity(&x[..n]);
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        Tableau {
            cfg,
            m,
            n,
            cols,
            lb,
            ub,
            cost,
            x,
            state,
            basis: (n..n + m).collect(),
            binv,
            pivots_since_refactor: 0,
        }
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                f(i, a);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_column(j, |k, a| {
            let col = &self.binv[k * m..(k + 1) * m];
            for (out, b) in alpha.iter_mut().zip(col) {
                *out += a * b;
            }
        });
        alpha
    }

    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|k| {
                self.binv[k * m..(k + 1) * m]
                    .iter()
                    .zip(cb)
                    .map(|(b, c)| b * c)
                    .sum()
            })
            .collect()
    }

    fn reduced_cost(&self, j: usize, c: f64, y: &[f64]) -> f64 {
        let mut d = c;
        self.for_column(j, |k, a| d -= y[k] * a);
        d
    }

    fn infeasibility(&self, b: usize) -> f64 {
        let v = self.x[b];
        if v < self.lb[b] - self.cfg.feas_tol {
            -1.0
        } else if v > self.ub[b] + self.cfg.feas_tol {
            1.0
        } else {
            0.0
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (pos, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                for &(i, a) in &self.cols[j] {
                    b[(i, pos)] = a;
                }
            } else {
                b[(j - self.n, pos)] = -1.0;
            }
        }
        let inv = b
            .try_inverse()
            .ok_or_else(|| Error::numerical("dense-simplex", "basis matrix became singular"))?;
        self.binv.copy_from_slice(inv.as_slice());
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    /// Re-derives basic values from the nonbasic ones: `x_B = -B^{-1} N x_N`.
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + self.m {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                self.for_column(j, |k, a| rhs[k] -= a * v);
            }
        }
        let mut xb = vec![0.0; m];
        for (k, &r) in rhs.iter().enumerate() {
            if r != 0.0 {
                for (out, b) in xb.iter_mut().zip(&self.binv[k * m..(k + 1) * m]) {
                    *out += r * b;
                }
            }
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[pos];
        }
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[row];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            if col[row] == 0.0 {
                continue;
            }
            let piv = col[row] / p;
            for (i, v) in col.iter_mut().enumerate() {
                if i != row {
                    *v -= alpha[i] * piv;
                }
            }
            col[row] = piv;
        }
        let leaving = self.basis[row];
        self.basis[row] = entering;
        self.state[entering] = State::Basic;
        debug_assert_ne!(self.state[leaving], State::Basic);
        self.pivots_since_refactor += 1;
    }

    /// Chooses the entering variable and its direction.
    fn price(&self, phase1: bool, y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let tol = self.cfg.opt_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            let dir = match self.state[j] {
                State::Basic => continue,
                _ if self.lb[j] == self.ub[j] => continue,
                s => {
                    let c = if phase1 { 0.0 } else { self.cost[j] };
                    let d = self.reduced_cost(j, c, y);
                    match s {
                        State::Lower if d < -tol => (1.0, -d),
                        State::Upper if d > tol => (-1.0, d),
                        State::Zero if d.abs() > tol => (-d.signum(), d.abs()),
                        _ => continue,
                    }
                }
            };
            if bland {
                return Some((j, dir.0));
            }
            if best.is_none_or(|b| dir.1 > b.2) {
                best = Some((j, dir.0, dir.1));
            }
        }
        best.map(|b| (b.0, b.1))
    }

    /// Ratio test along `x_q += dir * t`. Returns the step length and the
    /// kind of step, or `None` if nothing blocks.
    fn ratio_test(
        &self,
        q: usize,
        dir: f64,
        alpha: &[f64],
        phase1: bool,
        bland: bool,
    ) -> Option<(f64, Step)> {
        let ftol = self.cfg.feas_tol;
        let range = self.ub[q] - self.lb[q];
        // (row, exact ratio, relaxed ratio, hits upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (r, &a) in alpha.iter().enumerate() {
            let delta = -dir * a;
            if delta.abs() <= self.cfg.pivot_tol {
                continue;
            }
            let b = self.basis[r];
            let v = self.x[b];
            let infeas = if phase1 { self.infeasibility(b) } else { 0.0 };
            let (bound, to_upper) = if infeas < 0.0 {
                if delta < 0.0 {
                    continue;
                }
                (self.lb[b], false)
            } else if infeas > 0.0 {
                if delta > 0.0 {
                    continue;
                }
                (self.ub[b], true)
            } else if delta > 0.0 {
                if !self.ub[b].is_finite() {
                    continue;
                }
                (self.ub[b], true)
            } else {
                if !self.lb[b].is_finite() {
                    continue;
                }
                (self.lb[b], false)
            };
            let exact = ((bound - v) / delta).max(0.0);
            let slack = if delta > 0.0 { ftol } else { -ftol };
            let relaxed = ((bound + slack - v) / delta).max(0.0);
            cands.push((r, exact, relaxed, to_upper));
        }
        let chosen = if bland {
            let min = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 <= min + 1e-12)
                .min_by_key(|c| self.basis[c.0])
                .copied()
        } else {
            let cap = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 <= cap)
                .max_by(|a, b| alpha[a.0].abs().total_cmp(&alpha[b.0].abs()))
                .copied()
        };
        match chosen {
            Some((r, t, _, up)) if t < range => Some((t, Step::Pivot { row: r, to_upper: up })),
            _ if range.is_finite() => Some((range, Step::Flip)),
            _ => None,
        }
    }

    fn iteration_limit(&self) -> usize {
        self.cfg
            .max_iterations
            .unwrap_or(20 * (self.n + self.m) + 10_000)
    }

    fn run(mut self) -> Result<LpOutcome> {
        let m = self.m;
        let limit = self.iteration_limit();
        let mut degenerate = 0usize;
        let mut verified_at = usize::MAX;
        for iter in 0..limit {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let phase1 = self
                .basis
                .iter()
                .any(|&b| self.infeasibility(b) != 0.0);
            let cb: Vec<f64> = self
                .basis
                .iter()
                .map(|&b| {
                    if phase1 {
                        self.infeasibility(b)
                    } else {
                        self.cost[b]
                    }
                })
                .collect();
            let y = self.btran(&cb);
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((q, dir)) = self.price(phase1, &y, bland) else {
                // confirm on a fresh factorization before concluding
                if verified_at != iter && self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    verified_at = iter + 1;
                    continue;
                }
                debug!("dense simplex stopped after {iter} iterations (phase1={phase1})");
                if phase1 {
                    return Ok(LpOutcome::infeasible());
                }
                return Ok(self.optimal_outcome(y));
            };
            let alpha = self.ftran(q);
            let Some((t, step)) = self.ratio_test(q, dir, &alpha, phase1, bland) else {
                if phase1 {
                    return Err(Error::numerical(
                        "dense-simplex",
                        "unblocked direction while minimizing infeasibility",
                    ));
                }
                if verified_at != iter && self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    verified_at = iter + 1;
                    continue;
                }
                return Ok(LpOutcome::unbounded());
            };
            trace!("iter {iter}: enter {q} dir {dir} step {t}");
            if t <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.x[q] += dir * t;
            for r in 0..m {
                let b = self.basis[r];
                self.x[b] -= dir * alpha[r] * t;
            }
            match step {
                Step::Flip => {
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                }
                Step::Pivot { row, to_upper } => {
                    let leaving = self.basis[row];
                    if to_upper {
                        self.state[leaving] = State::Upper;
                        self.x[leaving] = self.ub[leaving];
                    } else {
                        self.state[leaving] = State::Lower;
                        self.x[leaving] = self.lb[leaving];
                    }
                    self.pivot(row, q, &alpha);
                }
            }
        }
        Err(Error::numerical(
            "dense-simplex",
            format!("iteration limit {limit} reached"),
        ))
    }

    fn optimal_outcome(&self, y: Vec<f64>) -> LpOutcome {
        LpOutcome {
            status: LpStatus::Optimal,
            x: self.x[..self.n].to_vec(),
            objective: f64::NAN,
            duals: Some(y),
            duality_gap: None,
        }
    }
}
