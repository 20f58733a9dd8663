//! Shared fixtures and an l1-uniqueness oracle independent of the disproof
//! programs used by the crate's own exhaustive check.

#![allow(dead_code)]

use itertools::Itertools;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semigood::ensembles::{generate, EnsembleKind, EnsembleSpec};
use semigood::lp::{solve, LinExpr, LpBuilder, LpStatus, Relation, Sense};
use semigood::{SenseMatrix, SignPattern};

/// Coordinate spread above which the minimizer counts as non-unique.
const SPREAD_TOL: f64 = 1e-7;

pub struct Case {
    pub label: String,
    pub a: SenseMatrix,
    pub pattern: SignPattern,
}

pub fn pattern_named(name: &str, n: usize) -> SignPattern {
    match name {
        "unsigned" => SignPattern::unsigned(n),
        "nonnegative" => SignPattern::nonnegative(n),
        "mixed" => SignPattern::new(n, &(0..n / 2).collect::<Vec<_>>()).unwrap(),
        other => panic!("unknown pattern {other}"),
    }
}

pub const PATTERNS: [&str; 3] = ["unsigned", "nonnegative", "mixed"];

/// Seeded small instances: `m` in 3..=5, `n` in 6..=9 (capped at `n_max`),
/// Gaussian and Rademacher, cycling through the three patterns.
pub fn small_suite(count: usize, n_max: usize) -> Vec<Case> {
    (0..count)
        .map(|k| {
            let seed = 1000 + k as u64;
            let m = 3 + k % 3;
            let n = (6 + (k / 3) % 4).min(n_max);
            let kind = if k % 2 == 0 {
                EnsembleKind::Gaussian
            } else {
                EnsembleKind::Rademacher
            };
            let name = PATTERNS[k % 3];
            let a = generate(&EnsembleSpec::new(kind, m, n, seed)).unwrap();
            Case {
                label: format!("{}-{m}x{n}-seed{seed}-{name}", kind.name()),
                pattern: pattern_named(name, n),
                a,
            }
        })
        .collect()
}

/// Whether `w` is the only minimizer of `||z||_1` over `Az = Aw` with the
/// sign restrictions: the optimal face must collapse to a point in every
/// coordinate.
pub fn unique_minimizer(a: &SenseMatrix, pattern: &SignPattern, w: &[f64]) -> bool {
    let n = a.cols();
    let aw = a.mul_vec(w);
    let budget = w.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + 1e-10) + 1e-12;
    for k in 0..n {
        for sense in [Sense::Max, Sense::Min] {
            let mut b = LpBuilder::new(sense);
            let p = b.add_vars(n, 0.0, f64::INFINITY);
            let q: Vec<_> = (0..n)
                .map(|i| b.add_var(0.0, if pattern.is_plus(i) { 0.0 } else { f64::INFINITY }))
                .collect();
            for r in 0..a.rows() {
                let mut e = LinExpr::new();
                for i in 0..n {
                    e.add_term(p[i], a.get(r, i)).add_term(q[i], -a.get(r, i));
                }
                b.add_constraint(&e, Relation::Eq, aw[r]);
            }
            let mut l1 = LinExpr::new();
            for i in 0..n {
                l1.add_term(p[i], 1.0).add_term(q[i], 1.0);
            }
            b.add_constraint(&l1, Relation::Le, budget);
            let mut obj = LinExpr::new();
            obj.add_term(p[k], 1.0).add_term(q[k], -1.0);
            b.set_objective(&obj);
            let out = solve(&b.build().unwrap()).unwrap();
            assert_eq!(out.status, LpStatus::Optimal, "w itself is feasible");
            if (out.objective - w[k]).abs() > SPREAD_TOL {
                return false;
            }
        }
    }
    true
}

/// Sign vectors on `support` consistent with the pattern, up to global sign
/// when nothing is restricted.
fn sign_choices(pattern: &SignPattern, support: &[usize]) -> Vec<Vec<f64>> {
    let free: Vec<usize> = (0..support.len()).filter(|&t| !pattern.is_plus(support[t])).collect();
    let fixed = usize::from(pattern.count_plus() == 0 && !free.is_empty());
    (0..1usize << (free.len() - fixed))
        .map(|mask| {
            let mut sg = vec![1.0; support.len()];
            for (bit, &t) in free[fixed..].iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    sg[t] = -1.0;
                }
            }
            sg
        })
        .collect()
}

/// s-semigoodness decided by uniqueness of every `s`-sparse sign-feasible
/// signal with unit magnitudes (uniqueness depends only on support and signs).
pub fn semigood_by_uniqueness(a: &SenseMatrix, pattern: &SignPattern, s: usize) -> bool {
    let n = a.cols();
    for k in 1..=s {
        for support in (0..n).combinations(k) {
            for signs in sign_choices(pattern, &support) {
                let mut w = vec![0.0; n];
                for (&i, &sg) in support.iter().zip(&signs) {
                    w[i] = sg;
                }
                if !unique_minimizer(a, pattern, &w) {
                    return false;
                }
            }
        }
    }
    true
}

/// Largest uniqueness level, searching no further than `cap`.
pub fn uniqueness_level(a: &SenseMatrix, pattern: &SignPattern, cap: usize) -> usize {
    (1..=cap.min(a.cols()))
        .take_while(|&s| semigood_by_uniqueness(a, pattern, s))
        .last()
        .unwrap_or(0)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An `s`-sparse sign-feasible signal with magnitudes in `[0.1, 2]`.
pub fn random_sparse(rng: &mut ChaCha8Rng, pattern: &SignPattern, s: usize) -> Vec<f64> {
    let n = pattern.n();
    let mut w = vec![0.0; n];
    for i in index::sample(rng, n, s) {
        let mag = rng.random_range(0.1..2.0);
        w[i] = if pattern.is_plus(i) || rng.random::<bool>() { mag } else { -mag };
    }
    w
}

pub fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

pub fn linf_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
