use crate::error::{Error, Result};
use crate::model::{validate_xi_theta, SenseMatrix, SignPattern};

fn check_s(s: usize, n: usize) -> Result<()> {
    if s < 1 || s > n {
        return Err(Error::SparsityOutOfRange { s, n });
    }
    Ok(())
}

/// Indices of the `s` largest weights, ties broken by ascending index.
/// The result is sorted by decreasing weight.
pub fn top_s_indices(weights: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    // sort_by is stable, so equal weights keep ascending index order
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    idx.truncate(s.min(weights.len()));
    idx
}

pub(crate) fn top_sum(mut values: Vec<f64>, s: usize) -> f64 {
    let s = s.min(values.len());
    if s == 0 {
        return 0.0;
    }
    values.select_nth_unstable_by(s - 1, |a, b| b.total_cmp(a));
    values[..s].iter().sum()
}

/// `||x||_{s,1}`: the sum of the `s` largest magnitudes of `x`.
pub fn s_top_norm(x: &[f64], s: usize) -> Result<f64> {
    check_s(s, x.len())?;
    Ok(top_sum(x.iter().map(|v| v.abs()).collect(), s))
}

/// The gauge `Psi(x) = sum_{P+} max(-x_i, theta x_i) + sum_{Pn} |x_i|`.
pub fn psi(x: &[f64], theta: f64, pattern: &SignPattern) -> Result<f64> {
    pattern.check_len(x.len())?;
    Ok(x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if pattern.is_plus(i) {
                (-v).max(theta * v)
            } else {
                v.abs()
            }
        })
        .sum())
}

/// Weighted magnitudes `D[x]` whose top-`s` sum is `Phi_s(x)`.
pub(crate) fn phi_weights(x: &[f64], xi: f64, theta: f64, pattern: &SignPattern) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if pattern.is_plus(i) {
                (1.0 + theta * xi) * v.max(0.0)
            } else {
                (1.0 + xi) * v.abs()
            }
        })
        .collect()
}

/// `Phi_s(x) = ||D[x]||_{s,1}` with `D[x]_i = (1 + theta xi) max(x_i, 0)` on
/// `P+` and `(1 + xi)|x_i|` on `Pn`.
pub fn phi_s(x: &[f64], s: usize, xi: f64, theta: f64, pattern: &SignPattern) -> Result<f64> {
    pattern.check_len(x.len())?;
    check_s(s, x.len())?;
    validate_xi_theta(xi, theta)?;
    Ok(top_sum(phi_weights(x, xi, theta, pattern), s))
}

/// `mu(A) = max_{i != j} |A_i^T A_j| / A_i^T A_i`.
pub fn mutual_incoherence(a: &SenseMatrix) -> Result<f64> {
    let g = a.entries().tr_mul(a.entries());
    let n = a.cols();
    let mut mu: f64 = 0.0;
    for i in 0..n {
        let d = g[(i, i)];
        if d == 0.0 {
            return Err(Error::ZeroColumn(i));
        }
        for j in 0..n {
            if j != i {
                mu = mu.max(g[(i, j)].abs() / d);
            }
        }
    }
    Ok(mu)
}

/// Keeps the `s` largest-magnitude entries of `w` (ties to the lowest index)
/// and returns them with the l1 norm of what was dropped.
pub fn best_s_approx(w: &[f64], s: usize) -> Result<(Vec<f64>, f64)> {
    check_s(s, w.len())?;
    let mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    let mut ws = vec![0.0; w.len()];
    for i in top_s_indices(&mags, s) {
        ws[i] = w[i];
    }
    let tail = w.iter().zip(&ws).map(|(a, b)| (a - b).abs()).sum();
    Ok((ws, tail))
}
