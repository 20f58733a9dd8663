//! Seeded sensing-matrix families.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SenseMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Rademacher,
    Gaussian,
    FourierSub,
    HadamardSub,
    Trig,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Rademacher => "rademacher",
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::FourierSub => "fourier-sub",
            EnsembleKind::HadamardSub => "hadamard-sub",
            EnsembleKind::Trig => "trig",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rademacher" => Ok(EnsembleKind::Rademacher),
            "gaussian" => Ok(EnsembleKind::Gaussian),
            "fourier-sub" | "fourier" => Ok(EnsembleKind::FourierSub),
            "hadamard-sub" | "hadamard" => Ok(EnsembleKind::HadamardSub),
            "trig" => Ok(EnsembleKind::Trig),
            other => Err(Error::InvalidEnsemble(format!("unknown kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Polynomial degree, TRIG only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> Self {
        EnsembleSpec {
            kind,
            m,
            n,
            seed,
            d: None,
        }
    }

    /// The `(2d+1) x n` trigonometric fixture.
    pub fn trig(d: usize, n: usize) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Trig,
            m: 2 * d + 1,
            n,
            seed: 0,
            d: Some(d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEnsemble(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("dimensions {}x{} must be positive", self.m, self.n));
        }
        match self.kind {
            EnsembleKind::Trig => match self.d {
                Some(d) if self.m == 2 * d + 1 => Ok(()),
                Some(d) => bad(format!("trig with d = {d} needs m = {}", 2 * d + 1)),
                None => bad("trig requires the degree d".into()),
            },
            EnsembleKind::HadamardSub if !self.n.is_power_of_two() => {
                bad(format!("hadamard needs n a power of two, got {}", self.n))
            }
            EnsembleKind::HadamardSub | EnsembleKind::FourierSub if self.m > self.n => {
                bad(format!("cannot draw {} distinct rows out of {}", self.m, self.n))
            }
            _ => Ok(()),
        }
    }
}

/// Full `n x n` Sylvester-Hadamard matrix, `n` a power of two.
pub fn hadamard(n: usize) -> Result<DMatrix<f64>> {
    if !n.is_power_of_two() {
        return Err(Error::InvalidEnsemble(format!("n = {n} is not a power of two")));
    }
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    Ok(h)
}

/// `cos(2 pi k / n)` and `sin(2 pi k / n)`, exact at multiples of a quarter turn.
fn grid_cos_sin(k: usize, n: usize) -> (f64, f64) {
    let k = k % n;
    if (4 * k) % n == 0 {
        return match 4 * k / n {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
    }
    let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    (angle.cos(), angle.sin())
}

/// Row `r` of the real trigonometric system evaluated at `phi_j = 2 pi j / n`:
/// row 0 is constant, rows `2i-1` and `2i` are `cos(i phi)` and `sin(i phi)`.
pub fn trig_value(r: usize, j: usize, n: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let freq = r.div_ceil(2);
    let (c, s) = grid_cos_sin(freq * j, n);
    if r % 2 == 1 {
        c
    } else {
        s
    }
}

/// First `m` entries of a seeded Fisher-Yates shuffle of `0..n`, sorted.
fn sample_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

const MAX_REDRAWS: usize = 100;

fn normalized_rows_of(
    rng: &mut ChaCha8Rng,
    spec: &EnsembleSpec,
    entry: impl Fn(usize, usize) -> f64,
) -> Result<SenseMatrix> {
    // a row subset can leave a column identically zero (e.g. only sine rows
    // at phi = 0); such draws are rejected and redrawn from the same stream
    for _ in 0..MAX_REDRAWS {
        let rows = sample_rows(rng, spec.n, spec.m);
        let mat = DMatrix::from_fn(spec.m, spec.n, |i, j| entry(rows[i], j));
        let mut a = SenseMatrix::new(mat);
        match a.normalize_columns() {
            Ok(()) => return Ok(a),
            Err(Error::ZeroColumn(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidEnsemble(format!(
        "no row draw without zero columns after {MAX_REDRAWS} attempts"
    )))
}

pub fn generate(spec: &EnsembleSpec) -> Result<SenseMatrix> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::STREAM_ENSEMBLE);
    let (m, n) = (spec.m, spec.n);
    let a = match spec.kind {
        EnsembleKind::Rademacher => {
            let mut a = SenseMatrix::new(DMatrix::from_fn(m, n, |_, _| {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            }));
            a.normalize_columns()?;
            a
        }
        EnsembleKind::Gaussian => {
            let mut a = SenseMatrix::new(DMatrix::from_fn(m, n, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            }));
            a.normalize_columns()?;
            a
        }
        EnsembleKind::HadamardSub => {
            let h = hadamard(n)?;
            normalized_rows_of(&mut rng, spec, |r, j| h[(r, j)])?
        }
        EnsembleKind::FourierSub => normalized_rows_of(&mut rng, spec, |r, j| trig_value(r, j, n))?,
        EnsembleKind::Trig => SenseMatrix::new(DMatrix::from_fn(m, n, |r, j| trig_value(r, j, n))),
    };
    Ok(a.with_provenance(spec.kind.name(), spec.seed))
}
