//! Batch sweeps over matrix ensembles and sign patterns, written as CSV rows
//! in the column order of the comparison table.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use log::{info, warn};
use semigood::cert_lower::{max_certified_s_from, unsigned_max_s, LowerBoundOptions};
use semigood::cert_upper::{upper_bound_s, UpperBoundOptions};
use semigood::ensembles::{generate, EnsembleSpec};
use semigood::io::load_matrix;
use semigood::{CertParams, Error, ResidualNorm, Result, SenseMatrix, SignPattern};
use serde::{Deserialize, Serialize};

use crate::pattern::PatternRecipe;

pub const RESULTS_FILE: &str = "results.csv";

pub const CSV_HEADER: [&str; 16] = [
    "ensemble",
    "m",
    "n",
    "seed",
    "pattern",
    "s_mu",
    "s_unsigned",
    "s_signed",
    "s_ub_unsigned",
    "s_ub_signed",
    "t_mu",
    "t_unsigned",
    "t_signed",
    "t_ub_unsigned",
    "t_ub_signed",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertSection {
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub residual_norm: ResidualNorm,
    /// Highest level tried by the lower-bound search.
    #[serde(default)]
    pub max_s: Option<usize>,
    /// Highest level tried by the upper-bound search.
    #[serde(default)]
    pub upper_max_s: Option<usize>,
}

fn default_xi() -> f64 {
    CertParams::DEFAULT_XI
}

fn default_theta() -> f64 {
    CertParams::DEFAULT_THETA
}

fn default_restarts() -> usize {
    20
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for CertSection {
    fn default() -> Self {
        CertSection {
            xi: default_xi(),
            theta: default_theta(),
            restarts: default_restarts(),
            tol: default_tol(),
            residual_norm: ResidualNorm::default(),
            max_s: None,
            upper_max_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub ensembles: Vec<EnsembleSpec>,
    /// Fixed matrices loaded from files, one instance each.
    #[serde(default)]
    pub matrices: Vec<PathBuf>,
    #[serde(default = "default_patterns")]
    pub patterns: Vec<PatternRecipe>,
    #[serde(default)]
    pub params: CertSection,
    /// Base seeds; each is expanded to `repetitions` consecutive seeds.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub upper_bounds: bool,
    #[serde(default = "one")]
    pub jobs: usize,
}

fn default_patterns() -> Vec<PatternRecipe> {
    vec![PatternRecipe::unsigned(), PatternRecipe::nonnegative()]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        CertParams::new(1, p.xi, p.theta).validate(usize::MAX)?;
        if p.xi <= 0.0 {
            return Err(Error::InvalidParameter("xi must be positive".into()));
        }
        if p.restarts == 0 || !(p.tol > 0.0) {
            return Err(Error::InvalidParameter("need restarts >= 1 and tol > 0".into()));
        }
        if self.repetitions == 0 || self.jobs == 0 || self.seeds.is_empty() {
            return Err(Error::InvalidParameter(
                "repetitions, jobs and the seed list must be nonempty".into(),
            ));
        }
        if self.patterns.is_empty() {
            return Err(Error::InvalidParameter("no sign patterns configured".into()));
        }
        for r in &self.patterns {
            r.validate()?;
        }
        for e in &self.ensembles {
            e.validate()?;
        }
        if self.ensembles.is_empty() && self.matrices.is_empty() {
            return Err(Error::InvalidParameter("no ensembles or matrices configured".into()));
        }
        Ok(())
    }

    /// Instances in sweep order.
    pub fn instances(&self) -> Vec<Instance> {
        let mut out = Vec::new();
        for spec in &self.ensembles {
            let mut seen = HashSet::new();
            let seeds: Vec<u64> = if spec.kind == semigood::ensembles::EnsembleKind::Trig {
                vec![0]
            } else {
                self.seeds
                    .iter()
                    .flat_map(|&b| (0..self.repetitions as u64).map(move |r| b + r))
                    .collect()
            };
            for seed in seeds {
                if seen.insert(seed) {
                    out.push(Instance::Ensemble(EnsembleSpec { seed, ..*spec }));
                }
            }
        }
        out.extend(self.matrices.iter().cloned().map(Instance::File));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Ensemble(EnsembleSpec),
    File(PathBuf),
}

impl Instance {
    fn load(&self) -> Result<SenseMatrix> {
        match self {
            Instance::Ensemble(spec) => generate(spec),
            Instance::File(path) => load_matrix(path),
        }
    }

    fn key_parts(&self) -> (String, usize, usize, u64) {
        match self {
            Instance::Ensemble(s) => (s.kind.name().to_string(), s.m, s.n, s.seed),
            Instance::File(p) => (p.display().to_string(), 0, 0, 0),
        }
    }

    /// Whether `row` was produced by this instance. Rows of file instances
    /// carry the seed and shape read from the file, so only the path is compared.
    fn produced(&self, row: &ResultRow) -> bool {
        let (label, m, n, seed) = self.key_parts();
        match self {
            Instance::Ensemble(_) => row.ensemble == label && (row.m, row.n, row.seed) == (m, n, seed),
            Instance::File(_) => row.ensemble == label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub ensemble: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub pattern: String,
    pub s_mu: Option<usize>,
    pub s_unsigned: Option<usize>,
    pub s_signed: Option<usize>,
    pub s_ub_unsigned: Option<usize>,
    pub s_ub_signed: Option<usize>,
    pub t_mu: f64,
    pub t_unsigned: f64,
    pub t_signed: f64,
    pub t_ub_unsigned: f64,
    pub t_ub_signed: f64,
    pub error: String,
}

impl ResultRow {
    fn empty(ensemble: String, m: usize, n: usize, seed: u64, pattern: String) -> Self {
        ResultRow {
            ensemble,
            m,
            n,
            seed,
            pattern,
            s_mu: None,
            s_unsigned: None,
            s_signed: None,
            s_ub_unsigned: None,
            s_ub_signed: None,
            t_mu: 0.0,
            t_unsigned: 0.0,
            t_signed: 0.0,
            t_ub_unsigned: 0.0,
            t_ub_signed: 0.0,
            error: String::new(),
        }
    }

    fn add_error(&mut self, e: &Error) {
        if !self.error.is_empty() {
            self.error.push_str("; ");
        }
        self.error.push_str(&e.to_string());
    }

    /// Checks the row against the ordering its bounds must obey.
    pub fn consistency_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(mu), Some(sg)) = (self.s_mu, self.s_signed) {
            if mu > sg {
                out.push(format!("s_mu {mu} exceeds s_signed {sg}"));
            }
        }
        if let (Some(lb), Some(ub)) = (self.s_signed, self.s_ub_signed) {
            if lb >= ub {
                out.push(format!("s_signed {lb} not below s_ub_signed {ub}"));
            }
        }
        if let (Some(lb), Some(ub)) = (self.s_unsigned, self.s_ub_unsigned) {
            if lb >= ub {
                out.push(format!("s_unsigned {lb} not below s_ub_unsigned {ub}"));
            }
        }
        out
    }
}

fn rows_for(cfg: &ExperimentConfig, inst: &Instance) -> Vec<ResultRow> {
    let (label, m0, n0, seed0) = inst.key_parts();
    let mut rows: Vec<ResultRow> = cfg
        .patterns
        .iter()
        .map(|p| ResultRow::empty(label.clone(), m0, n0, seed0, p.label()))
        .collect();
    let a = match inst.load() {
        Ok(a) => a,
        Err(e) => {
            rows.iter_mut().for_each(|r| r.add_error(&e));
            return rows;
        }
    };
    for r in rows.iter_mut() {
        r.m = a.rows();
        r.n = a.cols();
        r.seed = a.seed();
    }
    let p = &cfg.params;
    let lower_opts = LowerBoundOptions {
        xi: p.xi,
        theta: p.theta,
        residual_norm: p.residual_norm,
        max_s: p.max_s,
    };
    let upper_opts = UpperBoundOptions {
        xi: p.xi,
        theta: p.theta,
        restarts: p.restarts,
        tol: p.tol,
        seed: a.seed(),
        max_s: p.upper_max_s,
    };

    let clock = Instant::now();
    let unsigned = match unsigned_max_s(&a) {
        Ok(u) => u,
        Err(e) => {
            let e = e.in_stage("unsigned");
            rows.iter_mut().for_each(|r| r.add_error(&e));
            return rows;
        }
    };
    let t_unsigned = clock.elapsed().as_secs_f64();

    let (mut s_ub_unsigned, mut t_ub_unsigned) = (None, 0.0);
    if cfg.upper_bounds {
        match upper_bound_s(&a, &SignPattern::unsigned(a.cols()), unsigned.s + 1, &upper_opts) {
            Ok(out) => {
                s_ub_unsigned = out.s_ub;
                t_ub_unsigned = out.seconds;
            }
            Err(e) => {
                let e = e.in_stage("upper unsigned");
                rows.iter_mut().for_each(|r| r.add_error(&e));
            }
        }
    }

    for (row, recipe) in rows.iter_mut().zip(&cfg.patterns) {
        row.s_unsigned = Some(unsigned.s);
        row.t_unsigned = t_unsigned;
        row.s_ub_unsigned = s_ub_unsigned;
        row.t_ub_unsigned = t_ub_unsigned;
        let (an, pattern) = match recipe.apply(&a) {
            Ok(v) => v,
            Err(e) => {
                row.add_error(&e);
                continue;
            }
        };
        let report = match max_certified_s_from(&an, &pattern, &lower_opts, None, &unsigned) {
            Ok(r) => r,
            Err(e) => {
                row.add_error(&e);
                continue;
            }
        };
        row.s_mu = Some(report.s_mu);
        row.s_signed = Some(report.s_signed);
        row.t_mu = report.times.mu;
        row.t_signed = report.times.warm + report.times.signed;
        if cfg.upper_bounds {
            match upper_bound_s(&an, &pattern, report.s_signed + 1, &upper_opts) {
                Ok(out) => {
                    row.s_ub_signed = out.s_ub;
                    row.t_ub_signed = out.seconds;
                }
                Err(e) => row.add_error(&e.in_stage("upper")),
            }
        }
        for v in row.consistency_violations() {
            warn!("{} seed {} {}: {v}", row.ensemble, row.seed, row.pattern);
        }
    }
    rows
}

fn read_existing(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let buf = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    // one write per instance keeps interrupted runs resumable
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

/// Runs the sweep, appending rows to `<output_dir>/results.csv`. Instances
/// whose rows are already present are skipped, so an interrupted run resumes.
/// Returns every row of the sweep in configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(RESULTS_FILE);
    let existing = read_existing(&path)?;
    let instances = cfg.instances();
    let labels: Vec<String> = cfg.patterns.iter().map(PatternRecipe::label).collect();
    let previous = |inst: &Instance| -> Vec<ResultRow> {
        existing
            .iter()
            .filter(|r| inst.produced(r) && labels.contains(&r.pattern))
            .cloned()
            .collect()
    };
    let pending: Vec<usize> = (0..instances.len())
        .filter(|&k| {
            let have: HashSet<String> = previous(&instances[k]).into_iter().map(|r| r.pattern).collect();
            labels.iter().any(|p| !have.contains(p))
        })
        .collect();
    info!("{} instances, {} pending", instances.len(), pending.len());

    let next = AtomicUsize::new(0);
    let mut fresh: Vec<(usize, Vec<ResultRow>)> = Vec::new();
    let (tx, rx) = mpsc::channel::<(usize, Vec<ResultRow>)>();
    let mut write_err = None;
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(pending.len().max(1)) {
            let tx = tx.clone();
            let (next, pending, instances) = (&next, &pending, &instances);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = pending.get(k) else { break };
                let rows = rows_for(cfg, &instances[idx]);
                if tx.send((idx, rows)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (idx, rows) in rx {
            if write_err.is_none() {
                if let Err(e) = append_rows(&path, &rows) {
                    write_err = Some(e);
                }
            }
            fresh.push((idx, rows));
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    fresh.sort_by_key(|(idx, _)| *idx);

    let mut out = Vec::new();
    let fresh_keys: HashSet<usize> = fresh.iter().map(|(k, _)| *k).collect();
    let mut fresh_iter = fresh.into_iter();
    for (k, inst) in instances.iter().enumerate() {
        if fresh_keys.contains(&k) {
            out.extend(fresh_iter.next().map(|(_, r)| r).unwrap_or_default());
        } else {
            out.extend(previous(inst));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seeds = [1]
            repetitions = 2
            [[ensembles]]
            kind = "gaussian"
            m = 4
            n = 8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.params.xi, 0.9999);
        assert_eq!(cfg.params.restarts, 20);
        assert_eq!(cfg.instances().len(), 2);
        assert!(ExperimentConfig::from_toml("[params]\nxi = 1.5\n[[ensembles]]\nkind='gaussian'\nm=2\nn=4").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("").is_err());
    }

    #[test]
    fn trig_instances_ignore_seeds() {
        let cfg = ExperimentConfig::from_toml(
            "seeds = [1, 5]\n[[ensembles]]\nkind = 'trig'\nm = 5\nn = 32\nd = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.instances().len(), 1);
    }
}
