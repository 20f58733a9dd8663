//! File formats: JSON matrices, CSV matrices, sign patterns and vectors.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_sign_restrictions, SenseMatrix, SignPattern};

/// On-disk matrix: row-major entries plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
    #[serde(default = "custom")]
    pub ensemble: String,
    #[serde(default)]
    pub seed: u64,
}

fn custom() -> String {
    "custom".into()
}

impl From<&SenseMatrix> for MatrixFile {
    fn from(a: &SenseMatrix) -> Self {
        MatrixFile {
            m: a.rows(),
            n: a.cols(),
            data: a.to_row_major(),
            ensemble: a.ensemble().to_string(),
            seed: a.seed(),
        }
    }
}

impl TryFrom<MatrixFile> for SenseMatrix {
    type Error = Error;

    fn try_from(f: MatrixFile) -> Result<Self> {
        let mut a = SenseMatrix::from_row_major(f.m, f.n, &f.data)?.with_provenance(f.ensemble, f.seed);
        a.detect_normalization();
        Ok(a)
    }
}

pub fn matrix_to_json(a: &SenseMatrix) -> Result<String> {
    Ok(serde_json::to_string(&MatrixFile::from(a))?)
}

pub fn matrix_from_json(text: &str) -> Result<SenseMatrix> {
    let f: MatrixFile = serde_json::from_str(text)?;
    f.try_into()
}

/// One row per line, comma-separated.
pub fn matrix_from_csv<R: Read>(reader: R) -> Result<SenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad matrix entry '{f}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    let mut a = SenseMatrix::from_rows(&rows)?;
    a.detect_normalization();
    Ok(a)
}

/// Loads a matrix, choosing CSV for `.csv` files and JSON otherwise.
pub fn load_matrix(path: &Path) -> Result<SenseMatrix> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        matrix_from_csv(fs::File::open(path)?)
    } else {
        matrix_from_json(&fs::read_to_string(path)?)
    }
}

pub fn save_matrix(path: &Path, a: &SenseMatrix) -> Result<()> {
    fs::write(path, matrix_to_json(a)?)?;
    Ok(())
}

/// On-disk sign restrictions in the original (unflipped) convention.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFile {
    #[serde(default)]
    pub p_plus: Vec<usize>,
    #[serde(default)]
    pub p_minus: Vec<usize>,
}

impl PatternFile {
    pub fn apply(&self, a: &SenseMatrix) -> Result<(SenseMatrix, SignPattern)> {
        normalize_sign_restrictions(a, &self.p_plus, &self.p_minus)
    }
}

pub fn load_pattern(path: &Path) -> Result<PatternFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// On-disk vector `{"data": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFile {
    pub data: Vec<f64>,
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let f: VectorFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if f.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("vector entries must be finite".into()));
    }
    Ok(f.data)
}

pub fn save_vector(path: &Path, data: &[f64]) -> Result<()> {
    fs::write(path, serde_json::to_string(&VectorFile { data: data.to_vec() })?)?;
    Ok(())
}

/// Serializes infinite values as `null` (JSON has no infinity).
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
