//! File formats shared between the library and the CLI.
//!
//! Matrices are plain CSV of reals, row-major, no header; masks are CSV of
//! 0/1 with the same shape. Reals are serialized with 17 significant digits
//! so doubles round-trip losslessly. Model files are JSON with fields
//! `{kind, n1, n2, k1, k2, M, z1, z2, q}`; labels are 1-based on disk.
//!
//! All writers go through a write-to-temp-then-rename step so readers never
//! see partial files.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BiclusterAssignment, BlockValueMatrix, ModelSpec};

/// 17 significant digits: enough to reproduce any f64 exactly on parse.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Atomically replaces `path` with `bytes` (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut buf = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        buf.push_str(&line.join(","));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?);
    }
    rows_to_array(rows, path)
}

pub fn write_mask_csv(path: &Path, mask: &Array2<bool>) -> Result<()> {
    let mut buf = String::new();
    for row in mask.rows() {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        buf.push_str(&line.join(","));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn read_mask_csv(path: &Path) -> Result<Array2<bool>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            match field {
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(Error::Parse(format!(
                        "{}: mask entry '{other}' is not 0/1",
                        path.display()
                    )))
                }
            }
        }
        rows.push(row);
    }
    rows_to_array(rows, path)
}

fn rows_to_array<T: Clone>(rows: Vec<Vec<T>>, path: &Path) -> Result<Array2<T>> {
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: empty file", path.display())));
    }
    let n2 = rows[0].len();
    if rows.iter().any(|r| r.len() != n2) {
        return Err(Error::Parse(format!("{}: ragged rows", path.display())));
    }
    let n1 = rows.len();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n1, n2), flat)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// On-disk model description. `z1`/`z2` are 1-based; for symmetric and SBM
/// kinds they coincide and `M` doubles as `rho`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub z1: Vec<usize>,
    pub z2: Vec<usize>,
    pub q: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn new(spec: &ModelSpec, assignment: &BiclusterAssignment, q: &BlockValueMatrix) -> Self {
        let (n1, n2) = spec.dims();
        let (k1, k2) = spec.clusters();
        let kind = match spec {
            ModelSpec::Asymmetric { .. } => "asymmetric",
            ModelSpec::Symmetric { .. } => "symmetric",
            ModelSpec::Sbm { .. } => "sbm",
        };
        Self {
            kind: kind.to_string(),
            n1,
            n2,
            k1,
            k2,
            m: spec.bound(),
            z1: assignment.z1().iter().map(|&l| l + 1).collect(),
            z2: assignment.z2().iter().map(|&l| l + 1).collect(),
            q: q.q().rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn to_parts(&self) -> Result<(ModelSpec, BiclusterAssignment, BlockValueMatrix)> {
        let spec = match self.kind.as_str() {
            "asymmetric" => ModelSpec::Asymmetric {
                n1: self.n1,
                n2: self.n2,
                k1: self.k1,
                k2: self.k2,
                bound: self.m,
            },
            "symmetric" => ModelSpec::Symmetric { n: self.n1, k: self.k1, bound: self.m },
            "sbm" => ModelSpec::Sbm { n: self.n1, k: self.k1, rho: self.m },
            other => return Err(Error::Parse(format!("unknown model kind '{other}'"))),
        };
        spec.validate()?;
        let to_zero_based = |z: &[usize], side: &str| -> Result<Vec<usize>> {
            z.iter()
                .map(|&l| {
                    l.checked_sub(1)
                        .ok_or_else(|| Error::Parse(format!("{side} label 0 (labels are 1-based)")))
                })
                .collect()
        };
        let z1 = to_zero_based(&self.z1, "z1")?;
        let z2 = to_zero_based(&self.z2, "z2")?;
        let assignment = if spec.is_symmetric() {
            if z1 != z2 {
                return Err(Error::Parse("symmetric model with z1 != z2".into()));
            }
            BiclusterAssignment::symmetric(z1, self.k1)?
        } else {
            BiclusterAssignment::asymmetric(z1, z2, self.k1, self.k2)?
        };
        let rows = self.q.len();
        let cols = self.q.first().map_or(0, Vec::len);
        if rows != self.k1 || cols != self.k2 || self.q.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse(format!(
                "q must be {}x{} with rectangular rows",
                self.k1, self.k2
            )));
        }
        let flat: Vec<f64> = self.q.iter().flatten().copied().collect();
        let q = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok((spec, assignment, BlockValueMatrix::new(q, self.m)?))
    }
}

/// `truth.json` written by `generate`: the model plus the realized mean
/// matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    #[serde(flatten)]
    pub model: ModelFile,
    pub theta: Vec<Vec<f64>>,
}

/// `fit.json` written by `estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub objective: f64,
    pub iterations: usize,
    pub k1: usize,
    pub k2: usize,
    pub labels: Labels,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Labels {
    pub z1: Vec<usize>,
    pub z2: Vec<usize>,
}

/// `adapt.json` written by `adapt`: the per-half selected cluster numbers,
/// the observation rate used, and the full validation-loss grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptFile {
    pub k_hat_delta: (usize, usize),
    pub k_hat_deltac: (usize, usize),
    pub p_hat: f64,
    pub validation_losses: ValidationLosses,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationLosses {
    pub delta: Vec<crate::adapt::SelectionPoint>,
    pub deltac: Vec<crate::adapt::SelectionPoint>,
}

pub fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}
