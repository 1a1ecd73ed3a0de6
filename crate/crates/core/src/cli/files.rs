//! On-disk formats: system files in, result files out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interconnect::{BlockPerturbation, CompositeSystem, ValidationReport, NO_BLOCKS};
use crate::linalg::{DenseMatrix, C64};
use crate::radius::{RadiusReport, SweepOptions};
use crate::system::StateSpaceBlock;
use crate::verify::MonteCarloReport;
use crate::worstcase::WorstCaseCertificate;

pub const SYSTEM_FILE_VERSION: &str = "1";

/// A matrix entry: a plain number, or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> C64 {
        match e {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Entry {
    fn from(z: C64) -> Entry {
        if z.im == 0.0 {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRecord {
    pub label: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Entry>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<Entry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub version: String,
    pub blocks: Vec<BlockRecord>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<SweepOptions>,
}

fn matrix_from_rows(rows: &[Vec<Entry>], what: &str) -> Result<DenseMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Input(format!("{what} must be a non-empty nested array")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Input(format!(
            "{what} row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    let flat: Vec<C64> = rows.iter().flatten().map(|&e| e.into()).collect();
    DenseMatrix::from_row_major(rows.len(), ncols, &flat).map_err(|e| Error::Input(format!("{what}: {e}")))
}

fn matrix_to_rows(m: &DenseMatrix) -> Vec<Vec<Entry>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j).into()).collect())
        .collect()
}

fn coupling_from_rows(rows: &[Vec<f64>]) -> Result<DenseMatrix> {
    let n = rows.len();
    if let Some(i) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Input(format!(
            "E must be square: row {i} has {} entries, expected {n}",
            rows[i].len()
        )));
    }
    DenseMatrix::from_real_rows(rows).map_err(|e| Error::Input(format!("E: {e}")))
}

impl SystemFile {
    pub fn from_system(sys: &CompositeSystem, options: Option<SweepOptions>) -> Self {
        SystemFile {
            version: SYSTEM_FILE_VERSION.to_string(),
            blocks: sys
                .blocks()
                .iter()
                .map(|b| BlockRecord {
                    label: b.label().to_string(),
                    a: matrix_to_rows(b.a()),
                    b: matrix_to_rows(b.b()),
                    c: matrix_to_rows(b.c()),
                })
                .collect(),
            e: sys.coupling().to_rows(),
            options,
        }
    }

    /// Builds and validates the composite system.
    pub fn to_system(&self) -> Result<CompositeSystem> {
        if self.version != SYSTEM_FILE_VERSION {
            return Err(Error::Input(format!(
                "unsupported system file version {:?} (expected {SYSTEM_FILE_VERSION:?})",
                self.version
            )));
        }
        if self.blocks.is_empty() {
            return Err(Error::Validation(ValidationReport {
                violations: vec![NO_BLOCKS.to_string()],
            }));
        }
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let name = |m: &str| format!("blocks[{k}].{m}");
                StateSpaceBlock::new(
                    r.label.clone(),
                    matrix_from_rows(&r.a, &name("A"))?,
                    matrix_from_rows(&r.b, &name("B"))?,
                    matrix_from_rows(&r.c, &name("C"))?,
                )
                .map_err(|e| Error::Input(format!("blocks[{k}] ({}): {e}", r.label)))
            })
            .collect::<Result<Vec<_>>>()?;
        CompositeSystem::new(blocks, coupling_from_rows(&self.e)?)
    }

    /// Parses JSON text; syntax and schema errors name the field path and
    /// the line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Input(format!(
                "malformed system file at `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system files always serialize")
    }
}

/// `[re, im]`.
pub type ComplexPair = [f64; 2];

fn pair(z: C64) -> ComplexPair {
    [z.re, z.im]
}

fn pair_matrix(m: &DenseMatrix) -> Vec<Vec<ComplexPair>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| pair(m.get(i, j))).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub omega0: f64,
    pub lambda: f64,
    pub perron_vector: Vec<f64>,
    /// `delta[i][j]` is the `m_i × p_j` block, row-major.
    pub delta: Vec<Vec<Vec<Vec<ComplexPair>>>>,
    pub norm_2inf: f64,
    pub norm_op: f64,
    pub target_radius: f64,
    pub closed_loop_eig: ComplexPair,
    pub eig_distance: f64,
    pub eig_residual: f64,
    pub eigvec: Vec<ComplexPair>,
    pub predicted_eigvec: Option<Vec<ComplexPair>>,
    pub predicted_residual: Option<f64>,
    pub closed_loop_norm: f64,
    pub closed_loop_abscissa: f64,
    pub certified: bool,
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub overshoot: Option<OvershootRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvershootRecord {
    pub factor: f64,
    pub abscissa: f64,
}

pub fn delta_pairs(delta: &BlockPerturbation) -> Vec<Vec<Vec<Vec<ComplexPair>>>> {
    delta.rows().iter().map(|row| row.iter().map(pair_matrix).collect()).collect()
}

impl CertificateRecord {
    pub fn new(c: &WorstCaseCertificate, overshoot: Option<OvershootRecord>) -> Self {
        CertificateRecord {
            omega0: c.omega0,
            lambda: c.lambda,
            perron_vector: c.perron_vector.clone(),
            delta: delta_pairs(&c.delta),
            norm_2inf: c.norm_2inf,
            norm_op: c.norm_op,
            target_radius: c.target_radius,
            closed_loop_eig: pair(c.closed_loop_eig),
            eig_distance: c.eig_distance,
            eig_residual: c.eig_residual,
            eigvec: c.eigvec.iter().copied().map(pair).collect(),
            predicted_eigvec: c.predicted_eigvec.as_ref().map(|v| v.iter().copied().map(pair).collect()),
            predicted_residual: c.predicted_residual,
            closed_loop_norm: c.closed_loop_norm,
            closed_loop_abscissa: c.closed_loop_abscissa,
            certified: c.certified,
            failure: c.failure.clone(),
            overshoot,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub input_path: String,
    pub input_sha256: String,
    pub options: SweepOptions,
    pub radius: RadiusReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub worst_case: Option<CertificateRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub monte_carlo: Option<MonteCarloReport>,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
