//! Interconnected systems: the diagonal composite, the strength matrix `E`,
//! block perturbations `Δ` and the closed loop `A + B (Δ∘E) C`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, C64};
use crate::system::StateSpaceBlock;

/// Real nonnegative square matrix of coupling strengths; `e_ij` scales the
/// connection from the output of block `j` to the input of block `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterconnectionMatrix(DenseMatrix);

impl InterconnectionMatrix {
    pub fn new(e: DenseMatrix) -> Result<Self> {
        let issues = coupling_issues(&e);
        if let Some(first) = issues.into_iter().next() {
            return Err(Error::Input(first));
        }
        Ok(InterconnectionMatrix(e))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(DenseMatrix::from_real_rows(rows)?)
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j).re
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn max_entry(&self) -> f64 {
        self.0.as_matrix().iter().map(|z| z.re).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::input(format!("scale factor must be nonnegative, got {c}")));
        }
        Ok(InterconnectionMatrix(self.0.scaled(c)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.real_rows()
    }
}

fn coupling_issues(e: &DenseMatrix) -> Vec<String> {
    let mut issues = Vec::new();
    if !e.is_square() {
        issues.push(format!("E must be square, got {}×{}", e.rows(), e.cols()));
    }
    for i in 0..e.rows() {
        for j in 0..e.cols() {
            let z = e.get(i, j);
            if z.im != 0.0 {
                issues.push(format!("E must be real: E[{i}][{j}] = {z}"));
            } else if z.re < 0.0 {
                issues.push(format!("E must be nonnegative: E[{i}][{j}] = {}", z.re));
            }
        }
    }
    issues
}

/// Itemized result of [`validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Checks `N ≥ 1`, that `E` is a real nonnegative `N×N` matrix, and that
/// every block is exponentially stable.
pub(crate) const NO_BLOCKS: &str = "N ≥ 1 required: the system has no blocks";

pub fn validate(blocks: &[StateSpaceBlock], e: &DenseMatrix) -> ValidationReport {
    let mut violations = Vec::new();
    if blocks.is_empty() {
        violations.push(NO_BLOCKS.to_string());
    }
    violations.extend(coupling_issues(e));
    if !blocks.is_empty() && (e.rows() != blocks.len() || e.cols() != blocks.len()) {
        violations.push(format!(
            "E must be {n}×{n} for {n} blocks, got {}×{}",
            e.rows(),
            e.cols(),
            n = blocks.len()
        ));
    }
    for (k, blk) in blocks.iter().enumerate() {
        match blk.spectral_abscissa() {
            Ok(x) if x < 0.0 => {}
            Ok(x) => violations.push(format!(
                "block {k} not exponentially stable (`{}`, spectral abscissa {x:e})",
                blk.label()
            )),
            Err(err) => violations.push(format!("block {k}: {err}")),
        }
    }
    ValidationReport { violations }
}

/// The diagonal composite `diag(Σ_1, …, Σ_N)` with its coupling matrix.
/// Only valid systems can be constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSystem {
    blocks: Vec<StateSpaceBlock>,
    coupling: InterconnectionMatrix,
}

impl CompositeSystem {
    pub fn new(blocks: Vec<StateSpaceBlock>, e: DenseMatrix) -> Result<Self> {
        let report = validate(&blocks, &e);
        if !report.is_valid() {
            return Err(Error::Validation(report));
        }
        Ok(CompositeSystem {
            blocks,
            coupling: InterconnectionMatrix(e),
        })
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.blocks, self.coupling.as_matrix())
    }

    pub fn blocks(&self) -> &[StateSpaceBlock] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &StateSpaceBlock {
        &self.blocks[k]
    }

    pub fn coupling(&self) -> &InterconnectionMatrix {
        &self.coupling
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.blocks.iter().all(StateSpaceBlock::is_real)
    }

    pub fn total_states(&self) -> usize {
        self.blocks.iter().map(StateSpaceBlock::states).sum()
    }

    /// Same blocks, different coupling.
    pub fn with_coupling(&self, e: InterconnectionMatrix) -> Result<Self> {
        Self::new(self.blocks.clone(), e.0)
    }

    pub fn with_scaled_coupling(&self, c: f64) -> Result<Self> {
        self.with_coupling(self.coupling.scaled(c)?)
    }

    fn state_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for b in &self.blocks {
            acc += b.states();
            offsets.push(acc);
        }
        offsets
    }
}

/// Static block perturbation; block `(i, j)` maps the outputs of block `j`
/// (dimension `p_j`) to the inputs of block `i` (dimension `m_i`).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPerturbation {
    blocks: Vec<Vec<DenseMatrix>>,
}

impl BlockPerturbation {
    /// Checks the shape grid against `sys`.
    pub fn new(sys: &CompositeSystem, blocks: Vec<Vec<DenseMatrix>>) -> Result<Self> {
        let n = sys.len();
        if blocks.len() != n || blocks.iter().any(|row| row.len() != n) {
            return Err(Error::input(format!("perturbation must be a {n}×{n} grid of blocks")));
        }
        for (i, row) in blocks.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                let (m_i, p_j) = (sys.block(i).inputs(), sys.block(j).outputs());
                if d.rows() != m_i || d.cols() != p_j {
                    return Err(Error::input(format!(
                        "Δ[{i}][{j}] must be {m_i}×{p_j}, got {}×{}",
                        d.rows(),
                        d.cols()
                    )));
                }
            }
        }
        Ok(BlockPerturbation { blocks })
    }

    pub fn zeros(sys: &CompositeSystem) -> Self {
        Self::from_fn(sys, |_, _, m, p| DenseMatrix::zeros(m, p))
    }

    /// `f(i, j, m_i, p_j)` must return an `m_i × p_j` block.
    pub fn from_fn(sys: &CompositeSystem, mut f: impl FnMut(usize, usize, usize, usize) -> DenseMatrix) -> Self {
        let n = sys.len();
        let blocks = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = f(i, j, sys.block(i).inputs(), sys.block(j).outputs());
                        assert_eq!((d.rows(), d.cols()), (sys.block(i).inputs(), sys.block(j).outputs()));
                        d
                    })
                    .collect()
            })
            .collect();
        BlockPerturbation { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, i: usize, j: usize) -> &DenseMatrix {
        &self.blocks[i][j]
    }

    pub fn rows(&self) -> &[Vec<DenseMatrix>] {
        &self.blocks
    }

    pub fn scaled(&self, factor: f64) -> Self {
        BlockPerturbation {
            blocks: self
                .blocks
                .iter()
                .map(|row| row.iter().map(|d| d.scaled(factor)).collect())
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().flatten().all(DenseMatrix::is_zero)
    }

    /// Entrywise sum; both operands must share a shape grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::input("perturbation grids differ in size"));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(r1, r2)| {
                r1.iter()
                    .zip(r2)
                    .map(|(a, b)| {
                        if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
                            return Err(Error::input("perturbation block shapes differ"));
                        }
                        DenseMatrix::new(a.as_matrix() + b.as_matrix())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockPerturbation { blocks })
    }
}

/// `Δ∘E`: block `(i, j)` scaled by `e_ij`.
pub fn apply_hadamard(delta: &BlockPerturbation, e: &InterconnectionMatrix) -> Result<BlockPerturbation> {
    if delta.len() != e.size() {
        return Err(Error::input(format!(
            "Δ has {} block rows but E is {}×{}",
            delta.len(),
            e.size(),
            e.size()
        )));
    }
    let blocks = delta
        .blocks
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, d)| d.scaled(e.entry(i, j))).collect())
        .collect();
    Ok(BlockPerturbation { blocks })
}

/// `‖Δ‖₂,∞ = max_i (Σ_j ‖Δ_ij‖²)^{1/2}`.
pub fn delta_norm_2inf(delta: &BlockPerturbation) -> f64 {
    delta
        .blocks
        .iter()
        .map(|row| row.iter().map(|d| linalg::operator_norm(d).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Operator norm from outputs (ℓ²-sum norm) to inputs (max norm): the
/// largest operator norm of a block row `[Δ_i1 … Δ_iN]`.
pub fn delta_opnorm(delta: &BlockPerturbation) -> f64 {
    delta
        .blocks
        .iter()
        .map(|row| {
            let m = row[0].rows();
            let width: usize = row.iter().map(DenseMatrix::cols).sum();
            let mut cat = DMatrix::<C64>::zeros(m, width);
            let mut col = 0;
            for d in row {
                cat.view_mut((0, col), (m, d.cols())).copy_from(d.as_matrix());
                col += d.cols();
            }
            linalg::operator_norm_raw(&cat)
        })
        .fold(0.0, f64::max)
}

fn check_shape(sys: &CompositeSystem, delta: &BlockPerturbation) -> Result<()> {
    let n = sys.len();
    if delta.len() != n || delta.blocks.iter().any(|row| row.len() != n) {
        return Err(Error::input(format!("perturbation must be a {n}×{n} grid of blocks")));
    }
    for i in 0..n {
        for j in 0..n {
            let d = delta.block(i, j);
            let (m_i, p_j) = (sys.block(i).inputs(), sys.block(j).outputs());
            if (d.rows(), d.cols()) != (m_i, p_j) {
                return Err(Error::input(format!(
                    "Δ[{i}][{j}] must be {m_i}×{p_j}, got {}×{}",
                    d.rows(),
                    d.cols()
                )));
            }
        }
    }
    Ok(())
}

/// `A + B (Δ∘E) C`; block `(i, j)` is `A_i δ_ij + e_ij B_i Δ_ij C_j`.
pub fn closed_loop_matrix(sys: &CompositeSystem, delta: &BlockPerturbation) -> Result<DenseMatrix> {
    DenseMatrix::new(closed_loop_raw(sys, delta)?)
}

pub(crate) fn closed_loop_raw(sys: &CompositeSystem, delta: &BlockPerturbation) -> Result<DMatrix<C64>> {
    check_shape(sys, delta)?;
    let offsets = sys.state_offsets();
    let total = offsets[sys.len()];
    let mut acl = DMatrix::<C64>::zeros(total, total);
    for (i, bi) in sys.blocks().iter().enumerate() {
        acl.view_mut((offsets[i], offsets[i]), (bi.states(), bi.states()))
            .copy_from(bi.a().as_matrix());
    }
    for (i, bi) in sys.blocks().iter().enumerate() {
        for (j, bj) in sys.blocks().iter().enumerate() {
            let e = sys.coupling().entry(i, j);
            let d = delta.block(i, j);
            if e == 0.0 || d.is_zero() {
                continue;
            }
            let term = bi.b().as_matrix() * d.as_matrix() * bj.c().as_matrix() * C64::new(e, 0.0);
            let mut view = acl.view_mut((offsets[i], offsets[j]), (bi.states(), bj.states()));
            view += term;
        }
    }
    Ok(acl)
}
