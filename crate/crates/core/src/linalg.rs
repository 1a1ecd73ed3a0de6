//! Dense complex matrix kernels.
//!
//! Everything is stored as `DMatrix<Complex64>`; real matrices are the
//! zero-imaginary-part special case. Eigenvalues come from a complex Schur
//! form, eigenvectors from back substitution on the triangular factor, and
//! Perron data for nonnegative matrices from the Frobenius normal form
//! (strongly connected classes) so reducible inputs are handled exactly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default relative tolerance for residual checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative gap under which a class spectral radius counts as maximal.
const BASIC_CLASS_TOL: f64 = 1e-10;

/// A finite, non-empty complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<C64>);

impl DenseMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::input(format!(
                "matrix must be non-empty, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some((idx, _)) = m
            .iter()
            .enumerate()
            .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
        {
            // nalgebra is column-major
            let (r, c) = (idx % m.nrows(), idx / m.nrows());
            return Err(Error::input(format!("non-finite matrix entry at ({r}, {c})")));
        }
        Ok(DenseMatrix(m))
    }

    /// Builds a matrix from complex entries in row-major order.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} entries for a {rows}×{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_real_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let z: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(rows, cols, &z)
    }

    /// Builds a real matrix from nested rows; all rows must have equal length.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(i) = rows.iter().position(|r| r.as_ref().len() != cols) {
            return Err(Error::input(format!(
                "ragged matrix: row {i} has {} entries, expected {cols}",
                rows[i].as_ref().len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_real_row_major(rows.len(), cols, &flat)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        DenseMatrix(DMatrix::identity(n, n))
    }

    pub fn scalar(z: C64) -> Result<Self> {
        Self::from_row_major(1, 1, &[z])
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn row_major(&self) -> Vec<C64> {
        (0..self.rows())
            .flat_map(|r| (0..self.cols()).map(move |c| (r, c)))
            .map(|(r, c)| self.0[(r, c)])
            .collect()
    }

    /// Real parts in nested row form.
    pub fn real_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.0[(r, c)].re).collect())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DenseMatrix(&self.0 * C64::new(factor, 0.0))
    }
}

// ---------------------------------------------------------------------------
// Singular values

/// Largest singular value (the ℓ²-induced norm).
pub fn operator_norm(m: &DenseMatrix) -> f64 {
    operator_norm_raw(m.as_matrix())
}

pub(crate) fn operator_norm_raw(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Leading singular value with its left and right singular vectors, so that
/// `M · right = value · left`.
#[derive(Clone, Debug)]
pub struct SingularTriplet {
    pub value: f64,
    pub left: DVector<C64>,
    pub right: DVector<C64>,
}

/// Ties between equal leading singular values go to the first one reported.
pub fn top_singular_triplet(m: &DenseMatrix) -> SingularTriplet {
    let svd = m.as_matrix().clone().svd(true, true);
    let (idx, value) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    SingularTriplet {
        value,
        left: u.column(idx).into_owned(),
        right: v_t.row(idx).adjoint(),
    }
}

// ---------------------------------------------------------------------------
// Eigenvalues

fn require_square(m: &DMatrix<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input(format!(
            "square matrix required, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

#[link(name = "openblas")]
extern "C" {}

/// LAPACK `zgeev`: eigenvalues, and unit right eigenvectors when asked.
fn geev(m: &DMatrix<C64>, vectors: bool) -> Result<(Vec<C64>, Option<DMatrix<C64>>)> {
    require_square(m)?;
    let n = m.nrows();
    let ni = n as i32;
    let mut a = m.clone();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut vl = [C64::new(0.0, 0.0)];
    let mut vr = DMatrix::<C64>::zeros(if vectors { n } else { 1 }, if vectors { n } else { 1 });
    let jobvr = if vectors { b'V' } else { b'N' };
    let ldvr = if vectors { ni } else { 1 };
    let mut rwork = vec![0.0; 2 * n];
    let mut info = 0;
    let mut query = [C64::new(0.0, 0.0)];
    unsafe {
        lapack::zgeev(
            b'N', jobvr, ni, a.as_mut_slice(), ni, &mut w, &mut vl, 1, vr.as_mut_slice(), ldvr, &mut query, -1,
            &mut rwork, &mut info,
        );
    }
    let lwork = (query[0].re as usize).max(2 * n).max(1);
    let mut work = vec![C64::new(0.0, 0.0); lwork];
    unsafe {
        lapack::zgeev(
            b'N', jobvr, ni, a.as_mut_slice(), ni, &mut w, &mut vl, 1, vr.as_mut_slice(), ldvr, &mut work,
            lwork as i32, &mut rwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("eigenvalue iteration failed ({n}×{n}, info {info})")));
    }
    Ok((w, vectors.then_some(vr)))
}

pub(crate) fn eigenvalues_raw(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    Ok(geev(m, false)?.0)
}

/// All eigenvalues with multiplicity, in no particular order.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<C64>> {
    eigenvalues_raw(m.as_matrix())
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: C64,
    /// Unit ℓ²-norm eigenvector.
    pub vector: DVector<C64>,
}

pub(crate) fn eigenpairs_raw(m: &DMatrix<C64>) -> Result<Vec<EigenPair>> {
    let (values, vr) = geev(m, true)?;
    let vr = vr.expect("vectors requested");
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, value)| EigenPair {
            value,
            vector: vr.column(k).into_owned(),
        })
        .collect())
}

pub fn eigenpairs(m: &DenseMatrix) -> Result<Vec<EigenPair>> {
    eigenpairs_raw(m.as_matrix())
}

pub(crate) fn spectral_abscissa_raw(m: &DMatrix<C64>) -> Result<f64> {
    Ok(eigenvalues_raw(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DenseMatrix) -> Result<f64> {
    spectral_abscissa_raw(m.as_matrix())
}

// ---------------------------------------------------------------------------
// Nonnegative matrices

/// Spectral radius of a nonnegative matrix with a nonnegative eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronData {
    pub radius: f64,
    /// Nonnegative, unit ℓ¹ norm.
    pub vector: Vec<f64>,
}

fn require_real_nonneg(m: &DenseMatrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let z = m.get(r, c);
            if z.im != 0.0 {
                return Err(Error::input(format!("{what} must be real: entry ({r}, {c}) = {z}")));
            }
            if z.re < 0.0 {
                return Err(Error::input(format!(
                    "{what} must be nonnegative: entry ({r}, {c}) = {}",
                    z.re
                )));
            }
        }
    }
    Ok(())
}

/// Entrywise square of a real nonnegative matrix.
pub fn hadamard_square(e: &DenseMatrix) -> Result<DenseMatrix> {
    require_real_nonneg(e, "matrix")?;
    DenseMatrix::new(e.as_matrix().map(|z| C64::new(z.re * z.re, 0.0)))
}

fn real_part(m: &DenseMatrix) -> DMatrix<f64> {
    m.as_matrix().map(|z| z.re)
}

fn max_modulus(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let z = m.map(|x| C64::new(x, 0.0));
    Ok(eigenvalues_raw(&z)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Positive Perron vector of an irreducible nonnegative matrix.
fn irreducible_perron_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let z = m.map(|x| C64::new(x, 0.0));
    let pairs = eigenpairs_raw(&z)?;
    // ρ is itself an eigenvalue and dominates every other real part.
    let pair = pairs
        .iter()
        .max_by(|a, b| a.value.re.total_cmp(&b.value.re))
        .expect("non-empty spectrum");
    let pivot = pair
        .vector
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("non-empty vector");
    let phase = pivot.conj() / pivot.norm();
    let v = pair.vector.map(|x| (x * phase).re.max(0.0));
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Numerical("Perron vector collapsed to zero".into()));
    }
    Ok(v)
}

/// Spectral radius and a nonnegative eigenvector of a real nonnegative matrix.
///
/// The matrix is split into strongly connected classes. The eigenvector is
/// supported on a class attaining the radius that no other such class can
/// reach, plus every index with a path into that class; on the latter the
/// entries solve `(ρI − M_SS) z_S = M_SC z_C`, which is well posed because
/// those indices only touch classes of strictly smaller radius.
pub fn spectral_radius_nonneg(m: &DenseMatrix) -> Result<PerronData> {
    if !m.is_square() {
        return Err(Error::input(format!(
            "square matrix required, got {}×{}",
            m.rows(),
            m.cols()
        )));
    }
    require_real_nonneg(m, "matrix")?;
    let a = real_part(m);
    let n = a.nrows();

    let mut graph = DiGraph::<usize, ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let classes: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut idx: Vec<usize> = c.into_iter().map(|nd| graph[nd]).collect();
            idx.sort_unstable();
            idx
        })
        .collect();

    let class_radius = classes
        .iter()
        .map(|c| max_modulus(&a.select_rows(c).select_columns(c)))
        .collect::<Result<Vec<f64>>>()?;
    let radius = class_radius.iter().copied().fold(0.0, f64::max);

    let mut class_of = vec![0usize; n];
    for (k, c) in classes.iter().enumerate() {
        for &i in c {
            class_of[i] = k;
        }
    }
    // predecessors: i -> j edge means i depends on j
    let ancestors_of = |class: &[usize]| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = class.to_vec();
        for &i in class {
            seen[i] = true;
        }
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !seen[i] && a[(i, j)] > 0.0 {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    };

    let is_basic = |k: usize| class_radius[k] >= radius * (1.0 - BASIC_CLASS_TOL);
    let mut chosen = None;
    for k in (0..classes.len()).filter(|&k| is_basic(k)) {
        let anc = ancestors_of(&classes[k]);
        let blocked = (0..n).any(|i| anc[i] && class_of[i] != k && is_basic(class_of[i]));
        if !blocked {
            chosen = Some((k, anc));
            break;
        }
    }
    let (k, anc) = chosen.ok_or_else(|| Error::Numerical("no initial basic class found".into()))?;
    let core = &classes[k];
    let lambda = class_radius[k];

    let mut z = DVector::<f64>::zeros(n);
    let core_vec = irreducible_perron_vector(&a.select_rows(core).select_columns(core))?;
    for (pos, &i) in core.iter().enumerate() {
        z[i] = core_vec[pos];
    }
    let upstream: Vec<usize> = (0..n).filter(|&i| anc[i] && class_of[i] != k).collect();
    if !upstream.is_empty() {
        let m_ss = a.select_rows(&upstream).select_columns(&upstream);
        let m_sc = a.select_rows(&upstream).select_columns(core);
        let lhs = DMatrix::<f64>::identity(upstream.len(), upstream.len()) * lambda - m_ss;
        let rhs = m_sc * core_vec;
        let sol = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular system for upstream Perron entries".into()))?;
        for (pos, &i) in upstream.iter().enumerate() {
            z[i] = sol[pos].max(0.0);
        }
    }
    let l1: f64 = z.iter().sum();
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::Numerical("Perron vector normalization failed".into()));
    }
    Ok(PerronData {
        radius,
        vector: z.iter().map(|x| x / l1).collect(),
    })
}

/// Spectral radius by maximal eigenvalue modulus, for any square matrix.
pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
