//! Example system generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interconnect::CompositeSystem;
use crate::linalg::{self, DenseMatrix, C64};
use crate::system::StateSpaceBlock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingPattern {
    /// Directed cycle: block `i` listens to block `i − 1 (mod N)`.
    Ring,
    /// Path with both directions: block `i` listens to `i ± 1`.
    Line,
    /// Every block listens to every other block.
    Dense,
}

impl CouplingPattern {
    pub fn matrix(self, n: usize) -> Vec<Vec<f64>> {
        let mut e = vec![vec![0.0; n]; n];
        for (i, row) in e.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let on = match self {
                    CouplingPattern::Ring => j == (i + n - 1) % n && i != j,
                    CouplingPattern::Line => i.abs_diff(j) == 1,
                    CouplingPattern::Dense => i != j,
                };
                if on {
                    *v = 1.0;
                }
            }
        }
        e
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatChainParams {
    /// Interior grid points per rod.
    pub interior_points: usize,
    pub blocks: usize,
    pub pattern: CouplingPattern,
}

/// Rods of the 1-D heat equation on `(0, 1)` with Dirichlet ends,
/// semi-discretized by central differences: `A = (n+1)² tridiag(1, −2, 1)`,
/// heat injected at the first interior node and measured at the last.
pub fn heat_chain_system(params: &HeatChainParams) -> Result<CompositeSystem> {
    let n = params.interior_points;
    if n < 2 {
        return Err(Error::input(format!("heat_chain needs at least 2 interior points, got {n}")));
    }
    if params.blocks < 2 {
        return Err(Error::input(format!("heat_chain needs at least 2 blocks, got {}", params.blocks)));
    }
    let h2 = ((n + 1) * (n + 1)) as f64;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = -2.0 * h2;
        if i > 0 {
            a[i * n + i - 1] = h2;
        }
        if i + 1 < n {
            a[i * n + i + 1] = h2;
        }
    }
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    let mut c = vec![0.0; n];
    c[n - 1] = 1.0;
    let blocks = (0..params.blocks)
        .map(|k| {
            StateSpaceBlock::new(
                format!("rod{k}"),
                DenseMatrix::from_real_row_major(n, n, &a)?,
                DenseMatrix::from_real_row_major(n, 1, &b)?,
                DenseMatrix::from_real_row_major(1, n, &c)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeSystem::new(blocks, DenseMatrix::from_real_rows(&params.pattern.matrix(params.blocks))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomStableParams {
    pub blocks: usize,
    pub max_states: usize,
    pub max_inputs: usize,
    pub max_outputs: usize,
    /// Distance of the spectrum of each `A_k` from the imaginary axis.
    pub margin: f64,
}

impl Default for RandomStableParams {
    fn default() -> Self {
        RandomStableParams {
            blocks: 3,
            max_states: 4,
            max_inputs: 2,
            max_outputs: 2,
            margin: 0.2,
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Result<DenseMatrix> {
    let v: Vec<f64> = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::from_real_row_major(rows, cols, &v)
}

/// Random real blocks with `A = M − (α(M) + margin) I` and coupling entries
/// uniform on `[0, 1)`. Deterministic in `seed`.
pub fn random_stable_system(params: &RandomStableParams, seed: u64) -> Result<CompositeSystem> {
    if params.blocks == 0 || params.max_states == 0 || params.max_inputs == 0 || params.max_outputs == 0 {
        return Err(Error::input("random_stable dimensions must all be ≥ 1"));
    }
    if !(params.margin > 0.0 && params.margin.is_finite()) {
        return Err(Error::input(format!("margin must be positive, got {}", params.margin)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(params.blocks);
    for k in 0..params.blocks {
        let n = rng.random_range(1..=params.max_states);
        let m = rng.random_range(1..=params.max_inputs);
        let p = rng.random_range(1..=params.max_outputs);
        let m0 = gaussian_matrix(&mut rng, n, n, 1.0 / (n as f64).sqrt())?;
        let shift = linalg::spectral_abscissa(&m0)? + params.margin;
        let a = DenseMatrix::new(m0.as_matrix() - DMatrix::<C64>::identity(n, n) * C64::new(shift, 0.0))?;
        let blk = StateSpaceBlock::new(
            format!("block{k}"),
            a,
            gaussian_matrix(&mut rng, n, m, 1.0)?,
            gaussian_matrix(&mut rng, p, n, 1.0)?,
        )?;
        blk.require_stable()?;
        blocks.push(blk);
    }
    let e: Vec<f64> = (0..params.blocks * params.blocks)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    CompositeSystem::new(
        blocks,
        DenseMatrix::from_real_row_major(params.blocks, params.blocks, &e)?,
    )
}
