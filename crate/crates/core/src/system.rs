//! A single subsystem `x' = A x + B u`, `y = C x` with zero feedthrough.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, C64};

/// Default relative tolerance for the H∞ bisection.
pub const HINF_DEFAULT_TOL: f64 = 1e-8;

/// Eigenvalues of the Hamiltonian with `|Re λ| < IMAG_AXIS_TOL · ‖H‖` count as imaginary.
const IMAG_AXIS_TOL: f64 = 1e-8;

/// `s` closer than this (relative to `max(1, ‖A‖)`) to σ(A) is treated as a pole.
const POLE_TOL: f64 = 1e-13;

const HINF_MAX_ITER: usize = 200;

#[derive(Clone, Debug)]
pub struct StateSpaceBlock {
    label: String,
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    spectrum: OnceLock<std::result::Result<Vec<C64>, String>>,
}

impl PartialEq for StateSpaceBlock {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.a == other.a && self.b == other.b && self.c == other.c
    }
}

/// Peak gain of a block over the imaginary axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HinfNorm {
    /// Gain actually attained at `omega_peak`.
    pub gamma: f64,
    pub omega_peak: f64,
    /// Level certified to exceed the supremum (no imaginary Hamiltonian eigenvalues).
    pub gamma_upper: f64,
}

impl StateSpaceBlock {
    pub fn new(label: impl Into<String>, a: DenseMatrix, b: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        let label = label.into();
        if !a.is_square() {
            return Err(Error::input(format!(
                "block `{label}`: A must be square, got {}×{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(Error::input(format!(
                "block `{label}`: B must have {n} rows to match A, got {}",
                b.rows()
            )));
        }
        if c.cols() != n {
            return Err(Error::input(format!(
                "block `{label}`: C must have {n} columns to match A, got {}",
                c.cols()
            )));
        }
        Ok(StateSpaceBlock {
            label,
            a,
            b,
            c,
            spectrum: OnceLock::new(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn is_real(&self) -> bool {
        self.a.is_real() && self.b.is_real() && self.c.is_real()
    }

    /// Eigenvalues of `A`, computed once.
    pub fn poles(&self) -> Result<&[C64]> {
        self.spectrum
            .get_or_init(|| linalg::eigenvalues(&self.a).map_err(|e| e.to_string()))
            .as_deref()
            .map_err(|e| Error::Numerical(e.clone()))
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(self.poles()?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn is_exp_stable(&self) -> bool {
        matches!(self.spectral_abscissa(), Ok(x) if x < 0.0)
    }

    pub fn require_stable(&self) -> Result<()> {
        let abscissa = self.spectral_abscissa()?;
        if abscissa < 0.0 {
            Ok(())
        } else {
            Err(Error::NotStable {
                label: self.label.clone(),
                abscissa,
            })
        }
    }

    /// `C (sI − A)⁻¹ B`, one LU factorization and a solve against the columns of `B`.
    pub fn transfer_eval(&self, s: C64) -> Result<DenseMatrix> {
        DenseMatrix::new(self.transfer_raw(s)?)
    }

    pub(crate) fn transfer_raw(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.states();
        let scale = linalg::operator_norm(&self.a).max(1.0);
        let distance = self
            .poles()?
            .iter()
            .map(|p| (s - p).norm())
            .fold(f64::INFINITY, f64::min);
        if distance <= POLE_TOL * scale {
            return Err(Error::Singular { s, distance });
        }
        let shifted = DMatrix::<C64>::identity(n, n) * s - self.a.as_matrix();
        let x = shifted
            .lu()
            .solve(self.b.as_matrix())
            .ok_or(Error::Singular { s, distance })?;
        let g = self.c.as_matrix() * x;
        if g.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Singular { s, distance });
        }
        Ok(g)
    }

    /// `‖G(iω)‖`.
    pub fn block_gain(&self, omega: f64) -> Result<f64> {
        Ok(linalg::operator_norm_raw(&self.transfer_raw(C64::new(0.0, omega))?))
    }

    /// Frequencies `ω` at which `γ` is a singular value of `G(iω)`, i.e. the
    /// imaginary-axis eigenvalues `iω` of
    /// `H(γ) = [[A, BBᴴ/γ], [−CᴴC/γ, −Aᴴ]]`.
    fn level_crossings(&self, gamma: f64) -> Result<Vec<f64>> {
        let n = self.states();
        let a = self.a.as_matrix();
        let b = self.b.as_matrix();
        let c = self.c.as_matrix();
        let g = C64::new(gamma, 0.0);
        let mut h = DMatrix::<C64>::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(a);
        h.view_mut((0, n), (n, n)).copy_from(&((b * b.adjoint()) / g));
        h.view_mut((n, 0), (n, n)).copy_from(&(-(c.adjoint() * c) / g));
        h.view_mut((n, n), (n, n)).copy_from(&(-a.adjoint()));
        let threshold = IMAG_AXIS_TOL * linalg::operator_norm_raw(&h).max(f64::MIN_POSITIVE);
        let mut freqs: Vec<f64> = linalg::eigenvalues_raw(&h)?
            .into_iter()
            .filter(|z| z.re.abs() < threshold)
            .map(|z| z.im)
            .collect();
        freqs.sort_by(f64::total_cmp);
        Ok(freqs)
    }

    /// `sup_ω ‖G(iω)‖` by Hamiltonian bisection.
    ///
    /// The lower end of the bracket is always a gain attained at a known
    /// frequency. A level counts as below the peak only when one of its
    /// crossing frequencies (or a midpoint between consecutive ones) actually
    /// reaches it, so spurious near-axis eigenvalues cannot inflate the result.
    pub fn hinf_norm(&self, tol: f64) -> Result<HinfNorm> {
        if !(tol > 0.0) {
            return Err(Error::input(format!("tolerance must be positive, got {tol}")));
        }
        self.require_stable()?;
        if self.b.is_zero() || self.c.is_zero() {
            return Ok(HinfNorm {
                gamma: 0.0,
                omega_peak: 0.0,
                gamma_upper: 0.0,
            });
        }

        let mut best = (self.block_gain(0.0)?, 0.0);
        let consider = |w: f64, best: &mut (f64, f64)| -> Result<()> {
            let g = self.block_gain(w)?;
            if g > best.0 {
                *best = (g, w);
            }
            Ok(())
        };
        for p in self.poles()?.to_vec() {
            for w in [p.im, -p.im, p.norm(), -p.norm()] {
                consider(w, &mut best)?;
            }
        }
        let mut lo = best.0;
        let mut hi = if lo > 0.0 {
            lo * (1.0 + 2.0 * tol)
        } else {
            // G vanished at every probe: start from a level at rounding scale
            f64::EPSILON * linalg::operator_norm(&self.b) * linalg::operator_norm(&self.c)
        };
        let mut doublings = 0;
        loop {
            let crossings = self.level_crossings(hi)?;
            if !self.probe_level(hi, &crossings, &mut best)? {
                break;
            }
            lo = lo.max(best.0);
            hi = (2.0 * hi).max(lo * (1.0 + 2.0 * tol));
            doublings += 1;
            if doublings > 200 {
                return Err(Error::Numerical(format!(
                    "H∞ bracket for block `{}` did not close",
                    self.label
                )));
            }
        }

        if lo == 0.0 {
            return Ok(HinfNorm {
                gamma: 0.0,
                omega_peak: 0.0,
                gamma_upper: hi,
            });
        }

        let mut iter = 0;
        while hi - lo > tol * lo {
            iter += 1;
            if iter > HINF_MAX_ITER {
                return Err(Error::Numerical(format!(
                    "H∞ bisection for block `{}` did not converge",
                    self.label
                )));
            }
            let mid = 0.5 * (lo + hi);
            let crossings = self.level_crossings(mid)?;
            if self.probe_level(mid, &crossings, &mut best)? {
                lo = lo.max(best.0);
            } else {
                hi = mid;
            }
        }
        Ok(HinfNorm {
            gamma: best.0,
            omega_peak: if self.is_real() { best.1.abs() } else { best.1 },
            gamma_upper: hi,
        })
    }

    /// Evaluates the gain at the crossings and at midpoints of consecutive
    /// crossings; returns whether some evaluated gain reaches `level`.
    fn probe_level(&self, level: f64, crossings: &[f64], best: &mut (f64, f64)) -> Result<bool> {
        let mut reached = false;
        let mids = crossings.windows(2).map(|w| 0.5 * (w[0] + w[1]));
        for w in crossings.iter().copied().chain(mids) {
            let g = self.block_gain(w)?;
            if g > best.0 {
                *best = (g, w);
            }
            reached |= g >= level;
        }
        Ok(reached)
    }

    /// Frequency beyond which `‖G(iω)‖ ≤ ε`, from
    /// `‖(iωI − A)⁻¹‖ ≤ 1/(|ω| − ‖A‖)` for `|ω| > ‖A‖`.
    pub fn tail_bound_frequency(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::input(format!("tail epsilon must be positive, got {eps}")));
        }
        let norm_a = linalg::operator_norm(&self.a);
        let bc = linalg::operator_norm(&self.b) * linalg::operator_norm(&self.c);
        if bc == 0.0 {
            return Ok(norm_a);
        }
        if self.is_exp_stable() {
            let peak = self.hinf_norm(HINF_DEFAULT_TOL)?;
            if eps >= peak.gamma_upper {
                return Ok(norm_a);
            }
        }
        Ok(norm_a + bc / eps)
    }
}
