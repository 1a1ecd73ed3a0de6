//! Destabilizing perturbation of norm exactly `1/√μ(ω₀)`.
//!
//! At a frequency `ω₀` with `μ(ω₀) > 0`, take the Perron pair `(λ, z)` of
//! `diag(‖G_k(iω₀)‖²) E∘²`, a maximizing input direction `u_k` of each
//! `G_k(iω₀)` scaled so that `y_k = G_k(iω₀) u_k` has `‖y_k‖² = z_k`, and set
//!
//! ```text
//! Δ_kl = u_k · e_kl · y_lᴴ / Σ_j e_kj² ‖y_j‖²
//! ```
//!
//! Then `x_k = (iω₀ − A_k)⁻¹ B_k u_k` stacks into an eigenvector of the
//! closed loop for the eigenvalue `iω₀`, and every block row of `Δ` has
//! ℓ²-norm `1/√λ` (or is zero where `z_k = 0`).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interconnect::{self, BlockPerturbation, CompositeSystem};
use crate::linalg::{self, DenseMatrix, C64};
use crate::radius::{coupled_gain_matrix, mu_objective};

/// Relative tolerance (against `max(1, ‖A_cl‖)`) for certifying `iω₀ ∈ σ(A_cl)`.
pub const CERTIFY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerronAt {
    pub lambda: f64,
    /// ℓ¹-normalized Perron vector.
    pub z: Vec<f64>,
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WorstCaseCertificate {
    pub delta: BlockPerturbation,
    pub omega0: f64,
    /// `μ(ω₀)`.
    pub lambda: f64,
    pub perron_vector: Vec<f64>,
    pub norm_2inf: f64,
    pub norm_op: f64,
    /// `1/√μ(ω₀)`; infinite when `μ(ω₀) = 0`.
    pub target_radius: f64,
    /// Closed-loop eigenvalue nearest to `iω₀`.
    pub closed_loop_eig: C64,
    pub eig_distance: f64,
    /// `‖(A_cl − iω₀)v‖` for the unit eigenvector `v` of `closed_loop_eig`.
    pub eig_residual: f64,
    pub eigvec: DVector<C64>,
    /// Eigenvector predicted by the construction, when `Δ` came from it.
    pub predicted_eigvec: Option<DVector<C64>>,
    /// `‖(A_cl − iω₀)x‖ / ‖x‖` for the predicted eigenvector.
    pub predicted_residual: Option<f64>,
    pub closed_loop_norm: f64,
    pub closed_loop_abscissa: f64,
    pub certified: bool,
    pub failure: Option<String>,
}

/// Perron pair of `diag(‖G_k(iω₀)‖²) E∘²`.
pub fn perron_data_at(sys: &CompositeSystem, omega0: f64) -> Result<PerronAt> {
    let (_, gains) = mu_objective(sys, omega0)?;
    let perron = linalg::spectral_radius_nonneg(&coupled_gain_matrix(sys, &gains)?)?;
    if !(perron.radius > 0.0) {
        return Err(Error::Degenerate(format!(
            "spectral radius vanishes at ω = {omega0}: no destabilizing construction exists at this frequency"
        )));
    }
    Ok(PerronAt {
        lambda: perron.radius,
        z: perron.vector,
        gains,
    })
}

/// Input/output directions `(u_k, y_k)` with `‖y_k‖² = z_k`.
fn directions(sys: &CompositeSystem, omega0: f64, z: &[f64]) -> Result<Vec<(DVector<C64>, DVector<C64>)>> {
    let s = C64::new(0.0, omega0);
    sys.blocks()
        .iter()
        .zip(z)
        .map(|(blk, &zk)| {
            if zk <= 0.0 {
                return Ok((DVector::zeros(blk.inputs()), DVector::zeros(blk.outputs())));
            }
            let g = blk.transfer_eval(s)?;
            let top = linalg::top_singular_triplet(&g);
            if !(top.value > 0.0) {
                return Err(Error::Numerical(format!(
                    "block `{}` has zero gain at ω = {omega0} but a positive Perron weight",
                    blk.label()
                )));
            }
            let u = top.right * C64::new(zk.sqrt() / top.value, 0.0);
            let y = g.as_matrix() * &u;
            Ok((u, y))
        })
        .collect()
}

/// The rank-one blocks `Δ_kl` for a given (positively scaled) Perron vector.
pub(crate) fn build_delta(sys: &CompositeSystem, omega0: f64, z: &[f64]) -> Result<(BlockPerturbation, Vec<DVector<C64>>)> {
    let dirs = directions(sys, omega0, z)?;
    let e = sys.coupling();
    let n = sys.len();
    let denom: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|j| e.entry(k, j).powi(2) * dirs[j].1.norm_squared()).sum())
        .collect();
    let mut blocks = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = Vec::with_capacity(n);
        for l in 0..n {
            let (m_k, p_l) = (sys.block(k).inputs(), sys.block(l).outputs());
            if denom[k] == 0.0 {
                row.push(DenseMatrix::zeros(m_k, p_l));
                continue;
            }
            let scale = C64::new(e.entry(k, l) / denom[k], 0.0);
            let block: DMatrix<C64> = &dirs[k].0 * dirs[l].1.adjoint() * scale;
            row.push(DenseMatrix::new(block)?);
        }
        blocks.push(row);
    }
    let inputs = dirs.into_iter().map(|(u, _)| u).collect();
    Ok((BlockPerturbation::new(sys, blocks)?, inputs))
}

/// Builds the destabilizing perturbation at `omega0` and certifies it.
pub fn construct_delta(sys: &CompositeSystem, omega0: f64) -> Result<WorstCaseCertificate> {
    let perron = perron_data_at(sys, omega0)?;
    let (delta, inputs) = build_delta(sys, omega0, &perron.z)?;

    let s = C64::new(0.0, omega0);
    let mut x = Vec::with_capacity(sys.total_states());
    for (blk, u) in sys.blocks().iter().zip(&inputs) {
        let n = blk.states();
        let shifted = DMatrix::<C64>::identity(n, n) * s - blk.a().as_matrix();
        let rhs = blk.b().as_matrix() * u;
        let xk = shifted
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular { s, distance: 0.0 })?;
        x.extend(xk.iter().copied());
    }
    let x = DVector::from_vec(x);

    let mut cert = certify_inner(sys, delta, omega0, Some(perron.lambda))?;
    cert.perron_vector = perron.z;
    let acl = interconnect::closed_loop_raw(sys, &cert.delta)?;
    let shifted = &acl - DMatrix::<C64>::identity(acl.nrows(), acl.nrows()) * s;
    let xn = x.norm();
    let predicted = if xn > 0.0 { (shifted * &x).norm() / xn } else { f64::INFINITY };
    if cert.certified && !(cert.norm_2inf <= cert.target_radius * (1.0 + CERTIFY_TOL)) {
        cert.certified = false;
        cert.failure = Some(format!(
            "‖Δ‖₂,∞ = {} exceeds the target radius {}",
            cert.norm_2inf, cert.target_radius
        ));
    }
    cert.predicted_residual = Some(predicted);
    cert.predicted_eigvec = Some(x);
    Ok(cert)
}

/// Checks whether `iω₀` is (numerically) an eigenvalue of `A + B(Δ∘E)C`.
/// Failures are recorded in the certificate rather than returned as errors.
pub fn certify(sys: &CompositeSystem, delta: &BlockPerturbation, omega0: f64) -> Result<WorstCaseCertificate> {
    certify_inner(sys, delta.clone(), omega0, None)
}

fn certify_inner(
    sys: &CompositeSystem,
    delta: BlockPerturbation,
    omega0: f64,
    lambda: Option<f64>,
) -> Result<WorstCaseCertificate> {
    let lambda = match lambda {
        Some(l) => l,
        None => mu_objective(sys, omega0)?.0,
    };
    let acl = interconnect::closed_loop_raw(sys, &delta)?;
    let n = acl.nrows();
    let target = C64::new(0.0, omega0);
    let pairs = linalg::eigenpairs_raw(&acl)?;
    let abscissa = pairs.iter().map(|p| p.value.re).fold(f64::NEG_INFINITY, f64::max);
    let nearest = pairs
        .into_iter()
        .min_by(|a, b| (a.value - target).norm().total_cmp(&(b.value - target).norm()))
        .expect("non-empty closed loop");
    let shifted = &acl - DMatrix::<C64>::identity(n, n) * target;
    let residual = (shifted * &nearest.vector).norm();
    let acl_norm = linalg::operator_norm_raw(&acl);
    let distance = (nearest.value - target).norm();
    let bound = CERTIFY_TOL * acl_norm.max(1.0);

    let failure = if distance > bound {
        Some(format!(
            "nearest closed-loop eigenvalue {} is {distance:e} away from iω₀ (tolerance {bound:e})",
            nearest.value
        ))
    } else if residual > bound {
        Some(format!("eigen-residual {residual:e} exceeds tolerance {bound:e}"))
    } else {
        None
    };

    Ok(WorstCaseCertificate {
        norm_2inf: interconnect::delta_norm_2inf(&delta),
        norm_op: interconnect::delta_opnorm(&delta),
        delta,
        omega0,
        lambda,
        perron_vector: Vec::new(),
        target_radius: if lambda > 0.0 { 1.0 / lambda.sqrt() } else { f64::INFINITY },
        closed_loop_eig: nearest.value,
        eig_distance: distance,
        eig_residual: residual,
        eigvec: nearest.vector,
        predicted_eigvec: None,
        predicted_residual: None,
        closed_loop_norm: acl_norm,
        closed_loop_abscissa: abscissa,
        certified: failure.is_none(),
        failure,
    })
}

/// Spectral abscissa of the closed loop under `(1 + overshoot) Δ`.
pub fn overshoot_abscissa(sys: &CompositeSystem, delta: &BlockPerturbation, overshoot: f64) -> Result<f64> {
    if !(overshoot > 0.0) {
        return Err(Error::input(format!("overshoot must be positive, got {overshoot}")));
    }
    linalg::spectral_abscissa_raw(&interconnect::closed_loop_raw(sys, &delta.scaled(1.0 + overshoot))?)
}
