//! Numerical evidence independent of the frequency sweep: Monte Carlo
//! sampling below the radius, and a ray-bisection upper estimate of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interconnect::{self, BlockPerturbation, CompositeSystem};
use crate::linalg::{self, DenseMatrix, C64};
use crate::radius::{stability_radius, RadiusReport, SweepOptions};

/// Largest perturbation scale tried along a ray.
pub const BRUTE_FORCE_CAP: f64 = (1u64 << 30) as f64;
const RAY_SCAN_START_EXP: i32 = -30;
const RAY_BISECT_RTOL: f64 = 1e-12;
const MAX_REDRAWS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Row-wise operator norm `‖Δ‖`.
    Opnorm,
    /// `‖Δ‖₂,∞`.
    Norm2Inf,
}

impl NormKind {
    pub fn eval(self, delta: &BlockPerturbation) -> f64 {
        match self {
            NormKind::Opnorm => interconnect::delta_opnorm(delta),
            NormKind::Norm2Inf => interconnect::delta_norm_2inf(delta),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(sys: &CompositeSystem, target: f64, kind: NormKind, rng: &mut ChaCha8Rng) -> Result<BlockPerturbation> {
    for _ in 0..MAX_REDRAWS {
        let d = BlockPerturbation::from_fn(sys, |_, _, m, p| {
            let z: Vec<C64> = (0..m * p)
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            DenseMatrix::from_row_major(m, p, &z).expect("gaussian draws are finite")
        });
        let norm = kind.eval(&d);
        if norm > 0.0 && norm.is_finite() {
            return Ok(d.scaled(target / norm));
        }
    }
    Err(Error::Numerical("random perturbation draws kept vanishing".into()))
}

/// Complex Gaussian blocks rescaled to `target_norm` in the chosen norm.
pub fn sample_delta(sys: &CompositeSystem, target_norm: f64, kind: NormKind, seed: u64) -> Result<BlockPerturbation> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(Error::input(format!("target norm must be positive and finite, got {target_norm}")));
    }
    draw(sys, target_norm, kind, &mut stream_rng(seed, 0))
}

#[derive(Clone, Debug)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub fraction: f64,
    pub seed: u64,
    pub norm_kind: NormKind,
    /// Extra direction evaluated first (rescaled to the same norm).
    pub inject: Option<BlockPerturbation>,
}

impl MonteCarloOptions {
    pub fn new(samples: usize, fraction: f64, seed: u64) -> Self {
        MonteCarloOptions {
            samples,
            fraction,
            seed,
            norm_kind: NormKind::Norm2Inf,
            inject: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub fraction_of_radius: f64,
    pub target_norm: f64,
    pub norm_kind: NormKind,
    pub violations: usize,
    pub worst_abscissa: f64,
    pub seed: u64,
    pub injected_direction: bool,
}

/// Draws perturbations at `fraction · r` and checks that every closed loop
/// stays exponentially stable. Requires `0 < fraction < 1` and a finite radius.
pub fn monte_carlo_stability(sys: &CompositeSystem, report: &RadiusReport, opts: &MonteCarloOptions) -> Result<MonteCarloReport> {
    if !(opts.fraction > 0.0 && opts.fraction < 1.0) {
        return Err(Error::input(format!("fraction must lie in (0, 1), got {}", opts.fraction)));
    }
    let radius = report
        .radius
        .finite()
        .ok_or_else(|| Error::input("the stability radius is infinite; nothing to sample below it"))?;
    sample_at_norm(sys, opts.fraction * radius, opts.fraction, opts)
}

/// Same sampling at an explicit norm, without the `fraction < 1` guard.
/// Used to probe above the radius along an injected worst-case direction.
pub fn sample_at_norm(sys: &CompositeSystem, target: f64, fraction: f64, opts: &MonteCarloOptions) -> Result<MonteCarloReport> {
    if opts.samples == 0 && opts.inject.is_none() {
        return Err(Error::input("at least one sample is required"));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::input(format!("target norm must be positive and finite, got {target}")));
    }
    let injected = match &opts.inject {
        Some(d) => {
            let norm = opts.norm_kind.eval(d);
            if !(norm > 0.0) {
                return Err(Error::input("injected direction is zero"));
            }
            Some(d.scaled(target / norm))
        }
        None => None,
    };
    let abscissa = |d: &BlockPerturbation| linalg::spectral_abscissa_raw(&interconnect::closed_loop_raw(sys, d)?);

    let mut results: Vec<f64> = (0..opts.samples)
        .into_par_iter()
        .map(|i| {
            let d = draw(sys, target, opts.norm_kind, &mut stream_rng(opts.seed, i as u64))?;
            abscissa(&d)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(d) = &injected {
        results.push(abscissa(d)?);
    }
    Ok(MonteCarloReport {
        samples: opts.samples,
        fraction_of_radius: fraction,
        target_norm: target,
        norm_kind: opts.norm_kind,
        violations: results.iter().filter(|&&a| a >= 0.0).count(),
        worst_abscissa: results.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        seed: opts.seed,
        injected_direction: injected.is_some(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceRadius {
    /// Smallest destabilizing scale found; an upper estimate of the radius.
    pub radius: f64,
    /// Every direction hit the cap: the radius is likely infinite.
    pub capped: bool,
    pub directions: usize,
    /// Estimate along the injected direction alone, when one was given.
    pub injected_radius: Option<f64>,
}

/// First `t` with `α(A + B (tΔ̂∘E) C) ≥ 0` along a unit direction, or the cap.
fn ray_crossing(sys: &CompositeSystem, unit: &BlockPerturbation) -> Result<(f64, bool)> {
    let unstable = |t: f64| -> Result<bool> {
        Ok(linalg::spectral_abscissa_raw(&interconnect::closed_loop_raw(sys, &unit.scaled(t))?)? >= 0.0)
    };
    let mut lo = 0.0;
    let mut hi = None;
    let mut k = RAY_SCAN_START_EXP;
    loop {
        let t = 2f64.powi(k).min(BRUTE_FORCE_CAP);
        if unstable(t)? {
            hi = Some(t);
            break;
        }
        lo = t;
        if t >= BRUTE_FORCE_CAP {
            break;
        }
        k += 1;
    }
    let Some(mut hi) = hi else {
        return Ok((BRUTE_FORCE_CAP, true));
    };
    while hi - lo > RAY_BISECT_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, false))
}

/// Minimum over random unit directions of the first destabilizing scale.
/// Each value is attained by an actual destabilizing perturbation, so the
/// result bounds the radius from above.
pub fn brute_force_radius(
    sys: &CompositeSystem,
    kind: NormKind,
    budget: usize,
    seed: u64,
    inject: Option<&BlockPerturbation>,
) -> Result<BruteForceRadius> {
    let random: Vec<(f64, bool)> = (0..budget)
        .into_par_iter()
        .map(|i| {
            let d = draw(sys, 1.0, kind, &mut stream_rng(seed, i as u64))?;
            ray_crossing(sys, &d)
        })
        .collect::<Result<Vec<_>>>()?;
    let injected = match inject {
        Some(d) => {
            let norm = kind.eval(d);
            if !(norm > 0.0) {
                return Err(Error::input("injected direction is zero"));
            }
            Some(ray_crossing(sys, &d.scaled(1.0 / norm))?)
        }
        None => None,
    };
    let all: Vec<&(f64, bool)> = random.iter().chain(injected.iter()).collect();
    if all.is_empty() {
        return Err(Error::input("brute-force budget must be positive"));
    }
    Ok(BruteForceRadius {
        radius: all.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        capped: all.iter().all(|r| r.1),
        directions: all.len(),
        injected_radius: injected.map(|r| r.0),
    })
}

/// Whether `r(cE) = r(E)/c` within `1e-7` relative.
pub fn scaling_check(sys: &CompositeSystem, c: f64, opts: &SweepOptions) -> Result<bool> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::input(format!("scale factor must be positive, got {c}")));
    }
    let base = stability_radius(sys, opts)?.radius;
    let scaled = stability_radius(&sys.with_scaled_coupling(c)?, opts)?.radius;
    Ok(match (base.finite(), scaled.finite()) {
        (Some(r), Some(rc)) => (rc - r / c).abs() <= 1e-7 * (r / c),
        (None, None) => true,
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnect::tests::{siso, two_block};
    use crate::worstcase::construct_delta;
    use approx::assert_relative_eq;

    fn real(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_real_rows(rows).unwrap()
    }

    fn single() -> CompositeSystem {
        CompositeSystem::new(vec![siso(1.0)], real(&[&[1.0]])).unwrap()
    }

    fn acyclic() -> CompositeSystem {
        CompositeSystem::new(vec![siso(1.0), siso(2.0)], real(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap()
    }

    #[test]
    fn sample_delta_contract() {
        let sys = two_block();
        for kind in [NormKind::Norm2Inf, NormKind::Opnorm] {
            let d = sample_delta(&sys, 1.0, kind, 42).unwrap();
            assert!((kind.eval(&d) - 1.0).abs() <= 1e-12);
        }
        assert_eq!(
            sample_delta(&sys, 1.0, NormKind::Norm2Inf, 9).unwrap(),
            sample_delta(&sys, 1.0, NormKind::Norm2Inf, 9).unwrap()
        );
        assert!(sample_delta(&sys, 0.0, NormKind::Norm2Inf, 9).is_err());
    }

    #[test]
    fn monte_carlo_single_block() {
        let sys = single();
        let rep = stability_radius(&sys, &SweepOptions::default()).unwrap();
        let mc = monte_carlo_stability(&sys, &rep, &MonteCarloOptions::new(1000, 0.999, 1)).unwrap();
        assert_eq!(mc.violations, 0);
        assert!(mc.worst_abscissa <= -1e-3 + 1e-12, "{}", mc.worst_abscissa);
    }

    #[test]
    fn monte_carlo_two_block() {
        let sys = two_block();
        let rep = stability_radius(&sys, &SweepOptions::default()).unwrap();
        let mc = monte_carlo_stability(&sys, &rep, &MonteCarloOptions::new(10_000, 0.99, 5)).unwrap();
        assert_eq!(mc.violations, 0);
        assert!(monte_carlo_stability(&sys, &rep, &MonteCarloOptions::new(10, 1.5, 5)).is_err());
        assert!(monte_carlo_stability(&sys, &rep, &MonteCarloOptions::new(0, 0.5, 5)).is_err());
    }

    #[test]
    fn injected_direction_above_radius_violates() {
        let sys = two_block();
        let rep = stability_radius(&sys, &SweepOptions::default()).unwrap();
        let cert = construct_delta(&sys, rep.omega_star).unwrap();
        let mut opts = MonteCarloOptions::new(100, 1.01, 5);
        opts.inject = Some(cert.delta);
        let r = rep.radius.finite().unwrap();
        let mc = sample_at_norm(&sys, 1.01 * r, 1.01, &opts).unwrap();
        assert!(mc.violations >= 1);
    }

    #[test]
    fn monte_carlo_deterministic() {
        let sys = two_block();
        let rep = stability_radius(&sys, &SweepOptions::default()).unwrap();
        let o = MonteCarloOptions::new(200, 0.9, 77);
        let a = serde_json::to_string(&monte_carlo_stability(&sys, &rep, &o).unwrap()).unwrap();
        let b = serde_json::to_string(&monte_carlo_stability(&sys, &rep, &o).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brute_force_single_block() {
        let b = brute_force_radius(&single(), NormKind::Norm2Inf, 64, 3, None).unwrap();
        assert!(b.radius >= 1.0 - 1e-9 && b.radius <= 1.05, "{}", b.radius);
        assert!(!b.capped);
    }

    #[test]
    fn brute_force_two_block() {
        let b = brute_force_radius(&two_block(), NormKind::Norm2Inf, 512, 3, None).unwrap();
        let r = 2f64.sqrt();
        assert!(b.radius >= r * (1.0 - 1e-9) && b.radius <= 1.5 * r, "{}", b.radius);
    }

    #[test]
    fn brute_force_acyclic_caps() {
        let b = brute_force_radius(&acyclic(), NormKind::Norm2Inf, 32, 3, None).unwrap();
        assert!(b.capped);
        assert_eq!(b.radius, BRUTE_FORCE_CAP);
    }

    #[test]
    fn brute_force_with_injection_hits_radius() {
        let sys = two_block();
        let cert = construct_delta(&sys, 0.0).unwrap();
        let b = brute_force_radius(&sys, NormKind::Norm2Inf, 8, 3, Some(&cert.delta)).unwrap();
        assert_relative_eq!(b.injected_radius.unwrap(), 2f64.sqrt(), max_relative = 1e-9);
        assert_relative_eq!(b.radius, 2f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn scaling_examples() {
        let opts = SweepOptions::default();
        assert!(scaling_check(&two_block(), 2.0, &opts).unwrap());
        assert!(scaling_check(&two_block(), 1.0, &opts).unwrap());
        assert!(scaling_check(&single(), 10.0, &opts).unwrap());
        let r = stability_radius(&single().with_scaled_coupling(10.0).unwrap(), &opts).unwrap();
        assert_relative_eq!(r.radius.finite().unwrap(), 0.1, max_relative = 1e-10);
        assert!(scaling_check(&two_block(), 0.0, &opts).is_err());
    }
}
