//! Stability radius `r = 1/Θ`, with
//! `Θ² = sup_ω ρ(diag(‖G_k(iω)‖²) · E∘²)`.
//!
//! The supremum is located by a frequency sweep: a mixed logarithmic and
//! linear grid seeded with the per-block H∞ peak frequencies and pole
//! frequencies, followed by golden-section refinement of the grid's local
//! maxima. The sweep range is cut off where every block gain is below
//! `tail_epsilon` times the largest block peak. Replacing every gain by its
//! H∞ norm gives a certified upper bound on `Θ²` by Perron monotonicity.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golden;
use crate::interconnect::CompositeSystem;
use crate::linalg::{self, DenseMatrix, C64};
use crate::system::{HinfNorm, HINF_DEFAULT_TOL};

/// At most this many grid-local maxima are refined, best first.
const MAX_REFINED_PEAKS: usize = 32;
/// Grid points closer than this (relative) are merged.
const GRID_MERGE_RTOL: f64 = 1e-9;
/// Relative gap below which two μ values count as the same peak.
const PEAK_TIE_RTOL: f64 = 8.0 * f64::EPSILON;
const GOLDEN_MAX_ITER: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub grid_points: usize,
    pub tail_epsilon: f64,
    /// Golden-section stopping width on ω, relative to `max(1, |ω|)`.
    pub refine_tol: f64,
    /// Relative tolerance on Θ² for closing the certified bracket.
    pub objective_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid_points: 2048,
            tail_epsilon: 1e-6,
            refine_tol: 1e-10,
            objective_tol: 1e-8,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::input(format!("grid_points must be ≥ 16, got {}", self.grid_points)));
        }
        for (name, v) in [
            ("tail_epsilon", self.tail_epsilon),
            ("refine_tol", self.refine_tol),
            ("objective_tol", self.objective_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `1/Θ` with the convention `1/0 = ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StabilityRadius {
    Finite(f64),
    Infinite,
}

impl StabilityRadius {
    pub fn from_theta(theta: f64) -> Self {
        if theta > 0.0 {
            StabilityRadius::Finite(1.0 / theta)
        } else {
            StabilityRadius::Infinite
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            StabilityRadius::Finite(r) => Some(r),
            StabilityRadius::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, StabilityRadius::Infinite)
    }
}

impl std::fmt::Display for StabilityRadius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityRadius::Finite(r) => write!(f, "{r}"),
            StabilityRadius::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for StabilityRadius {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StabilityRadius::Finite(r) => s.serialize_f64(*r),
            StabilityRadius::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for StabilityRadius {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(r) => Ok(StabilityRadius::Finite(r)),
            Repr::Str(s) if s == "inf" => Ok(StabilityRadius::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub omega: f64,
    pub mu: f64,
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub theta: f64,
    pub radius: StabilityRadius,
    pub radius_is_infinite: bool,
    pub omega_star: f64,
    pub mu_star: f64,
    pub lower_bound_theta2: f64,
    pub upper_bound_theta2: f64,
    /// Certified bracket did not close to `objective_tol`: either the block
    /// peaks sit at different frequencies or the sweep missed a peak.
    pub possible_missed_peak: bool,
    pub refinement_converged: bool,
    pub omega_max: f64,
    pub block_peaks: Vec<HinfNorm>,
    pub options: SweepOptions,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

/// `μ(ω) = ρ(diag(‖G_k(iω)‖²) · E∘²)` and the block gains.
pub fn mu_objective(sys: &CompositeSystem, omega: f64) -> Result<(f64, Vec<f64>)> {
    let gains = sys
        .blocks()
        .iter()
        .map(|b| b.block_gain(omega))
        .collect::<Result<Vec<f64>>>()?;
    let mu = weighted_perron(sys, &gains)?;
    Ok((mu, gains))
}

/// `diag(w²) · E∘²`.
pub(crate) fn coupled_gain_matrix(sys: &CompositeSystem, gains: &[f64]) -> Result<DenseMatrix> {
    let n = sys.len();
    let e = sys.coupling();
    let mut entries = Vec::with_capacity(n * n);
    for (i, g) in gains.iter().enumerate() {
        for j in 0..n {
            let eij = e.entry(i, j);
            entries.push(C64::new(g * g * eij * eij, 0.0));
        }
    }
    DenseMatrix::from_row_major(n, n, &entries)
}

fn weighted_perron(sys: &CompositeSystem, gains: &[f64]) -> Result<f64> {
    Ok(linalg::spectral_radius_nonneg(&coupled_gain_matrix(sys, gains)?)?.radius)
}

fn sweep_grid(sys: &CompositeSystem, opts: &SweepOptions, peaks: &[HinfNorm]) -> Result<(Vec<f64>, f64)> {
    let mut pole_moduli = Vec::new();
    let mut pole_freqs = Vec::new();
    for b in sys.blocks() {
        for p in b.poles()? {
            pole_moduli.push(p.norm());
            pole_freqs.push(p.im);
        }
    }
    let w_char_hi = pole_moduli.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let w_char_lo = pole_moduli.iter().copied().fold(f64::INFINITY, f64::min).max(w_char_hi * 1e-12);

    let scale = peaks.iter().map(|p| p.gamma_upper).fold(0.0, f64::max);
    let mut omega_max = w_char_hi;
    if scale > 0.0 {
        for b in sys.blocks() {
            omega_max = omega_max.max(b.tail_bound_frequency(opts.tail_epsilon * scale)?);
        }
    }
    omega_max = omega_max.max(10.0 * w_char_hi);

    let n_log = opts.grid_points / 2;
    let n_lin = opts.grid_points - n_log;
    let log_lo = (1e-3 * w_char_lo).ln();
    let log_hi = omega_max.ln();
    let lin_hi = omega_max.min(4.0 * w_char_hi);
    let mut pts = Vec::with_capacity(opts.grid_points + 2 * pole_freqs.len() + peaks.len() + 1);
    pts.push(0.0);
    for k in 0..n_log {
        let t = k as f64 / (n_log - 1) as f64;
        pts.push((log_lo + t * (log_hi - log_lo)).exp());
    }
    for k in 1..n_lin {
        pts.push(lin_hi * k as f64 / (n_lin - 1) as f64);
    }
    let real = sys.is_real();
    let mut seeds: Vec<f64> = pole_freqs.clone();
    seeds.extend(peaks.iter().map(|p| p.omega_peak));
    for w in seeds {
        if real {
            pts.push(w.abs());
        } else {
            pts.push(w);
        }
    }
    if !real {
        let mirrored: Vec<f64> = pts.iter().map(|w| -w).collect();
        pts.extend(mirrored);
    }
    pts.retain(|w| w.is_finite());
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|q, p| (*q - *p).abs() <= GRID_MERGE_RTOL * p.abs().max(q.abs()));
    Ok((pts, omega_max))
}

/// Computes Θ and its certified bracket.
pub fn compute_theta(sys: &CompositeSystem, opts: &SweepOptions) -> Result<RadiusReport> {
    opts.validate()?;
    let report = sys.validate();
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    let hinf_tol = HINF_DEFAULT_TOL.min(opts.objective_tol / 8.0);
    let peaks = sys
        .blocks()
        .iter()
        .map(|b| b.hinf_norm(hinf_tol))
        .collect::<Result<Vec<_>>>()?;
    let upper_gains: Vec<f64> = peaks.iter().map(|p| p.gamma_upper).collect();
    let upper = weighted_perron(sys, &upper_gains)?;

    let (grid, omega_max) = sweep_grid(sys, opts, &peaks)?;
    let samples: Vec<TracePoint> = grid
        .par_iter()
        .map(|&w| mu_objective(sys, w).map(|(mu, gains)| TracePoint { omega: w, mu, gains }))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = samples.clone();
    let mut best = samples
        .iter()
        .map(|s| (s.omega, s.mu))
        .fold((0.0, 0.0), |b, s| if s.1 > b.1 { s } else { b });
    let mut converged = true;

    let mut local_max: Vec<usize> = (0..samples.len())
        .filter(|&i| {
            let mu = samples[i].mu;
            let left = if i > 0 { samples[i - 1].mu } else { f64::NEG_INFINITY };
            let right = samples.get(i + 1).map_or(f64::NEG_INFINITY, |s| s.mu);
            mu > 0.0 && mu >= left && mu >= right
        })
        .collect();
    local_max.sort_by(|&i, &j| samples[j].mu.total_cmp(&samples[i].mu));
    local_max.truncate(MAX_REFINED_PEAKS);

    for i in local_max {
        let a = samples[i.saturating_sub(1)].omega;
        let b = samples[(i + 1).min(samples.len() - 1)].omega;
        if a == b {
            continue;
        }
        let mut visited = Vec::new();
        let res = golden::maximize(
            |w| {
                let (mu, gains) = mu_objective(sys, w)?;
                visited.push(TracePoint { omega: w, mu, gains });
                Ok::<f64, Error>(mu)
            },
            a,
            b,
            opts.refine_tol,
            GOLDEN_MAX_ITER,
            Some((samples[i].omega, samples[i].mu)),
        )?;
        converged &= res.converged;
        if res.fx > best.1 {
            best = (res.x, res.fx);
        }
        trace.extend(visited);
    }
    trace.sort_by(|p, q| p.omega.total_cmp(&q.omega));
    trace.dedup_by(|p, q| p.omega == q.omega);

    // Values within rounding of the maximum are ties; prefer the lowest |ω|.
    let floor = best.1 * (1.0 - PEAK_TIE_RTOL);
    let (omega_star, mu_star) = trace
        .iter()
        .filter(|p| p.mu >= floor)
        .map(|p| (p.omega, p.mu))
        .min_by(|p, q| p.0.abs().total_cmp(&q.0.abs()))
        .unwrap_or(best);
    let lower = mu_star;
    let upper = upper.max(lower);
    let theta = mu_star.sqrt();
    let radius = StabilityRadius::from_theta(theta);
    Ok(RadiusReport {
        theta,
        radius,
        radius_is_infinite: radius.is_infinite(),
        omega_star,
        mu_star,
        lower_bound_theta2: lower,
        upper_bound_theta2: upper,
        possible_missed_peak: upper - lower > opts.objective_tol * upper,
        refinement_converged: converged,
        omega_max,
        block_peaks: peaks,
        options: *opts,
        trace,
    })
}

/// `r(Σ, E) = 1/Θ`, infinite when `Θ = 0`.
pub fn stability_radius(sys: &CompositeSystem, opts: &SweepOptions) -> Result<RadiusReport> {
    compute_theta(sys, opts)
}

/// Writes the sweep trace as `omega,mu,gain_1,...,gain_N` with 17 significant digits.
pub fn write_trace_csv<W: Write>(report: &RadiusReport, n_blocks: usize, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Numerical(format!("writing trace: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["omega".to_string(), "mu".to_string()];
    header.extend((1..=n_blocks).map(|k| format!("gain_{k}")));
    w.write_record(&header).map_err(io)?;
    for p in &report.trace {
        let mut row = vec![format!("{:.16e}", p.omega), format!("{:.16e}", p.mu)];
        row.extend(p.gains.iter().map(|g| format!("{g:.16e}")));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Numerical(format!("writing trace: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnect::tests::{siso, two_block};
    use crate::interconnect::InterconnectionMatrix;
    use crate::system::StateSpaceBlock;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

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
    fn options_validation() {
        assert!(SweepOptions::default().validate().is_ok());
        let bad = SweepOptions { grid_points: 8, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SweepOptions { refine_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mu_examples() {
        let (mu, g) = mu_objective(&single(), 0.0).unwrap();
        assert_relative_eq!(mu, 1.0);
        assert_relative_eq!(g[0], 1.0);

        let (mu, g) = mu_objective(&two_block(), 0.0).unwrap();
        assert_relative_eq!(mu, 0.5, max_relative = 1e-14);
        assert_relative_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], 0.5);

        for w in [0.0, 0.7, 13.0] {
            assert_eq!(mu_objective(&acyclic(), w).unwrap().0, 0.0);
        }
    }

    #[test]
    fn mu_closed_form_two_block() {
        // μ(ω) = ((1+ω²)(4+ω²))^{-1/2}
        for w in [0.0f64, 0.1, 1.0, 3.0, 40.0] {
            let exact = 1.0 / ((1.0 + w * w) * (4.0 + w * w)).sqrt();
            assert_relative_eq!(mu_objective(&two_block(), w).unwrap().0, exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn theta_examples() {
        let opts = SweepOptions::default();
        let r = compute_theta(&single(), &opts).unwrap();
        assert_relative_eq!(r.theta, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.radius.finite().unwrap(), 1.0, max_relative = 1e-12);
        assert!(r.omega_star.abs() < 1e-6);

        let r = compute_theta(&two_block(), &opts).unwrap();
        assert_relative_eq!(r.theta, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.radius.finite().unwrap(), 2f64.sqrt(), max_relative = 1e-12);
        assert!(r.omega_star.abs() < 1e-6);
        assert!(!r.possible_missed_peak, "{} vs {}", r.lower_bound_theta2, r.upper_bound_theta2);
        assert!(r.lower_bound_theta2 <= r.upper_bound_theta2);
        assert_relative_eq!(r.theta * r.theta, r.mu_star, max_relative = 1e-15);

        let r = compute_theta(&acyclic(), &opts).unwrap();
        assert_eq!(r.theta, 0.0);
        assert!(r.radius.is_infinite());
        assert!(r.radius_is_infinite);
    }

    #[test]
    fn radius_scaling_examples() {
        let opts = SweepOptions::default();
        let r = stability_radius(&two_block().with_scaled_coupling(2.0).unwrap(), &opts).unwrap();
        assert_relative_eq!(r.radius.finite().unwrap(), 2f64.sqrt() / 2.0, max_relative = 1e-12);
        let r = stability_radius(&two_block().with_scaled_coupling(0.0).unwrap(), &opts).unwrap();
        assert!(r.radius.is_infinite());
    }

    #[test]
    fn resonant_blocks_found_between_grid_points() {
        let osc = |zeta: f64, w0: f64| {
            StateSpaceBlock::new(
                "osc",
                real(&[&[0.0, 1.0], &[-w0 * w0, -2.0 * zeta * w0]]),
                real(&[&[0.0], &[1.0]]),
                real(&[&[w0 * w0, 0.0]]),
            )
            .unwrap()
        };
        let sys = CompositeSystem::new(vec![osc(0.01, 3.0), osc(0.02, 7.0)], real(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let r = compute_theta(&sys, &SweepOptions::default()).unwrap();
        // brute force: the peak of μ on a very fine grid around both resonances
        let mut brute: f64 = 0.0;
        for k in 0..=200_000 {
            let w = 2.0 + 6.0 * k as f64 / 200_000.0;
            brute = brute.max(mu_objective(&sys, w).unwrap().0);
        }
        assert!(r.mu_star >= brute * (1.0 - 1e-9), "{} < {brute}", r.mu_star);
        assert!(r.mu_star <= r.upper_bound_theta2);
    }

    #[test]
    fn trace_csv_format() {
        let r = compute_theta(&two_block(), &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "omega,mu,gain_1,gain_2");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[0], 0.0);
        assert_relative_eq!(first[1], 0.5, max_relative = 1e-14);
        let omegas: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(omegas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mu_continuity_on_grid() {
        let sys = two_block();
        let r = compute_theta(&sys, &SweepOptions::default()).unwrap();
        let slope = |w: f64| {
            let h = 1e-6 * w.abs().max(1.0);
            let lo = (w - h).max(0.0);
            (mu_objective(&sys, w + h).unwrap().0 - mu_objective(&sys, lo).unwrap().0) / (w + h - lo)
        };
        for p in r.trace.windows(2) {
            let h = p[1].omega - p[0].omega;
            let d = slope(p[0].omega).abs().max(slope(p[1].omega).abs());
            assert!((p[1].mu - p[0].mu).abs() <= 10.0 * h * d + 1e-12);
        }
    }

    #[test]
    fn complex_system_sweeps_both_signs() {
        // G(s) = 1/(s + 1 - 2i) peaks at ω = 2, where the real-data shortcut would miss it
        let blk = StateSpaceBlock::new(
            "c",
            DenseMatrix::scalar(C64::new(-1.0, 2.0)).unwrap(),
            real(&[&[1.0]]),
            real(&[&[1.0]]),
        )
        .unwrap();
        let sys = CompositeSystem::new(vec![blk], real(&[&[1.0]])).unwrap();
        let r = compute_theta(&sys, &SweepOptions::default()).unwrap();
        assert_relative_eq!(r.theta, 1.0, max_relative = 1e-10);
        assert!((r.omega_star - 2.0).abs() < 1e-5);
        let (plus, _) = mu_objective(&sys, 2.0).unwrap();
        let (minus, _) = mu_objective(&sys, -2.0).unwrap();
        assert!(plus > 10.0 * minus);
    }

    fn random_system() -> impl Strategy<Value = CompositeSystem> {
        (1usize..4, any::<u64>()).prop_map(|(n, seed)| crate::generate::random_stable_system(
            &crate::generate::RandomStableParams { blocks: n, max_states: 4, max_inputs: 2, max_outputs: 2, margin: 0.2 },
            seed,
        ).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn mu_symmetric_for_real_systems(sys in random_system(), w in 0.0f64..20.0) {
            let a = mu_objective(&sys, w).unwrap().0;
            let b = mu_objective(&sys, -w).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn theta_homogeneous(sys in random_system(), c in 0.1f64..10.0) {
            let opts = SweepOptions::default();
            let t1 = compute_theta(&sys, &opts).unwrap().theta;
            let t2 = compute_theta(&sys.with_scaled_coupling(c).unwrap(), &opts).unwrap().theta;
            prop_assert!((t2 - c * t1).abs() <= 1e-8 * (c * t1).max(1e-300));
        }

        #[test]
        fn bracket_is_ordered(sys in random_system()) {
            let r = compute_theta(&sys, &SweepOptions::default()).unwrap();
            prop_assert!(r.lower_bound_theta2 <= r.upper_bound_theta2);
            prop_assert!((r.theta * r.theta - r.mu_star).abs() <= 1e-15 * r.mu_star);
        }

        #[test]
        fn theta_monotone_in_coupling(sys in random_system(), bump in prop::collection::vec(0.0f64..0.5, 9)) {
            let n = sys.len();
            let mut rows = sys.coupling().to_rows();
            for i in 0..n { for j in 0..n { rows[i][j] += bump[i * 3 + j]; } }
            let bigger = sys.with_coupling(InterconnectionMatrix::from_rows(&rows).unwrap()).unwrap();
            let opts = SweepOptions::default();
            let t = compute_theta(&sys, &opts).unwrap().theta;
            let t_big = compute_theta(&bigger, &opts).unwrap().theta;
            prop_assert!(t <= t_big + 1e-10);
        }
    }
}
