//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::time::Instant;

use stabrad::cli::files::SystemFile;
use stabrad::generate::{random_stable_system, RandomStableParams};
use stabrad::interconnect::{self, CompositeSystem, InterconnectionMatrix};
use stabrad::linalg::{self, DenseMatrix, C64};
use stabrad::radius::{mu_objective, stability_radius, RadiusReport, SweepOptions};
use stabrad::verify::{brute_force_radius, monte_carlo_stability, scaling_check, MonteCarloOptions, NormKind};
use stabrad::worstcase::{construct_delta, overshoot_abscissa};

/// Heat chain (10 interior points, 3 rods, ring) radius, pinned from the
/// brute-force oracle with the worst-case direction injected.
const HEAT_CHAIN_RING_RADIUS: f64 = 1331.0;

const MC_SAMPLES: usize = 10_000;
const RANDOM_SYSTEMS: u64 = 20;
const RANDOM_DIRECTIONS: usize = 512;
/// Relative slack for the bisection along rays in the sandwich check.
const RAY_SLACK: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn load(name: &str) -> CompositeSystem {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    SystemFile::parse(&std::fs::read_to_string(p).unwrap()).unwrap().to_system().unwrap()
}

/// Fixtures with a finite radius.
fn finite_fixtures() -> Vec<(String, CompositeSystem)> {
    ["single_block.json", "two_block.json", "heat_chain_ring.json", "heat_chain_line.json"]
        .iter()
        .map(|n| (n.to_string(), load(n)))
        .collect()
}

fn random_systems() -> Vec<(String, CompositeSystem)> {
    (0..RANDOM_SYSTEMS)
        .map(|i| {
            let p = RandomStableParams {
                blocks: 1 + (i as usize % 4),
                max_states: 6,
                max_inputs: 3,
                max_outputs: 3,
                margin: 0.2,
            };
            (format!("random_stable[{i}]"), random_stable_system(&p, 9000 + i).unwrap())
        })
        .collect()
}

fn suite() -> Vec<(String, CompositeSystem)> {
    let mut v = finite_fixtures();
    v.extend(random_systems());
    v
}

fn radius_of(sys: &CompositeSystem) -> RadiusReport {
    stability_radius(sys, &SweepOptions::default()).unwrap()
}

fn real(rows: &[&[f64]]) -> DenseMatrix {
    DenseMatrix::from_real_rows(rows).unwrap()
}

fn closed_loop_eigs(sys: &CompositeSystem, delta: &interconnect::BlockPerturbation) -> Vec<C64> {
    linalg::eigenvalues(&interconnect::closed_loop_matrix(sys, delta).unwrap()).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let sys = load("single_block.json");
    let rep = radius_of(&sys);
    let cert = construct_delta(&sys, rep.omega_star).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed().as_secs_f64();
    let r = rep.radius.finite().ok_or("radius infinite")?;
    check((r - 1.0).abs() <= 1e-7, format!("r = {r}"))?;
    let d = cert.delta.block(0, 0).get(0, 0);
    check((d - C64::new(1.0, 0.0)).norm() <= 1e-10, format!("Δ = {d}"))?;
    check(cert.closed_loop_eig.norm() <= 1e-10, format!("eigenvalue {}", cert.closed_loop_eig))?;
    check(cert.eig_residual < 1e-10, format!("residual {:e}", cert.eig_residual))?;
    check(elapsed < 1.0, format!("runtime {elapsed:.3} s"))?;
    Ok(format!("r = {r}, Δ = {}, residual {:.1e}, {elapsed:.3} s", d.re, cert.eig_residual))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let sys = load("two_block.json");
    let rep = radius_of(&sys);
    let cert = construct_delta(&sys, rep.omega_star).map_err(|e| e.to_string())?;
    let eigs = closed_loop_eigs(&sys, &cert.delta);
    let elapsed = t.elapsed().as_secs_f64();
    let r = rep.radius.finite().ok_or("radius infinite")?;
    check((rep.theta - 0.5f64.sqrt()).abs() <= 1e-7, format!("Θ = {}", rep.theta))?;
    check((r - 2f64.sqrt()).abs() <= 1e-6, format!("r = {r}"))?;
    check(rep.omega_star.abs() <= 1e-6, format!("ω* = {}", rep.omega_star))?;
    check((cert.norm_2inf - 2f64.sqrt()).abs() <= 1e-6, format!("‖Δ‖ = {}", cert.norm_2inf))?;
    for want in [0.0, -3.0] {
        let d = eigs.iter().map(|z| (z - C64::new(want, 0.0)).norm()).fold(f64::INFINITY, f64::min);
        check(d <= 1e-8, format!("no eigenvalue within 1e-8 of {want}: {eigs:?}"))?;
    }
    check(elapsed < 1.0, format!("runtime {elapsed:.3} s"))?;
    Ok(format!(
        "Θ = {:.10}, r = {r:.10}, ω* = {:.1e}, ‖Δ‖₂,∞ = {:.10}, {elapsed:.3} s",
        rep.theta, rep.omega_star, cert.norm_2inf
    ))
}

fn criterion_3() -> Outcome {
    let sys = load("acyclic.json");
    check(
        sys.coupling().to_rows() == vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        "fixture coupling changed",
    )?;
    let rep = radius_of(&sys);
    check(rep.radius.is_infinite() && rep.radius_is_infinite, format!("radius {}", rep.radius))?;
    check(rep.theta == 0.0, format!("Θ = {}", rep.theta))?;
    check(construct_delta(&sys, 0.0).is_err(), "worst case constructed for an acyclic graph")?;
    let brute = brute_force_radius(&sys, NormKind::Norm2Inf, 64, 1, None).map_err(|e| e.to_string())?;
    check(brute.capped, format!("a random direction destabilized at {}", brute.radius))?;
    Ok(format!("radius = {}, brute force capped on all {} directions", rep.radius, brute.directions))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let systems = suite();
    for (i, (name, sys)) in systems.iter().enumerate() {
        let rep = radius_of(sys);
        let mc = monte_carlo_stability(sys, &rep, &MonteCarloOptions::new(MC_SAMPLES, 0.99, 100 + i as u64))
            .map_err(|e| format!("{name}: {e}"))?;
        check(mc.violations == 0, format!("{name}: {} violations at 0.99 r", mc.violations))?;
        worst = worst.max(mc.worst_abscissa);
    }
    let elapsed = t.elapsed().as_secs_f64();
    check(elapsed < 60.0, format!("runtime {elapsed:.1} s"))?;
    Ok(format!(
        "{} systems × {MC_SAMPLES} samples, 0 violations, worst abscissa {worst:.2e}, {elapsed:.1} s",
        systems.len()
    ))
}

fn criterion_5() -> Outcome {
    let mut worst_norm: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    let mut min_over = f64::INFINITY;
    let systems = suite();
    for (name, sys) in &systems {
        let rep = radius_of(sys);
        let cert = construct_delta(sys, rep.omega_star).map_err(|e| format!("{name}: {e}"))?;
        let target = 1.0 / rep.theta;
        let rel = (cert.norm_2inf - target).abs() / target;
        let eig = (cert.closed_loop_eig - C64::new(0.0, rep.omega_star)).norm();
        let over = overshoot_abscissa(sys, &cert.delta, 1e-3).map_err(|e| format!("{name}: {e}"))?;
        check(rel <= 1e-5, format!("{name}: ‖Δ*‖ off by {rel:e}"))?;
        check(eig <= 1e-7, format!("{name}: eigenvalue {eig:e} from iω*"))?;
        check(over >= -1e-6, format!("{name}: abscissa {over:e} under 1.001 Δ*"))?;
        worst_norm = worst_norm.max(rel);
        worst_eig = worst_eig.max(eig);
        min_over = min_over.min(over);
    }
    Ok(format!(
        "{} systems, max norm gap {worst_norm:.1e}, max |λ − iω*| {worst_eig:.1e}, min overshoot abscissa {min_over:.1e}",
        systems.len()
    ))
}

fn criterion_6() -> Outcome {
    let mut worst_inj: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    let systems = suite();
    for (i, (name, sys)) in systems.iter().enumerate() {
        let rep = radius_of(sys);
        let r = 1.0 / rep.theta;
        let cert = construct_delta(sys, rep.omega_star).map_err(|e| format!("{name}: {e}"))?;
        let inj = brute_force_radius(sys, NormKind::Norm2Inf, 0, 1, Some(&cert.delta)).map_err(|e| format!("{name}: {e}"))?;
        let injected = inj.injected_radius.ok_or("no injected estimate")?;
        let rel = (injected - r).abs() / r;
        check(rel <= 1e-5, format!("{name}: injected ray gives {injected}, 1/Θ = {r}"))?;
        let random = brute_force_radius(sys, NormKind::Norm2Inf, RANDOM_DIRECTIONS, 500 + i as u64, None)
            .map_err(|e| format!("{name}: {e}"))?;
        check(
            random.radius >= r * (1.0 - RAY_SLACK),
            format!("{name}: random direction destabilized at {} < 1/Θ = {r}", random.radius),
        )?;
        worst_inj = worst_inj.max(rel);
        min_ratio = min_ratio.min(random.radius / r);
    }
    Ok(format!(
        "{} systems, injected max gap {worst_inj:.1e}, random/radius min {min_ratio:.4}",
        systems.len()
    ))
}

fn criterion_7() -> Outcome {
    let opts = SweepOptions::default();
    let systems = suite();
    for (name, sys) in &systems {
        for c in [0.5, 2.0, 10.0] {
            check(scaling_check(sys, c, &opts).map_err(|e| e.to_string())?, format!("{name}: r(cE) ≠ r(E)/c for c = {c}"))?;
        }
    }
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let p = RandomStableParams {
            blocks: 2 + (i as usize % 3),
            max_states: 4,
            max_inputs: 2,
            max_outputs: 2,
            margin: 0.2,
        };
        let sys = random_stable_system(&p, 20_000 + i).unwrap();
        let bump = random_stable_system(&p, 30_000 + i).unwrap();
        let rows: Vec<Vec<f64>> = sys
            .coupling()
            .to_rows()
            .iter()
            .zip(bump.coupling().to_rows())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + 0.5 * y).collect())
            .collect();
        let bigger = sys.with_coupling(InterconnectionMatrix::from_rows(&rows).unwrap()).unwrap();
        let r = radius_of(&sys).radius.finite().ok_or("random radius infinite")?;
        let rb = radius_of(&bigger).radius.finite().ok_or("random radius infinite")?;
        check(rb <= r * (1.0 + opts.objective_tol), format!("seed {i}: r grew from {r} to {rb}"))?;
        worst = worst.max(rb / r);
        pairs += 1;
    }
    Ok(format!(
        "homogeneity on {} systems × 3 factors, {pairs} monotone pairs (max r'/r = {worst:.4})",
        systems.len()
    ))
}

/// Maximum of the SISO/MIMO gain found by a dense log grid and local
/// ternary refinement, without any Hamiltonian information.
fn grid_peak(sys: &CompositeSystem) -> f64 {
    let f = |w: f64| mu_objective(sys, w).unwrap().0;
    let n = 20_000;
    let pts: Vec<f64> = std::iter::once(0.0)
        .chain((0..n).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / (n - 1) as f64)))
        .collect();
    let vals: Vec<f64> = pts.iter().map(|&w| f(w)).collect();
    let mut best = vals.iter().copied().fold(0.0, f64::max);
    for k in 1..pts.len() - 1 {
        if vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1] {
            let (mut a, mut b) = (pts[k - 1], pts[k + 1]);
            for _ in 0..200 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if f(m1) < f(m2) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            best = best.max(f(0.5 * (a + b)));
        }
    }
    best.sqrt()
}

fn criterion_8() -> Outcome {
    let mut worst_sweep: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for i in 0..20u64 {
        let p = RandomStableParams {
            blocks: 1,
            max_states: 6,
            max_inputs: if i % 2 == 0 { 1 } else { 3 },
            max_outputs: if i % 2 == 0 { 1 } else { 3 },
            margin: 0.05 + 0.05 * (i % 4) as f64,
        };
        let sys = random_stable_system(&p, 40_000 + i).unwrap();
        let sys = sys.with_coupling(InterconnectionMatrix::new(real(&[&[1.0]])).unwrap()).unwrap();
        let hinf = sys.block(0).hinf_norm(1e-12).map_err(|e| e.to_string())?.gamma;
        let inv_r = 1.0 / radius_of(&sys).radius.finite().ok_or("radius infinite")?;
        let grid = grid_peak(&sys);
        let rel_sweep = (inv_r - hinf).abs() / hinf;
        let rel_grid = (grid - hinf).abs() / hinf;
        check(rel_sweep <= 1e-7, format!("seed {i}: 1/r = {inv_r}, H∞ = {hinf}"))?;
        check(rel_grid <= 1e-7, format!("seed {i}: grid peak {grid}, H∞ = {hinf}"))?;
        worst_sweep = worst_sweep.max(rel_sweep);
        worst_grid = worst_grid.max(rel_grid);
    }
    Ok(format!(
        "20 blocks, |1/r − H∞| ≤ {worst_sweep:.1e}, independent grid peak vs H∞ ≤ {worst_grid:.1e} (relative)"
    ))
}

fn criterion_9() -> Outcome {
    let sys = load("heat_chain_ring.json");
    let rep = radius_of(&sys);
    let r = rep.radius.finite().ok_or("radius infinite")?;
    check(r > 0.0, format!("r = {r}"))?;
    let cert = construct_delta(&sys, rep.omega_star).map_err(|e| e.to_string())?;
    let oracle = brute_force_radius(&sys, NormKind::Norm2Inf, 0, 1, Some(&cert.delta))
        .map_err(|e| e.to_string())?
        .injected_radius
        .ok_or("no injected estimate")?;
    check((r - oracle).abs() <= 1e-4 * oracle, format!("r = {r}, oracle = {oracle}"))?;
    check(
        (oracle - HEAT_CHAIN_RING_RADIUS).abs() <= 1e-4 * HEAT_CHAIN_RING_RADIUS,
        format!("oracle {oracle} drifted from pinned {HEAT_CHAIN_RING_RADIUS}"),
    )?;
    check(
        (r - HEAT_CHAIN_RING_RADIUS).abs() <= 1e-4 * HEAT_CHAIN_RING_RADIUS,
        format!("r {r} drifted from pinned {HEAT_CHAIN_RING_RADIUS}"),
    )?;
    Ok(format!("r = {r}, oracle = {oracle}, pinned {HEAT_CHAIN_RING_RADIUS}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("single-block closed form", criterion_1),
        ("two-block closed form", criterion_2),
        ("acyclic coupling has infinite radius", criterion_3),
        ("Monte Carlo below the radius", criterion_4),
        ("worst-case tightness", criterion_5),
        ("brute-force oracle sandwich", criterion_6),
        ("homogeneity and monotonicity", criterion_7),
        ("N = 1 matches the H∞ norm", criterion_8),
        ("heat chain regression", criterion_9),
    ];
    let mut failed = 0;
    for (k, (title, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS [{title}] {detail} ({secs:.2} s)", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL [{title}] {why} ({secs:.2} s)", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
