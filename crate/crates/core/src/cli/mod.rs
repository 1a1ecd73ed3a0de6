//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 verification
//! violation, 4 numerical non-convergence.

pub mod files;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::generate::{self, CouplingPattern, HeatChainParams, RandomStableParams};
use crate::interconnect::CompositeSystem;
use crate::radius::{self, RadiusReport, SweepOptions};
use crate::verify::{self, MonteCarloOptions, NormKind};
use crate::worstcase;
use files::{sha256_hex, CertificateRecord, OvershootRecord, ResultFile, SystemFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "stabrad", version, about = "Stability radius of interconnected LTI systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Number of frequency grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Relative tolerance on Θ² used for the certified bracket.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    #[value(name = "norm_2inf")]
    Norm2Inf,
    #[value(name = "opnorm")]
    Opnorm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GenerateKind {
    #[value(name = "heat_chain")]
    HeatChain,
    #[value(name = "random_stable")]
    RandomStable,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PatternArg {
    Ring,
    Line,
    Dense,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute Θ and the stability radius r = 1/Θ.
    Radius {
        path: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Result file (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Construct and certify the worst-case perturbation at ω*.
    Worstcase {
        path: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Build at this frequency instead of ω*.
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<f64>,
        /// Also report the spectral abscissa under (1 + ε)Δ*.
        #[arg(long)]
        overshoot: Option<f64>,
    },
    /// Monte Carlo check that perturbations below the radius keep stability.
    Verify {
        path: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Perturbation size as a fraction of r.
        #[arg(long, default_value_t = 0.99)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "norm_2inf")]
        norm: NormArg,
        /// Add the worst-case direction to the samples; allows fraction ≥ 1.
        #[arg(long)]
        inject_worst_case: bool,
    },
    /// Write the μ(ω) sweep trace as CSV.
    Sweep {
        path: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an example system file.
    Generate {
        #[arg(value_enum)]
        kind: GenerateKind,
        /// Interior grid points per rod (heat_chain).
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        /// Coupling pattern (heat_chain).
        #[arg(long, value_enum, default_value = "ring")]
        pattern: PatternArg,
        #[arg(long, default_value_t = 4)]
        max_states: usize,
        #[arg(long, default_value_t = 2)]
        max_inputs: usize,
        #[arg(long, default_value_t = 2)]
        max_outputs: usize,
        /// Spectral abscissa margin (random_stable).
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// System file output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A message with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Input(_) | Error::Validation(_) | Error::NotStable { .. } | Error::Degenerate(_) => EXIT_INPUT,
            Error::Singular { .. } | Error::Numerical(_) => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

struct Loaded {
    file: SystemFile,
    system: CompositeSystem,
    sha256: String,
    path: String,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Failure::input(format!("{} is not UTF-8: {e}", path.display())))?;
    let file = SystemFile::parse(text)?;
    let system = file.to_system()?;
    Ok(Loaded {
        file,
        system,
        sha256: sha256_hex(&bytes),
        path: path.display().to_string(),
    })
}

fn sweep_options(file: &SystemFile, args: &SweepArgs) -> Result<SweepOptions, Failure> {
    let mut opts = file.options.unwrap_or_default();
    if let Some(g) = args.grid {
        opts.grid_points = g;
    }
    if let Some(t) = args.tol {
        opts.objective_tol = t;
    }
    opts.validate()?;
    Ok(opts)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

struct Session {
    loaded: Loaded,
    opts: SweepOptions,
    report: RadiusReport,
    timings: BTreeMap<String, f64>,
}

impl Session {
    fn open(path: &Path, sweep: &SweepArgs) -> Result<Self, Failure> {
        let t = Instant::now();
        let loaded = load(path)?;
        let opts = sweep_options(&loaded.file, sweep)?;
        let mut timings = BTreeMap::new();
        timings.insert("parse".to_string(), ms(t));
        let t = Instant::now();
        let report = radius::stability_radius(&loaded.system, &opts)?;
        timings.insert("radius".to_string(), ms(t));
        if report.possible_missed_peak {
            eprintln!(
                "warning: certified bracket on Θ² is [{:e}, {:e}]; a sharper peak may exist",
                report.lower_bound_theta2, report.upper_bound_theta2
            );
        }
        Ok(Session {
            loaded,
            opts,
            report,
            timings,
        })
    }

    fn result(self, command: &str) -> ResultFile {
        ResultFile {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            input_path: self.loaded.path,
            input_sha256: self.loaded.sha256,
            options: self.opts,
            radius: self.report,
            worst_case: None,
            monte_carlo: None,
            timings_ms: self.timings,
        }
    }

    fn finite_radius(&self, what: &str) -> Result<f64, Failure> {
        self.report.radius.finite().ok_or_else(|| {
            Failure::input(format!(
                "the stability radius is inf (Θ = 0, the coupling graph has no cycles): {what}"
            ))
        })
    }
}

fn emit(result: &ResultFile, out: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(result).map_err(|e| Failure::input(e.to_string()))?;
        write_file(path, &text)?;
    }
    Ok(())
}

fn convergence_code(report: &RadiusReport) -> i32 {
    if report.refinement_converged {
        EXIT_OK
    } else {
        eprintln!("warning: golden-section refinement did not converge");
        EXIT_NUMERICAL
    }
}

fn cmd_radius(path: &Path, sweep: &SweepArgs, out: Option<&Path>) -> CmdResult {
    let s = Session::open(path, sweep)?;
    println!("theta = {}", s.report.theta);
    println!("radius = {}", s.report.radius);
    println!("omega_star = {}", s.report.omega_star);
    let code = convergence_code(&s.report);
    emit(&s.result("radius"), out)?;
    Ok(code)
}

fn cmd_worstcase(path: &Path, sweep: &SweepArgs, out: Option<&Path>, omega: Option<f64>, overshoot: Option<f64>) -> CmdResult {
    let s = Session::open(path, sweep)?;
    s.finite_radius("no destabilizing perturbation exists")?;
    let omega0 = omega.unwrap_or(s.report.omega_star);
    let t = Instant::now();
    let cert = worstcase::construct_delta(&s.loaded.system, omega0)?;
    let over = match overshoot {
        Some(eps) => Some(OvershootRecord {
            factor: 1.0 + eps,
            abscissa: worstcase::overshoot_abscissa(&s.loaded.system, &cert.delta, eps)?,
        }),
        None => None,
    };
    let elapsed = ms(t);
    println!("omega0 = {}", cert.omega0);
    println!("norm_2inf = {}", cert.norm_2inf);
    println!("target_radius = {}", cert.target_radius);
    println!("eigenvalue = {} + {}i", cert.closed_loop_eig.re, cert.closed_loop_eig.im);
    println!("eig_residual = {:e}", cert.eig_residual);
    if let Some(o) = over {
        println!("overshoot_abscissa = {:e}", o.abscissa);
    }
    println!("certified = {}", cert.certified);
    let mut code = convergence_code(&s.report);
    if let Some(msg) = &cert.failure {
        eprintln!("certificate failed: {msg}");
        code = EXIT_NUMERICAL;
    }
    let record = CertificateRecord::new(&cert, over);
    let mut result = s.result("worstcase");
    result.timings_ms.insert("worst_case".to_string(), elapsed);
    result.worst_case = Some(record);
    emit(&result, out)?;
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    path: &Path,
    sweep: &SweepArgs,
    out: Option<&Path>,
    samples: usize,
    fraction: f64,
    seed: u64,
    norm: NormArg,
    inject: bool,
) -> CmdResult {
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Failure::input(format!("--fraction must be positive, got {fraction}")));
    }
    if fraction >= 1.0 && !inject {
        return Err(Failure::input(format!(
            "--fraction {fraction} is not below the radius; pass --inject-worst-case to probe above it"
        )));
    }
    if samples == 0 {
        return Err(Failure::input("--samples must be at least 1"));
    }
    let s = Session::open(path, sweep)?;
    let r = s.finite_radius("every perturbation leaves the system stable")?;
    let mut opts = MonteCarloOptions::new(samples, fraction, seed);
    opts.norm_kind = match norm {
        NormArg::Norm2Inf => NormKind::Norm2Inf,
        NormArg::Opnorm => NormKind::Opnorm,
    };
    let t = Instant::now();
    let mut cert = None;
    if inject {
        let c = worstcase::construct_delta(&s.loaded.system, s.report.omega_star)?;
        opts.inject = Some(c.delta.clone());
        cert = Some(CertificateRecord::new(&c, None));
    }
    let mc = if fraction < 1.0 {
        verify::monte_carlo_stability(&s.loaded.system, &s.report, &opts)?
    } else {
        verify::sample_at_norm(&s.loaded.system, fraction * r, fraction, &opts)?
    };
    let elapsed = ms(t);
    println!("samples = {}", mc.samples);
    println!("target_norm = {}", mc.target_norm);
    println!("violations = {}", mc.violations);
    println!("worst_abscissa = {:e}", mc.worst_abscissa);
    let code = if mc.violations > 0 {
        eprintln!("{} perturbation(s) of norm {} destabilized the system", mc.violations, mc.target_norm);
        EXIT_VIOLATION
    } else {
        convergence_code(&s.report)
    };
    let mut result = s.result("verify");
    result.timings_ms.insert("verify".to_string(), elapsed);
    result.worst_case = cert;
    result.monte_carlo = Some(mc);
    emit(&result, out)?;
    Ok(code)
}

fn cmd_sweep(path: &Path, sweep: &SweepArgs, out: Option<&Path>) -> CmdResult {
    let s = Session::open(path, sweep)?;
    let n = s.loaded.system.len();
    match out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| Failure::input(format!("cannot write {}: {e}", p.display())))?;
            radius::write_trace_csv(&s.report, n, io::BufWriter::new(f))?;
        }
        None => radius::write_trace_csv(&s.report, n, io::stdout().lock())?,
    }
    Ok(convergence_code(&s.report))
}

fn cmd_generate(cmd: &Command) -> CmdResult {
    let Command::Generate {
        kind,
        points,
        blocks,
        pattern,
        max_states,
        max_inputs,
        max_outputs,
        margin,
        seed,
        out,
    } = cmd
    else {
        unreachable!("cmd_generate called with another command")
    };
    let sys = match kind {
        GenerateKind::HeatChain => generate::heat_chain_system(&HeatChainParams {
            interior_points: *points,
            blocks: *blocks,
            pattern: match pattern {
                PatternArg::Ring => CouplingPattern::Ring,
                PatternArg::Line => CouplingPattern::Line,
                PatternArg::Dense => CouplingPattern::Dense,
            },
        })?,
        GenerateKind::RandomStable => generate::random_stable_system(
            &RandomStableParams {
                blocks: *blocks,
                max_states: *max_states,
                max_inputs: *max_inputs,
                max_outputs: *max_outputs,
                margin: *margin,
            },
            *seed,
        )?,
    };
    let text = SystemFile::from_system(&sys, None).to_json();
    match out {
        Some(p) => write_file(p, &text)?,
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Failure::input(e.to_string()))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Radius { path, sweep, out } => cmd_radius(path, sweep, out.as_deref()),
        Command::Worstcase {
            path,
            sweep,
            out,
            omega,
            overshoot,
        } => cmd_worstcase(path, sweep, out.as_deref(), *omega, *overshoot),
        Command::Verify {
            path,
            sweep,
            out,
            samples,
            fraction,
            seed,
            norm,
            inject_worst_case,
        } => cmd_verify(path, sweep, out.as_deref(), *samples, *fraction, *seed, *norm, *inject_worst_case),
        Command::Sweep { path, sweep, out } => cmd_sweep(path, sweep, out.as_deref()),
        cmd @ Command::Generate { .. } => cmd_generate(cmd),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
