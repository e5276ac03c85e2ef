//! Command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 on a verification failure, 2 on
//! usage or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{derive_extension_matrices, energy_ledger, harmonic_by_words, harmonic_solve};
use crate::graph::build_vertex_graph;
use crate::io;
use crate::rational::{parse_rational, to_f64};
use crate::regularity::{
    grh_sweep, holder_exponent_fit, hr_sweep, RatioKind, Regime, RegularityReport, SweepOptions,
    DEFAULT_SAFETY_FACTOR,
};
use crate::sampling::{DataSweep, DEFAULT_SEED};
use crate::structure::{resolve_structure, PcfStructure};
use crate::verify::{
    certified_osc_bound, check_current_inequality, check_energy_contraction, check_total_current,
    matrix_power_scan, osc_scan,
};

#[derive(Debug, Parser, Serialize)]
#[command(name = "pcf-harmonic", version, about = "Harmonic functions and regularity estimates on p.c.f. self-similar sets")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Solve a Dirichlet problem on V_m and dump the harmonic function.
    Solve(SolveArgs),
    /// Run the current, contraction, oscillation and matrix-power checks.
    Verify(VerifyArgs),
    /// Reverse Hölder and Hölder-regularity sweeps.
    #[command(subcommand)]
    Regularity(RegularityCommand),
    /// Print the exponents of a structure.
    Info(InfoArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct StructureArg {
    /// Built-in name (sierpinski-gasket, vicsek) or path to a TOML config.
    #[arg(long, default_value = "sierpinski-gasket")]
    pub structure: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub structure: StructureArg,
    #[arg(short = 'm', long = "level", default_value_t = 3)]
    pub level: usize,
    /// Inline list (`1,0,1/2`) or path to a file of values. Non-numeric tokens
    /// are symbolic constants: equal symbols take equal values.
    #[arg(long)]
    pub boundary: String,
    /// Output directory.
    #[arg(long, default_value = "pcf-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub structure: StructureArg,
    #[arg(short = 'm', long = "level", default_value_t = 5)]
    pub level: usize,
    /// Threshold offset for the matrix-power scan, as `p/q` or decimal.
    #[arg(long, default_value = "1/3")]
    pub epsilon: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Random data in the oscillation sweep (besides the basis vectors).
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value = "pcf-out")]
    pub out: PathBuf,
    /// Directory for plot series.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum RegularityCommand {
    /// Reverse Hölder ratios on the cable system.
    Grh(GrhArgs),
    /// Hölder-regularity ratios on a bounded copy K_n.
    Hr(HrArgs),
    /// Fit the Hölder exponent from cell oscillations.
    Exponent(ExponentArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Comma-separated radii; defaults depend on the sweep.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 32)]
    pub centers: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SAFETY_FACTOR)]
    pub safety_factor: f64,
    /// Largest accepted |slope| of log max ratio against log r.
    #[arg(long, default_value_t = 0.1)]
    pub slope_tolerance: f64,
    /// CSV output path.
    #[arg(long, default_value = "regularity.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

impl SweepArgs {
    fn options(&self) -> SweepOptions {
        SweepOptions {
            radii: self.radii.clone(),
            trials: self.trials,
            centers: self.centers,
            seed: self.seed,
            safety_factor: self.safety_factor,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GrhArgs {
    #[command(flatten)]
    pub structure: StructureArg,
    /// Largest cable scale; radii run over rho^-1 .. rho^-(k-2).
    #[arg(short = 'k', long = "cable-scale", default_value_t = 7)]
    pub cable_scale: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum RegimeArg {
    Bounded,
    UnboundedTrunc,
}

#[derive(Debug, Args, Serialize)]
pub struct HrArgs {
    #[command(flatten)]
    pub structure: StructureArg,
    #[arg(short = 'm', long = "level", default_value_t = 8)]
    pub level: usize,
    /// Scale of the copy K_n = rho^-n K.
    #[arg(short = 'n', default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = RegimeArg::Bounded)]
    pub regime: RegimeArg,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub structure: StructureArg,
    #[arg(short = 'm', long = "level", default_value_t = 8)]
    pub level: usize,
    /// Accepted relative error against beta - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InfoArgs {
    #[command(flatten)]
    pub structure: StructureArg,
}

/// Failed checks, reported after all output is written.
#[derive(Debug, Default)]
struct Failures(Vec<String>);

impl Failures {
    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.0.push(message());
        }
    }

    fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Verification(self.0.join("; ")))
        }
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::Csv(_)
        | Error::Config(_)
        | Error::Rational(_)
        | Error::Invalid(_)
        | Error::InvalidSymbol { .. }
        | Error::LengthMismatch { .. }
        | Error::NotSymmetric { .. }
        | Error::NegativeConductance { .. }
        | Error::RowSumNonzero { .. }
        | Error::DegenerateLaplace
        | Error::WeightOutOfRange { .. }
        | Error::DuplicateBoundary(..)
        | Error::AmbiguousFixedPoint(..)
        | Error::UnidentifiedBoundary(_)
        | Error::NonUnitRatio(_)
        | Error::ExponentRange { .. }
        | Error::SizeCap { .. } => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Regularity(RegularityCommand::Grh(args)) => cmd_grh(args),
        Command::Regularity(RegularityCommand::Hr(args)) => cmd_hr(args),
        Command::Regularity(RegularityCommand::Exponent(args)) => cmd_exponent(args),
        Command::Info(args) => cmd_info(args),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn open(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    io::create(path)
        .map_err(|e| match e {
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
            other => other,
        })
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Parses boundary data from an inline list or a file.
pub fn parse_boundary(spec: &str) -> Result<Vec<f64>> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        std::fs::read_to_string(path)?
    } else if spec.contains(',') || parse_rational(spec.trim()).is_ok() {
        spec.to_string()
    } else {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("boundary file not found: {spec}"),
        )));
    };
    let mut symbols: Vec<String> = Vec::new();
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|token| match parse_rational(token) {
            Ok(q) => Ok(to_f64(&q)),
            Err(_) if token.chars().all(|c| c.is_alphanumeric() || c == '_') => {
                let k = symbols.iter().position(|s| s == token).unwrap_or_else(|| {
                    symbols.push(token.to_string());
                    symbols.len() - 1
                });
                Ok((k + 1) as f64)
            }
            Err(e) => Err(e),
        })
        .collect()
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    let data = parse_boundary(&args.boundary)?;
    if data.len() != s.boundary_len() {
        return Err(Error::LengthMismatch {
            expected: s.boundary_len(),
            got: data.len(),
        });
    }
    let g = build_vertex_graph(&s, args.level)?;
    let u = harmonic_solve(&g, &data)?;
    let e = derive_extension_matrices(&s)?;
    let words = harmonic_by_words(&g, &e, &data)?;
    let gap = u
        .values
        .iter()
        .zip(&words.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ledger = energy_ledger(&s, &g, &u.values)?;

    ensure_dir(&args.out)?;
    io::write_function_dump(open(&args.out.join("function.txt"))?, &g, &u.values)?;
    io::write_energy_ledger(open(&args.out.join("energy.csv"))?, &ledger)?;
    io::write_sidecar(open(&args.out.join("run.json"))?, "solve", s.to_config(), args)?;

    println!("structure {}", s.name);
    println!("level {} vertices {}", args.level, g.vertex_count());
    println!("energy {:.12}", u.energy());
    println!("boundary energy {:.12}", ledger.energies[0]);
    println!("residual {:.3e}", u.residual_norm);
    println!("method gap {gap:.3e}");
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    let epsilon = to_f64(&parse_rational(&args.epsilon)?);
    if args.level == 0 {
        return Err(Error::Invalid("verify needs level >= 1".into()));
    }
    let e = derive_extension_matrices(&s)?;
    println!("structure {}", s.name);
    println!("regularity residual {:.3e}", e.residual);
    let mut failures = Failures::default();

    for m in 1..=args.level {
        let current = check_current_inequality(&s, m)?;
        let total = check_total_current(&s, m)?;
        println!(
            "level {m}: current ratio {:.12} total-current defect {:.3e}",
            current.worst.ratio, total.worst_defect
        );
    }

    let contraction = check_energy_contraction(&s, &e, args.level)?;
    println!(
        "energy contraction sup {:.12} at word {}",
        contraction.sup, contraction.argmax
    );

    let sweep = DataSweep::new(s.boundary_len(), args.trials, args.seed);
    let osc = if s.is_homogeneous() {
        let osc = osc_scan(&s, &e, args.level, &sweep)?;
        println!("C_emp {:.12} (empirical lower bound for the optimal constant)", osc.c_emp);
        if let Some(bound) = certified_osc_bound(&s) {
            println!("certified bound {bound:.4}");
            failures.check(osc.c_emp <= bound, || {
                format!("C_emp {} exceeds the certified bound {bound}", osc.c_emp)
            });
        }
        println!(
            "oscillation slope {:.6} expected {:.6} relative error {:.3e}",
            osc.slope,
            osc.expected_slope,
            osc.slope_relative_error()
        );
        failures.check(args.level < 2 || osc.slope_relative_error() <= 0.02, || {
            format!("oscillation slope {} differs from log r = {}", osc.slope, osc.expected_slope)
        });
        failures.check(!osc.is_growing(), || "oscillation constant grows with the level".into());
        Some(osc)
    } else {
        println!("oscillation scan skipped: inhomogeneous weights");
        None
    };

    let powers = matrix_power_scan(&s, &e, epsilon)?;
    for m in &powers.maps {
        println!(
            "map {} fixes p{}: T = {}",
            m.map + 1,
            m.fixed + 1,
            m.threshold_power
        );
        failures.check(m.tail_decreasing(), || {
            format!("powers of map {} do not approach the fixed column monotonically", m.map + 1)
        });
    }
    println!(
        "T0 {} min entry at T0 {:.12} row-sum defect {:.3e}",
        powers.t0, powers.min_at_t0, powers.max_row_sum_defect
    );

    ensure_dir(&args.out)?;
    if let Some(osc) = &osc {
        io::write_osc_csv(open(&args.out.join("osc.csv"))?, osc)?;
    }
    io::write_power_csv(open(&args.out.join("powers.csv"))?, &powers)?;
    io::write_sidecar(open(&args.out.join("run.json"))?, "verify", s.to_config(), args)?;
    if let Some(dir) = &args.plot_data {
        ensure_dir(dir)?;
        if let Some(osc) = &osc {
            let points: Vec<(f64, f64)> = osc
                .levels
                .iter()
                .zip(&osc.worst_ratio)
                .map(|(&m, &r)| (m as f64, r))
                .collect();
            io::write_series(open(&dir.join("osc_worst_ratio.csv"))?, "level", "worst_ratio", &points)?;
        }
        for m in &powers.maps {
            let points: Vec<(f64, f64)> = m.trace.iter().map(|&(k, v)| (k as f64, v)).collect();
            let name = format!("power_map{}.csv", m.map + 1);
            io::write_series(open(&dir.join(name))?, "k", "min_entry", &points)?;
        }
    }
    failures.into_result()?;
    println!("all checks passed");
    Ok(())
}

fn report_sweep(s: &PcfStructure, report: &RegularityReport, args: &SweepArgs, command: &str, params: &impl Serialize) -> Result<()> {
    println!("structure {} regime {} ratio {}", s.name, report.regime.as_str(), report.kind.as_str());
    for (r, max) in report.radii.iter().zip(&report.max_by_radius) {
        println!("r {r} max ratio {max:.6}");
    }
    println!("slope {:.6}", report.slope);
    println!("max/median {:.3}", report.max_over_median);
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    io::write_regularity_csv(open(&args.out)?, report)?;
    io::write_sidecar(open(&sidecar_path(&args.out))?, command, s.to_config(), params)?;
    if let Some(dir) = &args.plot_data {
        ensure_dir(dir)?;
        let points: Vec<(f64, f64)> = report
            .radii
            .iter()
            .zip(&report.max_by_radius)
            .map(|(r, m)| (r.ln(), m.ln()))
            .collect();
        let name = format!("{}_log_max_ratio.csv", report.kind.as_str());
        io::write_series(open(&dir.join(name))?, "log_r", "log_max_ratio", &points)?;
    }
    let mut failures = Failures::default();
    failures.check(report.slope.abs() <= args.slope_tolerance, || {
        format!("slope {} outside ±{}", report.slope, args.slope_tolerance)
    });
    failures.into_result()
}

fn cmd_grh(args: &GrhArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    let report = grh_sweep(&s, args.cable_scale, &args.sweep.options())?;
    report_sweep(&s, &report, &args.sweep, "regularity grh", args)
}

fn cmd_hr(args: &HrArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    let regime = match args.regime {
        RegimeArg::Bounded => Regime::Bounded,
        RegimeArg::UnboundedTrunc => Regime::UnboundedTrunc,
    };
    let report = hr_sweep(&s, args.n, args.level, regime, &args.sweep.options())?;
    debug_assert_eq!(report.kind, RatioKind::Hr);
    report_sweep(&s, &report, &args.sweep, "regularity hr", args)
}

fn cmd_exponent(args: &ExponentArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    let fit = holder_exponent_fit(&s, args.level)?;
    println!("structure {}", s.name);
    println!("exponent {:.6} ± {:.2e}", fit.exponent, fit.stderr);
    println!("beta - alpha {:.6}", fit.expected);
    println!("relative error {:.3e}", fit.relative_error());
    let mut failures = Failures::default();
    failures.check(fit.relative_error() <= args.tolerance, || {
        format!("exponent {} misses beta - alpha = {}", fit.exponent, fit.expected)
    });
    failures.into_result()
}

fn cmd_info(args: &InfoArgs) -> Result<()> {
    let s = resolve_structure(&args.structure.structure)?;
    println!("structure {}", s.name);
    println!("maps {} boundary points {}", s.maps(), s.boundary_len());
    println!("rho {}", crate::rational::format_rational(&s.rho));
    match s.homogeneous_weight() {
        Some(r) => println!("r {}", crate::rational::format_rational(r)),
        None => println!(
            "r {}",
            s.weights
                .iter()
                .map(crate::rational::format_rational)
                .collect::<Vec<_>>()
                .join(",")
        ),
    }
    println!("alpha {:.6}", s.alpha);
    println!("beta {:.6}", s.beta);
    println!("beta - alpha {:.6}", s.holder_exponent());
    Ok(())
}
