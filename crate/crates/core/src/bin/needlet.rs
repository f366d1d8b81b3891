use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use needlet::bench::{calibrate_kappa, run_bench, BenchPlan, TruthMode};
use needlet::besov::{besov_seminorm, generate_besov_function, BesovParams};
use needlet::config::{pick, read_map, value_as_exponent, values_on_grid, write_map, RunConfig};
use needlet::cubature::DEFAULT_POINT_CAP;
use needlet::needlet::{analyze, synthesize, write_atomic, CoefficientPyramid, LpExponent, NeedletSystem, PyramidFormat};
use needlet::observation::{sample_noisy_pyramid, ObservationModel};
use needlet::threshold::{
    build_partitions, denoise, quoted_zone_boundary, rate_zone, theoretical_rate, zone_boundary, EstimatorConfig,
    DEFAULT_ETA, DEFAULT_KAPPA, DEFAULT_P_STAT,
};
use needlet::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

/// Spherical needlet frames and block-thresholding estimation.
#[derive(Parser, Debug)]
#[command(name = "needlet", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a frame and print per-level point counts and weight diagnostics.
    Frame(FrameArgs),
    /// Needlet coefficients of a map sampled on the analysis grid.
    Analyze(AnalyzeArgs),
    /// Evaluate the function of a coefficient pyramid at target points.
    Synth(SynthArgs),
    /// Draw a random function from a Besov ball as a clean pyramid.
    Generate(GenerateArgs),
    /// Add white observation noise at sample size n to a clean pyramid.
    Observe(ObserveArgs),
    /// Block-threshold a noisy pyramid.
    Denoise(DenoiseArgs),
    /// Monte Carlo risk across a grid of sample sizes.
    Bench(BenchArgs),
    /// Smallest threshold constant with pure-noise exceedance below gamma.
    Calibrate(CalibrateArgs),
    /// Theoretical rate exponent for (r, pi, p).
    Rate(RateArgs),
}

#[derive(Args, Debug)]
struct FrameArgs {
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    j_max: Option<usize>,
    /// Write the analysis grid as a map CSV with zero values.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[arg(long)]
    point_cap: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for PyramidFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => PyramidFormat::Text,
            FormatArg::Binary => PyramidFormat::Binary,
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Map CSV (theta,phi,value) on the analysis grid of the frame.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    j_max: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Coefficient pyramid file.
    #[arg(long)]
    input: PathBuf,
    /// CSV with theta,phi columns; defaults to the analysis grid.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    /// Number or `inf`.
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    j_max: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct ObserveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    n: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Sample size; sets J_n and t_n.
    #[arg(long)]
    n: Option<f64>,
    /// Threshold constant; `inf` kills every block.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    p_stat: Option<u32>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Args, Debug, Default)]
struct PlanArgs {
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    /// Number or `inf`.
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    m: Option<f64>,
    /// Loss exponent, number or `inf`.
    #[arg(long)]
    loss_p: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<f64>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    p_stat: Option<u32>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// `redraw` or `fixed`.
    #[arg(long)]
    truth_mode: Option<String>,
    #[arg(long)]
    truth_depth: Option<usize>,
    #[arg(long)]
    point_cap: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Risk table CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full text report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Exit with status 3 unless the fitted slope is within tolerance of the theory.
    #[arg(long)]
    assert_rate: bool,
    /// Relative slope tolerance for --assert-rate.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Target exceedance probability.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct RateArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    pi: f64,
    /// Loss exponent, number or `inf`.
    #[arg(long)]
    p: String,
}

enum Failure {
    Lib(Error),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::ResourceCap { .. } => ExitCode::from(EXIT_RESOURCE),
                _ => ExitCode::from(EXIT_VALIDATION),
            }
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("NEEDLET_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidParameter {
            name: "NEEDLET_THREADS",
            reason: format!("`{raw}` is not a positive integer"),
        })?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = pick(cli.seed, file.seed, 1);
    match cli.command {
        Command::Frame(a) => cmd_frame(a, &file),
        Command::Analyze(a) => cmd_analyze(a, &file),
        Command::Synth(a) => cmd_synth(a),
        Command::Generate(a) => cmd_generate(a, &file, seed),
        Command::Observe(a) => cmd_observe(a, seed),
        Command::Denoise(a) => cmd_denoise(a, &file),
        Command::Bench(a) => cmd_bench(a, &file, seed),
        Command::Calibrate(a) => cmd_calibrate(a, &file, seed),
        Command::Rate(a) => cmd_rate(a),
    }
}

fn frame_params(bandwidth: Option<f64>, j_max: Option<usize>, file: &RunConfig) -> (f64, usize) {
    (pick(bandwidth, file.frame.bandwidth, 2.0), pick(j_max, file.frame.j_max, 4))
}

fn parse_exponent(name: &'static str, raw: &str) -> CliResult<f64> {
    Ok(value_as_exponent(name, &toml::Value::String(raw.trim().to_string()))?)
}

fn system_for(pyr: &CoefficientPyramid) -> CliResult<NeedletSystem> {
    if pyr.levels.is_empty() {
        return Err(Error::EmptyInput("pyramid has no levels").into());
    }
    let sys = NeedletSystem::new(pyr.bandwidth, pyr.j_max())?;
    sys.check_pyramid(pyr)?;
    Ok(sys)
}

fn cmd_frame(a: FrameArgs, file: &RunConfig) -> CliResult<()> {
    let (bandwidth, j_max) = frame_params(a.bandwidth, a.j_max, file);
    let cap = a.point_cap.unwrap_or(DEFAULT_POINT_CAP);
    let sys = NeedletSystem::with_point_cap(bandwidth, j_max, cap)?;
    println!("bandwidth {bandwidth}  j_max {j_max}  lmax {}", sys.lmax());
    println!(
        "{:>5} {:>9} {:>13} {:>13} {:>15} {:>17}",
        "level", "N_j", "lambda_min", "lambda_max", "sum_lambda-4pi", "unitary_residual"
    );
    for (j, grid) in sys.grids().iter().enumerate() {
        let (lo, hi) = grid
            .weights
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        let residual = sys
            .window()
            .max_unitary_residual(bandwidth.powi(j as i32 + 1), 2048);
        println!(
            "{j:>5} {:>9} {lo:>13.6e} {hi:>13.6e} {:>15.3e} {residual:>17.3e}",
            grid.count(),
            grid.total_weight() - 4.0 * PI
        );
    }
    let analysis = sys.analysis_grid();
    println!("analysis grid: {} points, exact to degree {}", analysis.count(), analysis.exact_degree);
    if let Some(path) = a.grid_out {
        write_map(&path, &analysis.points, &vec![0.0; analysis.count()])?;
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs, file: &RunConfig) -> CliResult<()> {
    let (bandwidth, j_max) = frame_params(a.bandwidth, a.j_max, file);
    let sys = NeedletSystem::new(bandwidth, j_max)?;
    let samples = read_map(&a.input, false)?;
    let values = values_on_grid(&samples, &sys.analysis_grid().points)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "map",
            reason: "values must be finite".into(),
        }
        .into());
    }
    let pyr = analyze(&sys, &values)?;
    pyr.write(&a.out, a.format.into())?;
    println!("levels {}  coefficients {}  energy {:.6e}", pyr.levels.len(), pyr.total_len(), pyr.energy());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let pyr = CoefficientPyramid::read(&a.input)?;
    let sys = system_for(&pyr)?;
    let targets = match &a.targets {
        Some(path) => read_map(path, true)?.into_iter().map(|s| s.point).collect(),
        None => sys.analysis_grid().points.clone(),
    };
    let values = synthesize(&sys, &pyr, &targets)?;
    write_map(&a.out, &targets, &values)?;
    println!("evaluated {} points", targets.len());
    Ok(())
}

fn cmd_generate(a: GenerateArgs, file: &RunConfig, seed: u64) -> CliResult<()> {
    let b = &file.bench;
    let q = match (&a.q, &b.q) {
        (Some(s), _) => parse_exponent("q", s)?,
        (None, Some(v)) => value_as_exponent("q", v)?,
        (None, None) => 2.0,
    };
    let params = BesovParams::new(pick(a.r, b.r, 2.0), pick(a.pi, b.pi, 2.0), q, pick(a.m, b.m, 1.0))?;
    let (bandwidth, j_max) = frame_params(a.bandwidth, a.j_max, file);
    let sys = NeedletSystem::new(bandwidth, j_max)?;
    let pyr = generate_besov_function(&params, &sys, seed)?;
    pyr.write(&a.out, a.format.into())?;
    println!("levels {}  seminorm {:.6e}", pyr.levels.len(), besov_seminorm(&pyr, &params));
    Ok(())
}

fn cmd_observe(a: ObserveArgs, seed: u64) -> CliResult<()> {
    let clean = CoefficientPyramid::read(&a.input)?;
    let sys = system_for(&clean)?;
    let model = ObservationModel::new(a.n, seed)?;
    let noisy = sample_noisy_pyramid(&model, &sys, &clean)?;
    noisy.write(&a.out, a.format.into())?;
    println!("n {}  noise sd {:.6e}", a.n, (1.0 / a.n).sqrt());
    Ok(())
}

fn cmd_denoise(a: DenoiseArgs, file: &RunConfig) -> CliResult<()> {
    let d = &file.denoise;
    let noisy = CoefficientPyramid::read(&a.input)?;
    let cfg = EstimatorConfig {
        kappa: pick(a.kappa, d.kappa, DEFAULT_KAPPA),
        eta: pick(a.eta, d.eta, DEFAULT_ETA),
        p_stat: pick(a.p_stat, d.p_stat, DEFAULT_P_STAT),
        n: a.n.or(d.n).ok_or(Error::InvalidParameter {
            name: "n",
            reason: "required (flag --n or [denoise] n)".into(),
        })?,
        bandwidth: noisy.bandwidth,
    }
    .validated()?;
    let sys = system_for(&noisy)?;
    let j_n = cfg.j_n();
    let parts = build_partitions(&sys, cfg.eta, j_n.min(sys.j_max()))?;
    let (out, stats) = denoise(&noisy, &parts, &cfg)?;
    out.write(&a.out, a.format.into())?;
    println!("J_n {j_n}  t_n {:.6e}  threshold {:.6e}", cfg.t_n(), cfg.threshold());
    println!("{:>5} {:>8} {:>8}", "level", "kept", "blocks");
    for lv in &stats.levels {
        println!("{:>5} {:>8} {:>8}", lv.level, lv.kept(), lv.keep.len());
    }
    println!("kept {} of {} blocks", stats.kept_blocks(), stats.total_blocks());
    Ok(())
}

fn build_plan(a: &PlanArgs, file: &RunConfig, seed: u64) -> CliResult<BenchPlan> {
    let b = &file.bench;
    let base = BenchPlan::reference();
    let q = match (&a.q, &b.q) {
        (Some(s), _) => parse_exponent("q", s)?,
        (None, Some(v)) => value_as_exponent("q", v)?,
        (None, None) => base.besov.q,
    };
    let loss = match (&a.loss_p, &b.loss_p) {
        (Some(s), _) => parse_exponent("loss_p", s)?,
        (None, Some(v)) => value_as_exponent("loss_p", v)?,
        (None, None) => 2.0,
    };
    let loss_p = if loss.is_infinite() {
        LpExponent::Infinity
    } else {
        LpExponent::Finite(loss)
    };
    let truth_mode = match a.truth_mode.as_deref().or(b.truth_mode.as_deref()) {
        Some(s) => s.parse::<TruthMode>()?,
        None => base.truth_mode,
    };
    let plan = BenchPlan {
        besov: BesovParams {
            r: pick(a.r, b.r, base.besov.r),
            pi: pick(a.pi, b.pi, base.besov.pi),
            q,
            m: pick(a.m, b.m, base.besov.m),
        },
        loss_p,
        n_grid: pick(a.n_grid.clone(), b.n_grid.clone(), base.n_grid),
        replications: pick(a.replications, b.replications, base.replications),
        kappa: pick(a.kappa, b.kappa, base.kappa),
        eta: pick(a.eta, b.eta, base.eta),
        p_stat: pick(a.p_stat, b.p_stat, base.p_stat),
        bandwidth: pick(a.bandwidth, b.bandwidth, base.bandwidth),
        seed,
        truth_mode,
        truth_depth: a.truth_depth.or(b.truth_depth),
        point_cap: pick(a.point_cap, b.point_cap, base.point_cap),
    };
    Ok(plan.validated()?)
}

fn write_output(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn cmd_bench(a: BenchArgs, file: &RunConfig, seed: u64) -> CliResult<()> {
    let plan = build_plan(&a.plan, file, seed)?;
    let tolerance = pick(a.tolerance, file.bench.tolerance, 0.25);
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerance",
            reason: format!("{tolerance} must be positive"),
        }
        .into());
    }
    let report = run_bench(&plan)?;
    if let Some(path) = &a.csv {
        write_output(path, &report.to_csv())?;
    }
    if let Some(path) = &a.report {
        write_output(path, &report.to_text())?;
    }
    print!("{}", report.to_text());
    if a.assert_rate {
        if !report.slope_within(tolerance) {
            return Err(Failure::Assertion(format!(
                "slope {:.4} not within {tolerance} of -{:.4}",
                report.fit.slope, report.alpha_theory
            )));
        }
        if !report.fit_ok() {
            return Err(Failure::Assertion(format!("r_squared {:.4} below 0.9", report.fit.r_squared)));
        }
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, file: &RunConfig, seed: u64) -> CliResult<()> {
    let plan = build_plan(&a.plan, file, seed)?;
    let gamma = pick(a.gamma, file.bench.gamma, 0.01);
    let cal = calibrate_kappa(&plan, gamma)?;
    println!("kappa {}", cal.kappa);
    println!("exceedance {:.6e}", cal.exceedance);
    println!("n {}  blocks_sampled {}", cal.n, cal.blocks_sampled);
    if cal.exhausted {
        println!("warning: no kappa on the search grid reached gamma {gamma}");
    }
    Ok(())
}

fn cmd_rate(a: RateArgs) -> CliResult<()> {
    let p: LpExponent = a.p.parse()?;
    let alpha = theoretical_rate(a.r, a.pi, p)?;
    let zone = rate_zone(a.r, a.pi, p)?;
    println!("alpha {alpha}");
    println!("zone {zone:?}");
    if let LpExponent::Finite(pv) = p {
        println!("boundary_pi {}", zone_boundary(a.r, pv));
        println!("quoted_boundary_pi {}", quoted_zone_boundary(a.r, pv));
    }
    Ok(())
}
