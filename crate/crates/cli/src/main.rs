#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wcsg::chaos::{self, ChaosOptions, ChaosReport};
use wcsg::lpspace::{GridFunction, GridOptions, IndicatorSpec, LpSpace};
use wcsg::semigroup::{OccupancyKind, SemigroupOptions, WeightedComposition};
use wcsg::sobolev::{sobolev_chaos_classify, SobolevGridFunction, SobolevProblem};
use wcsg::suite::{self, SuiteOptions};
use wcsg::{Error, Exec, FlowOptions, ProblemDef, Semiflow};

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_SOFTWARE: u8 = 70;
const EX_IOERR: u8 = 74;

#[derive(Parser, Debug)]
#[command(name = "wcsg", version, about = "Weighted composition semigroups: simulation, invariant checks and chaos classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Problem file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    problem: Option<PathBuf>,
    /// Directory for report files; created when missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid nodes for L^p computations and zero detection.
    #[arg(long, global = true, default_value_t = 4096, value_name = "N")]
    grid: usize,
    /// Upper limit of time integrals.
    #[arg(long, global = true, default_value_t = 50.0, value_name = "T")]
    horizon: f64,
    /// Override the exponent from the problem file.
    #[arg(long, global = true, value_name = "P")]
    p: Option<f64>,
    /// Seed for randomized sample points.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Relative tolerance of the ODE integrator.
    #[arg(long, global = true, value_name = "TOL")]
    tol_flow: Option<f64>,
    /// Tolerance of the norm identities in `verify`.
    #[arg(long, global = true, default_value_t = 1e-6, value_name = "TOL")]
    tol_norm: f64,
    /// Integrate the flow numerically even when a closed form is known.
    #[arg(long, global = true)]
    numeric: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify chaos and the frequent hypercyclicity criterion on L^p_rho.
    Analyze,
    /// Evolve an initial profile and tabulate norms.
    Simulate {
        /// Initial profile: node,value_re[,value_im] (or node,value,derivative with --sobolev).
        #[arg(long, value_name = "PATH")]
        initial: Option<PathBuf>,
        /// Comma-separated times; constant expressions such as log(2) are accepted.
        #[arg(long, default_value = "0,1", value_name = "LIST")]
        times: String,
        /// Evolve in W^{1,p}_* with three-column profiles.
        #[arg(long)]
        sobolev: bool,
    },
    /// Run the invariant suite; exit 0 iff every check passes.
    Verify {
        /// Test interval `A,B`; may be repeated. Defaults to two intervals in the first component.
        #[arg(long, value_name = "A,B")]
        interval: Vec<String>,
        #[arg(long, hide = true)]
        corrupt_inverse: bool,
    },
    /// Measure occupancy times against max{int_I dr/|F|, s}.
    Occupancy {
        #[arg(long, value_name = "A,B")]
        interval: Option<String>,
    },
    /// Classify the semigroup on W^{1,p}_*[a, b] through its L^p conjugate.
    SobolevAnalyze,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EX_USAGE;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EX_IOERR;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Config { .. }
            | Error::MissingKey(_)
            | Error::InvalidExponent(_)
            | Error::NonPositiveDensity { .. }
            | Error::EmptyInterval { .. }
            | Error::Data(_)
            | Error::NotInComponent { .. }
            | Error::FloorViolation { .. },
        ) => EX_DATAERR,
        _ => EX_SOFTWARE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EX_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMIFLOW_LOG", "warn")).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let started = Instant::now();
    let c = &cli.common;
    if c.grid < 64 {
        return Err(usage(format!("--grid must be at least 64, got {}", c.grid)));
    }
    if !(c.horizon > 0.0) || !c.horizon.is_finite() {
        return Err(usage(format!("--horizon must be positive, got {}", c.horizon)));
    }
    if let Some(t) = c.tol_flow {
        if !(t > 0.0 && t < 1e-2) {
            return Err(usage(format!("--tol-flow must lie in (0, 0.01), got {t}")));
        }
    }
    let path = c.problem.as_ref().ok_or_else(|| usage("--problem PATH is required"))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut problem = ProblemDef::from_config(&text)?;
    if let Some(p) = c.p {
        problem = problem.with_p(p)?;
    }
    let problem = Arc::new(problem);
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    info!("problem {} with p = {}", path.display(), problem.p);

    let code = match &cli.command {
        Command::Analyze => analyze(c, problem)?,
        Command::SobolevAnalyze => sobolev_analyze(c, problem)?,
        Command::Simulate { initial, times, sobolev } => simulate(c, problem, initial.as_deref(), times, *sobolev)?,
        Command::Verify { interval, corrupt_inverse } => verify(c, problem, interval, *corrupt_inverse)?,
        Command::Occupancy { interval } => occupancy(c, problem, interval.as_deref())?,
    };
    if let Some(dir) = &c.out {
        write_meta(dir, cli, started, code)?;
    }
    Ok(code)
}

fn flow_options(c: &Common) -> FlowOptions {
    let mut fo = if c.numeric { FlowOptions::numeric() } else { FlowOptions::default() };
    if let Some(t) = c.tol_flow {
        fo.rtol = t;
    }
    fo
}

fn chaos_options(c: &Common) -> ChaosOptions {
    ChaosOptions { flow: flow_options(c), decomposition_grid: c.grid, ..ChaosOptions::default() }
}

fn analyze(c: &Common, problem: Arc<ProblemDef>) -> anyhow::Result<u8> {
    let mut report = chaos::chaos_test(problem.clone(), &chaos_options(c))?;
    if chaos::is_vfl(&problem) {
        match chaos::vfl_classify_against(&problem, report.verdict) {
            Ok(v) => {
                report.notes.push(format!(
                    "von Foerster-Lasota threshold: Re h(0) = {} against -1/p = {}: {}",
                    v.re_h0,
                    v.threshold,
                    if v.chaotic { "chaotic" } else { "not chaotic, strongly stable" }
                ));
                if v.boundary {
                    report.boundary = true;
                    report.notes.push("boundary: Re h(0) = -1/p exactly; the strict inequality fails".into());
                }
                if !v.agrees {
                    report.notes.push(format!("threshold verdict {} differs from the criterion pipeline", v.verdict));
                }
            }
            Err(e) => report.notes.push(format!("threshold classifier declined: {e}")),
        }
    }
    emit_report(c, &report)?;
    Ok(report.verdict.exit_code() as u8)
}

fn sobolev_analyze(c: &Common, problem: Arc<ProblemDef>) -> anyhow::Result<u8> {
    let sp = match SobolevProblem::new(problem, flow_options(c)) {
        Ok(sp) => sp,
        Err(Error::Hypothesis(msg)) => {
            eprintln!("INCONCLUSIVE: {msg}");
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    let report = sobolev_chaos_classify(&sp, &chaos_options(c))?;
    emit_report(c, &report)?;
    Ok(report.verdict.exit_code() as u8)
}

fn components_csv(report: &ChaosReport) -> String {
    let mut s = String::from("lo,hi,sign,integral,tail,verdict\n");
    for comp in &report.components {
        let integral = comp.integral.map_or("inf".to_string(), |v| v.to_string());
        s.push_str(&format!("{},{},{},{},{:?},{:?}\n", comp.interval.0, comp.interval.1, comp.sign, integral, comp.tail, comp.verdict));
    }
    s
}

fn emit_report(c: &Common, report: &ChaosReport) -> anyhow::Result<()> {
    let json = report.to_json();
    let text = report.to_text();
    if let Some(dir) = &c.out {
        fs::write(dir.join("report.json"), &json)?;
        fs::write(dir.join("report.txt"), &text)?;
        if c.format == Format::Csv {
            fs::write(dir.join("components.csv"), components_csv(report))?;
        }
    }
    match c.format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{text}"),
        Format::Csv => print!("{}", components_csv(report)),
    }
    Ok(())
}

fn parse_times(list: &str) -> anyhow::Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            let e = wcsg::Expr::parse(s.trim()).map_err(|e| usage(format!("time `{s}`: {e}")))?;
            let t = e.constant_value().ok_or_else(|| usage(format!("time `{s}` must be a constant")))?;
            if !(t >= 0.0) {
                return Err(usage(format!("times must be non-negative, got {t}")));
            }
            Ok(t)
        })
        .collect()
}

fn parse_interval(s: &str) -> anyhow::Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| usage(format!("interval `{s}` must be `A,B`")))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| usage(format!("`{v}` is not a number")));
    let (a, b) = (num(a)?, num(b)?);
    if !(a < b) {
        return Err(usage(format!("interval `{s}` is empty")));
    }
    Ok((a, b))
}

struct Setup {
    sg: WeightedComposition,
    decomp: wcsg::ComponentDecomposition,
}

fn setup(c: &Common, problem: Arc<ProblemDef>, sg_opts: SemigroupOptions) -> anyhow::Result<Setup> {
    let flow = Arc::new(Semiflow::new(problem.clone(), flow_options(c)));
    let decomp = flow.decompose(c.grid)?;
    let grid = GridOptions { nodes: c.grid, ..GridOptions::default() };
    let space = LpSpace::for_problem(problem, &decomp.zeros, &grid)?.with_exec(Exec::default());
    Ok(Setup { sg: WeightedComposition::new(flow, space).with_options(sg_opts), decomp })
}

#[derive(Serialize)]
struct NormRow {
    t: f64,
    norm: f64,
}

fn simulate(c: &Common, problem: Arc<ProblemDef>, initial: Option<&Path>, times: &str, sobolev: bool) -> anyhow::Result<u8> {
    let initial = initial.ok_or_else(|| usage("simulate needs --initial PATH"))?;
    let times = parse_times(times)?;
    let file = fs::File::open(initial).with_context(|| format!("opening {}", initial.display()))?;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    if sobolev {
        let f = SobolevGridFunction::read_csv(file)?;
        let sp = SobolevProblem::new(problem.clone(), flow_options(c))?;
        for &t in &times {
            let g = sp.apply_s(t, &f)?;
            rows.push(NormRow { t, norm: g.norm(problem.p) });
            profiles.push(g.to_csv_string());
        }
    } else {
        let f = GridFunction::read_csv(file)?;
        let s = setup(c, problem, SemigroupOptions { horizon: c.horizon, ..Default::default() })?;
        for &t in &times {
            let g = s.sg.apply_t(t, &f)?;
            rows.push(NormRow { t, norm: s.sg.space.norm(&g)? });
            profiles.push(g.to_csv_string());
        }
    }
    let mut csv = String::from("t,norm\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.t, r.norm));
    }
    if let Some(dir) = &c.out {
        for (i, p) in profiles.iter().enumerate() {
            fs::write(dir.join(format!("profile_{i:03}.csv")), p)?;
        }
        fs::write(dir.join("norms.csv"), &csv)?;
    }
    match c.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        Format::Csv => print!("{csv}"),
        Format::Text => {
            for r in &rows {
                println!("t = {:<12} ||T(t) f|| = {:.12}", r.t, r.norm);
            }
        }
    }
    Ok(0)
}

fn verify(c: &Common, problem: Arc<ProblemDef>, intervals: &[String], corrupt: bool) -> anyhow::Result<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let (lo, hi) = problem.sample_window();
    let points: Vec<f64> = (0..16).map(|_| lo + (hi - lo) * rng.random_range(0.02..0.98)).collect();
    debug!("flow sample points {points:?}");
    let opts = SuiteOptions {
        grid: GridOptions { nodes: c.grid, ..GridOptions::default() },
        flow: flow_options(c),
        semigroup: SemigroupOptions { horizon: c.horizon, corrupt_inverse: corrupt, ..Default::default() },
        norm_tol: c.tol_norm,
        flow_points: points,
        intervals: intervals.iter().map(|s| parse_interval(s)).collect::<anyhow::Result<_>>()?,
        ..SuiteOptions::default()
    };
    let report = suite::run_suite(problem, &opts)?;
    let json = serde_json::to_string_pretty(&report)?;
    let text = report.to_text();
    if let Some(dir) = &c.out {
        fs::write(dir.join("verify.json"), &json)?;
        fs::write(dir.join("verify.txt"), &text)?;
        if c.format == Format::Csv {
            fs::write(dir.join("verify.csv"), report.to_csv()?)?;
        }
    }
    match c.format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{text}"),
        Format::Csv => print!("{}", report.to_csv()?),
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

#[derive(Serialize)]
struct OccupancyReport {
    bound: wcsg::semigroup::OccupancyBound,
    holds: bool,
    probes: Vec<(f64, f64, f64)>,
}

fn occupancy(c: &Common, problem: Arc<ProblemDef>, interval: Option<&str>) -> anyhow::Result<u8> {
    let s = setup(c, problem, SemigroupOptions { horizon: c.horizon, ..Default::default() })?;
    let first = *s.decomp.components.first().ok_or_else(|| anyhow!("F has no non-vanishing component"))?;
    let (a, b) = match interval {
        Some(i) => parse_interval(i)?,
        None => suite::default_intervals(&first)[0],
    };
    let spec = IndicatorSpec::new(&s.sg.flow, &s.decomp, a, b)?;
    let ys = suite::occupancy_probes(&s.decomp.components[spec.component], a, b);
    let bound = s.sg.occupancy_bound(&spec, &ys)?;
    let mut probes = Vec::with_capacity(ys.len());
    for &y in &ys {
        let image = s.sg.occupancy_time(&spec, y, OccupancyKind::Image)?;
        let pre = s.sg.occupancy_time(&spec, y, OccupancyKind::Preimage)?;
        probes.push((y, image, pre));
    }
    let holds = bound.holds(1e-6);
    let report = OccupancyReport { bound, holds, probes };
    let json = serde_json::to_string_pretty(&report)?;
    let mut csv = String::from("y,image,preimage\n");
    for (y, i, p) in &report.probes {
        csv.push_str(&format!("{y},{i},{p}\n"));
    }
    let b = &report.bound;
    let text = format!(
        "occupancy on [{a}, {b_hi}]: sup {:.9} at y = {} ({:?}), bound max(int dr/|F|, s) = {:.9}, s = {:.9}, int dr/|F| = {:.9}: {}\n",
        b.measured_sup,
        b.argmax,
        b.kind_of_sup,
        b.c_formula,
        b.transit.flow_time,
        b.transit.quadrature,
        if holds { "holds" } else { "VIOLATED" },
        b_hi = b.interval.1,
    );
    if let Some(dir) = &c.out {
        fs::write(dir.join("occupancy.json"), &json)?;
        fs::write(dir.join("occupancy.txt"), &text)?;
        fs::write(dir.join("occupancy.csv"), &csv)?;
    }
    match c.format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{text}"),
        Format::Csv => print!("{csv}"),
    }
    Ok(if holds { 0 } else { 1 })
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    args: Vec<String>,
    seed: u64,
    parallel: bool,
    started_unix: f64,
    elapsed_seconds: f64,
    exit_code: u8,
    problem: &'a Path,
}

fn write_meta(dir: &Path, cli: &Cli, started: Instant, exit_code: u8) -> anyhow::Result<()> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_err(|e| anyhow!(e))?.as_secs_f64();
    let elapsed = started.elapsed().as_secs_f64();
    let Some(problem) = cli.common.problem.as_deref() else { bail!("no problem path") };
    let meta = RunMeta {
        tool: "wcsg",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: format!("{:?}", cli.command).split([' ', '{']).next().unwrap_or_default().to_lowercase(),
        args: std::env::args().skip(1).collect(),
        seed: cli.common.seed,
        parallel: Exec::default() == Exec::Parallel,
        started_unix: now - elapsed,
        elapsed_seconds: elapsed,
        exit_code,
        problem,
    };
    fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
