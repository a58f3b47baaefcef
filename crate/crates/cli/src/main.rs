//! `fmach`: compile factor graphs to machine images, run them, run the golden
//! kernels, verify results against benchmark oracles and summarize traces.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 mapping
//! error, 4 non-quiescence, 5 enumeration bound exceeded.

mod config;
mod trace_summary;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use factor_machine::apps::{load_manifest, parse_results, verify, AppError};
use factor_machine::golden::{
    exact_marginals, format_assignment, format_marginals, gibbs_sample, map_bruteforce, min_sum,
    sum_product, BpParams, GibbsParams, InferenceError, Schedule,
};
use factor_machine::graph::{parse_evidence, parse_uai, FactorGraph, GraphError};
use factor_machine::image::{MachineImage, Mode};
use factor_machine::machine::{Capacities, Machine};
use factor_machine::mapper::{compile, CompileOptions, MapError};

use config::Config;

pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_MAPPING: u8 = 3;
pub const EXIT_NOT_QUIESCENT: u8 = 4;
pub const EXIT_BOUND: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            msg: msg.into(),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        let code = if matches!(e, MapError::Graph(_)) {
            EXIT_INPUT
        } else {
            EXIT_MAPPING
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        let code = if matches!(e, InferenceError::StateSpaceTooLarge { .. }) {
            EXIT_BOUND
        } else {
            EXIT_INPUT
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<AppError> for Failure {
    fn from(e: AppError) -> Self {
        Failure::input(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fmach", version, about = "Factor-graph machine toolchain")]
struct Cli {
    /// File of `key value` lines supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a UAI graph onto the cell array and write a machine image.
    Compile(CompileArgs),
    /// Simulate a machine image.
    Run(RunArgs),
    /// Run a reference kernel on a UAI graph.
    Golden(GoldenArgs),
    /// Check a results file against a benchmark manifest.
    Verify(VerifyArgs),
    /// Summarize an event trace.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sumprod,
    Minsum,
    Gibbs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    Exact,
    Map,
    Sumprod,
    Minsum,
    Gibbs,
}

#[derive(Args)]
struct CapArgs {
    /// Home variable slots per cell [default: 4].
    #[arg(long)]
    cap_vars: Option<usize>,
    /// Shadow slots per cell [default: 16].
    #[arg(long)]
    cap_shadows: Option<usize>,
    /// Relation slots per cell [default: 4].
    #[arg(long)]
    cap_rels: Option<usize>,
    /// Table words per cell [default: 512].
    #[arg(long)]
    cap_table_words: Option<usize>,
}

impl CapArgs {
    fn resolve(&self, cfg: &Config) -> Result<Capacities, Failure> {
        let d = Capacities::default();
        Ok(Capacities {
            vars: cfg.pick(self.cap_vars, "cap-vars", d.vars)?,
            shadows: cfg.pick(self.cap_shadows, "cap-shadows", d.shadows)?,
            rels: cfg.pick(self.cap_rels, "cap-rels", d.rels)?,
            table_words: cfg.pick(self.cap_table_words, "cap-table-words", d.table_words)?,
        })
    }
}

#[derive(Args)]
struct CompileArgs {
    graph: PathBuf,
    /// Evidence file (`.evid`).
    #[arg(long)]
    evidence: Option<PathBuf>,
    /// Output image [default: the graph path with extension `fmimg`].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Grid rows [default: 4].
    #[arg(long)]
    rows: Option<usize>,
    /// Grid columns [default: 4].
    #[arg(long)]
    cols: Option<usize>,
    /// Inference mode [default: sumprod].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Placement and sampling seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Change threshold in LSBs [default: per mode].
    #[arg(long)]
    threshold: Option<i64>,
    /// GIBBS tick period in cycles [default: derived from the wiring].
    #[arg(long)]
    gibbs_period: Option<u64>,
    #[command(flatten)]
    caps: CapArgs,
}

#[derive(Args)]
struct RunArgs {
    image: PathBuf,
    /// Cycle budget [default: 1000000].
    #[arg(long)]
    max_cycles: Option<u64>,
    /// Replace every cell's change threshold.
    #[arg(long)]
    threshold: Option<i64>,
    /// Replace the image's sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Event trace output (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stats output (key=value lines); stats always go to standard output too.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Marginals output.
    #[arg(long)]
    beliefs: Option<PathBuf>,
    /// Decoded assignment output.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Uniform noise amplitude in LSBs on relation outputs [default: 0].
    #[arg(long)]
    noise_lsb: Option<i64>,
    /// Noise seed [default: 0].
    #[arg(long)]
    noise_seed: Option<u64>,
    #[command(flatten)]
    caps: CapArgs,
}

#[derive(Args)]
struct GoldenArgs {
    graph: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long, value_enum)]
    alg: Alg,
    /// Results output [default: standard output].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Message schedule for sumprod and minsum [default: flooding].
    #[arg(long)]
    schedule: Option<String>,
    /// Damping weight in [0, 1) [default: 0].
    #[arg(long)]
    damping: Option<f64>,
    /// Iteration cap [default: 200].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Convergence tolerance [default: 1e-6].
    #[arg(long)]
    tol: Option<f64>,
    /// Gibbs seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Gibbs burn-in sweeps [default: 1000].
    #[arg(long)]
    burn_in: Option<usize>,
    /// Gibbs sweeps counted [default: 100000].
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    manifest: PathBuf,
    results: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    trace: PathBuf,
    /// Number of histogram bins [default: 20].
    #[arg(long)]
    bins: Option<u64>,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path, evidence: Option<&Path>) -> Result<FactorGraph, Failure> {
    let mut g =
        parse_uai(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    if let Some(p) = evidence {
        let ev = parse_evidence(&read(p)?)
            .map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
        for (v, x) in ev {
            g.set_evidence(v, x)?;
        }
    }
    Ok(g)
}

fn check_range<T: PartialOrd + std::fmt::Display>(
    name: &str,
    v: T,
    lo: T,
    hi: T,
) -> Result<T, Failure> {
    if v < lo || v > hi {
        return Err(Failure::input(format!("{name} {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn cmd_compile(a: &CompileArgs, cfg: &Config) -> Result<u8, Failure> {
    let evidence = cfg.pick_opt(a.evidence.clone(), "evidence")?;
    let graph = load_graph(&a.graph, evidence.as_deref())?;
    let mode = match a.mode {
        Some(ModeArg::Sumprod) => Mode::SumProd,
        Some(ModeArg::Minsum) => Mode::MinSum,
        Some(ModeArg::Gibbs) => Mode::Gibbs,
        None => cfg.pick(None, "mode", Mode::SumProd)?,
    };
    let rows = check_range("rows", cfg.pick(a.rows, "rows", 4)?, 1, 1024)?;
    let cols = check_range("cols", cfg.pick(a.cols, "cols", 4)?, 1, 1024)?;
    let mut opts = CompileOptions::new(rows, cols, mode);
    opts.seed = cfg.pick(a.seed, "seed", 0)?;
    opts.threshold = cfg.pick_opt(a.threshold, "threshold")?;
    opts.gibbs_period = cfg.pick_opt(a.gibbs_period, "gibbs-period")?;
    opts.caps = a.caps.resolve(cfg)?;
    if let Some(t) = opts.threshold {
        check_range("threshold", t, 0, i64::MAX)?;
    }
    let mapping = compile(&graph, &opts)?;
    let out = cfg
        .pick_opt(a.out.clone(), "out")?
        .unwrap_or_else(|| a.graph.with_extension("fmimg"));
    write(&out, &mapping.image.to_string())?;
    print!("{}", mapping.summary(&opts.caps));
    println!("image={}", out.display());
    Ok(0)
}

fn cmd_run(a: &RunArgs, cfg: &Config) -> Result<u8, Failure> {
    let text = read(&a.image)?;
    let mut image: MachineImage = text
        .parse()
        .map_err(|e| Failure::input(format!("{}: {e}", a.image.display())))?;
    if let Some(t) = cfg.pick_opt(a.threshold, "threshold")? {
        check_range("threshold", t, 0, i64::MAX)?;
        for c in &mut image.cells {
            c.threshold = t;
        }
    }
    if let Some(s) = cfg.pick_opt(a.seed, "seed")? {
        image.seed = s;
    }
    let caps = a.caps.resolve(cfg)?;
    let mut mach = Machine::load_image_with(&image, &caps)
        .map_err(|e| Failure::input(format!("{}: {e}", a.image.display())))?;
    let noise = check_range(
        "noise-lsb",
        cfg.pick(a.noise_lsb, "noise-lsb", 0)?,
        0,
        i64::MAX,
    )?;
    mach.set_noise(noise, cfg.pick(a.noise_seed, "noise-seed", 0)?);
    if let Some(p) = cfg.pick_opt(a.trace.clone(), "trace")? {
        let f = File::create(&p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
        mach.set_trace(Box::new(BufWriter::new(f)));
    }
    let max_cycles = cfg.pick(a.max_cycles, "max-cycles", 1_000_000)?;
    let stats = mach.run_until_quiescent(max_cycles);
    mach.finish_trace()
        .map_err(|e| Failure::input(format!("trace: {e}")))?;
    let beliefs = mach.read_beliefs();
    let stats_text = stats.to_string();
    print!("{stats_text}");
    if let Some(p) = cfg.pick_opt(a.stats.clone(), "stats")? {
        write(&p, &stats_text)?;
    }
    if let Some(p) = cfg.pick_opt(a.beliefs.clone(), "beliefs")? {
        write(&p, &format_marginals(&beliefs.marginals))?;
    }
    if let Some(p) = cfg.pick_opt(a.assignment.clone(), "assignment")? {
        write(&p, &format_assignment(&beliefs.assignment))?;
    }
    if !stats.quiescent && mach.mode() != Mode::Gibbs {
        eprintln!("fmach: not quiescent after {max_cycles} cycles");
        return Ok(EXIT_NOT_QUIESCENT);
    }
    Ok(0)
}

fn cmd_golden(a: &GoldenArgs, cfg: &Config) -> Result<u8, Failure> {
    let evidence = cfg.pick_opt(a.evidence.clone(), "evidence")?;
    let graph = load_graph(&a.graph, evidence.as_deref())?.validated()?;
    let schedule = match cfg.pick_opt(a.schedule.clone(), "schedule")?.as_deref() {
        None | Some("flooding") => Schedule::Flooding,
        Some("sequential") => Schedule::Sequential,
        Some(s) => {
            return Err(Failure::input(format!(
                "unknown schedule '{s}' (flooding or sequential)"
            )))
        }
    };
    let d = BpParams::<f64>::default();
    let params = BpParams {
        schedule,
        damping: cfg.pick(a.damping, "damping", d.damping)?,
        max_iters: check_range(
            "max-iters",
            cfg.pick(a.max_iters, "max-iters", d.max_iters)?,
            1,
            usize::MAX,
        )?,
        tol: cfg.pick(a.tol, "tol", d.tol)?,
    };
    if !(0.0..1.0).contains(&params.damping) {
        return Err(Failure::input(format!(
            "damping {} outside [0, 1)",
            params.damping
        )));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Failure::input(format!(
            "tol {} must be non-negative",
            params.tol
        )));
    }
    let warn = |converged: bool, iterations: usize| {
        if !converged {
            eprintln!("fmach: warning: no convergence within {iterations} iterations");
        }
    };
    let text = match a.alg {
        Alg::Exact => format_marginals(&exact_marginals::<f64>(&graph)?),
        Alg::Map => format_assignment(&map_bruteforce::<f64>(&graph)?),
        Alg::Sumprod => {
            let b = sum_product::<f64>(&graph, &params)?;
            warn(b.converged, b.iterations);
            format_marginals(&b.beliefs)
        }
        Alg::Minsum => {
            let (b, decoded) = min_sum::<f64>(&graph, &params)?;
            warn(b.converged, b.iterations);
            format_assignment(&decoded)
        }
        Alg::Gibbs => {
            let gp = GibbsParams {
                seed: cfg.pick(a.seed, "seed", 0)?,
                burn_in: cfg.pick(a.burn_in, "burn-in", 1000)?,
                samples: check_range(
                    "samples",
                    cfg.pick(a.samples, "samples", 100_000)?,
                    1,
                    usize::MAX,
                )?,
            };
            format_marginals(&gibbs_sample::<f64>(&graph, &gp)?.marginals)
        }
    };
    match cfg.pick_opt(a.out.clone(), "out")? {
        Some(p) => write(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8, Failure> {
    let bench = load_manifest(&a.manifest)?;
    let results = parse_results(&read(&a.results)?)
        .map_err(|e| Failure::input(format!("{}: {e}", a.results.display())))?;
    let report = verify(&bench, &results)?;
    print!("{report}");
    Ok(if report.all_passed() { 0 } else { EXIT_VERIFY })
}

fn cmd_stats(a: &StatsArgs) -> Result<u8, Failure> {
    let rows = trace_summary::parse_trace(&read(&a.trace)?)
        .map_err(|e| Failure::input(format!("{}: {e}", a.trace.display())))?;
    let bins = check_range("bins", a.bins.unwrap_or(20), 1, 1 << 20)?;
    print!("{}", trace_summary::summarize(&rows, bins));
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let cfg = match &cli.config {
        Some(p) => Config::parse(&read(p)?, &p.display().to_string())?,
        None => Config::default(),
    };
    match &cli.command {
        Command::Compile(a) => cmd_compile(a, &cfg),
        Command::Run(a) => cmd_run(a, &cfg),
        Command::Golden(a) => cmd_golden(a, &cfg),
        Command::Verify(a) => cmd_verify(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("fmach: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
