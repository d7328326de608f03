use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use listopt::decomp::{solve_direct, solve_exact, solve_linear, write_trace_csv};
use listopt::experiments::{
    bench_decomp, default_w_grid, summarize, sweep_w, write_bench_csv, write_summary_csv, write_sweep_csv, BenchConfig,
    SweepSolver,
};
use listopt::ingest::{generate_synthetic, instance_from_log, parse_log, EstimationConfig, Profile};
use listopt::model::{instance_to_json, read_instance, write_instance};
use listopt::qubo::export_qubo;
use listopt::{
    build_qubo, solve_decomposed, two_stage_solve, DecompParams, Error, ListingInstance, Policy, SolveReport,
    Subsolver, SubsolverParams,
};
use listopt::{Exhaustive, SimulatedAnnealing};

/// Item-listing optimization with a diversity penalty.
///
/// Hardware annealer settings (annealing time, auto scaling, postprocessing,
/// spin-reversal transforms) have no classical counterpart and are not offered.
#[derive(Parser)]
#[command(name = "listopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the ranked list.
    Solve(SolveArgs),
    /// Re-solve an instance across diversity weights and emit a CSV.
    SweepW(SweepArgs),
    /// Structured vs energy-impact decomposition on synthetic instances.
    BenchDecomp(BenchArgs),
    /// Build an instance from an access log.
    Ingest(IngestArgs),
    /// Write a seeded synthetic instance.
    Gen(GenArgs),
    /// Write the penalized QUBO of an instance as sparse upper-triangle triples.
    ExportQubo(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Linear assignment on sales only.
    Lap,
    /// Enumeration of all placements (n ≤ 10).
    Exact,
    /// Decomposition loop.
    Decomp,
    /// Linear assignment, then the top positions re-solved with diversity.
    TwoStage,
    /// One annealer call on the whole QUBO.
    Sa,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsolverKind {
    Sa,
    Exhaustive,
}

#[derive(Args, Clone)]
struct DecompArgs {
    /// Items per structured subproblem.
    #[arg(long, default_value_t = 8)]
    n_sub: usize,
    /// Consecutive non-improving rounds before stopping.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Wall-clock cap in seconds.
    #[arg(long, default_value_t = 20.0)]
    timeout: f64,
    #[arg(long, default_value_t = 3)]
    tabu_tenure: usize,
    /// QUBO penalty weight; derived from the coefficients when omitted.
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args, Clone)]
struct AnnealArgs {
    #[arg(long, default_value_t = 1000)]
    num_reads: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "decomp")]
    method: Method,
    #[arg(long, value_enum, default_value = "structured")]
    policy: Policy,
    #[arg(long, value_enum, default_value = "sa")]
    subsolver: SubsolverKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Positions re-solved by the two-stage method; 8, or the whole list if shorter.
    #[arg(long)]
    top_k: Option<usize>,
    #[command(flatten)]
    decomp: DecompArgs,
    #[command(flatten)]
    anneal: AnnealArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the per-round trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep wall-clock columns out of the trace CSV.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    instance: PathBuf,
    /// Comma-separated weights; 0.0 to 1.0 in steps of 0.1 by default.
    #[arg(long, value_delimiter = ',')]
    w: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decomp: DecompArgs,
    #[command(flatten)]
    anneal: AnnealArgs,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "12,16,20,24")]
    sizes: Vec<usize>,
    /// Seeds 0..SEEDS per size.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "clustered")]
    profile: Profile,
    #[command(flatten)]
    decomp: DecompArgs,
    #[arg(long, default_value_t = 100)]
    num_reads: usize,
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    /// Drop the elapsed column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Per-run CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-size gap CSV destination; printed after the runs when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    log: PathBuf,
    #[arg(long)]
    area: String,
    #[arg(long)]
    out: PathBuf,
    /// Items to keep, by view count.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    min_sessions: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 20.0)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    band: usize,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
}

#[derive(Args)]
struct GenArgs {
    n: usize,
    seed: u64,
    #[arg(value_enum)]
    profile: Profile,
    /// Instance destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    instance: PathBuf,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Input(Error),
    Solver(Error),
}

impl Failure {
    /// Errors raised while solving; bad arguments still count as input errors.
    fn solver(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Input(e),
            e => Failure::Solver(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::SweepW(a) => cmd_sweep_w(a),
        Command::BenchDecomp(a) => cmd_bench(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Gen(a) => cmd_gen(a),
        Command::ExportQubo(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver error: {e}");
            ExitCode::from(3)
        }
    }
}

fn load(path: &Path) -> std::result::Result<ListingInstance, Failure> {
    read_instance(path).map_err(|e| match e {
        Error::Io(io) => Failure::Input(Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        e => Failure::Input(e),
    })
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

impl DecompArgs {
    fn params(&self, seed: u64) -> std::result::Result<DecompParams, Failure> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::InvalidArgument(format!("timeout must be positive, got {}", self.timeout)).into());
        }
        Ok(DecompParams {
            n_sub: self.n_sub,
            repeats: self.repeats,
            timeout: Duration::from_secs_f64(self.timeout),
            tabu_tenure: self.tabu_tenure,
            penalty: self.penalty,
            seed,
            ..DecompParams::default()
        })
    }
}

impl AnnealArgs {
    fn params(&self, seed: u64) -> SubsolverParams {
        SubsolverParams {
            num_reads: self.num_reads,
            sweeps: self.sweeps,
            beta_range: None,
            seed,
        }
    }
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let inst = load(&a.instance)?;
    let n = inst.n();
    let params = DecompArgs {
        n_sub: a.decomp.n_sub.min(n),
        ..a.decomp.clone()
    }
    .params(a.seed)?;
    let annealer = SimulatedAnnealing::new(a.anneal.params(a.seed));
    let exhaustive = Exhaustive::default();
    let solver: &dyn Subsolver = match a.subsolver {
        SubsolverKind::Sa => &annealer,
        SubsolverKind::Exhaustive => &exhaustive,
    };
    let subsolver_name = solver.name();

    let (report, meta) = match a.method {
        Method::Lap => (solve_linear(&inst, params.penalty), "lap".to_string()),
        Method::Exact => (solve_exact(&inst, params.penalty), "exact".to_string()),
        Method::Sa => (
            solve_direct(&inst, &annealer, params.penalty),
            format!(
                "sa (num_reads {}, sweeps {}, seed {})",
                a.anneal.num_reads, a.anneal.sweeps, a.seed
            ),
        ),
        Method::Decomp => (
            solve_decomposed(&inst, a.policy, solver, &params),
            format!(
                "decomp (policy {}, subsolver {subsolver_name}, n_sub {}, repeats {}, seed {})",
                a.policy, params.n_sub, params.repeats, a.seed
            ),
        ),
        Method::TwoStage => {
            let top_k = a.top_k.unwrap_or(n.min(8));
            (
                two_stage_solve(&inst, top_k, solver, &params),
                format!("two-stage (top_k {top_k}, subsolver {subsolver_name}, seed {})", a.seed),
            )
        }
    };
    let report = report.map_err(Failure::solver)?;

    print_report(&inst, &report, &meta)?;
    if let Some(path) = &a.json {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &report).map_err(Error::from)?;
        writeln!(f)?;
        f.flush()?;
    }
    if let Some(path) = &a.trace {
        write_trace_csv(&report.trace, BufWriter::new(File::create(path)?), !a.no_timing)?;
    }
    Ok(())
}

fn print_report(inst: &ListingInstance, r: &SolveReport, meta: &str) -> io::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "method: {meta}")?;
    writeln!(out, "rank\titem\tsales")?;
    for (j, &i) in r.best.items().iter().enumerate() {
        writeln!(out, "{}\t{i}\t{}", j + 1, inst.sales[(i, j)])?;
    }
    writeln!(out, "sales_term: {}", r.breakdown.sales_term)?;
    writeln!(out, "diversity_term: {}", r.breakdown.diversity_term)?;
    writeln!(out, "objective: {}", r.breakdown.objective)?;
    writeln!(out, "qubo_energy: {}", r.qubo_energy)?;
    writeln!(out, "offset: {}", r.offset)?;
    writeln!(out, "penalty: {}", r.penalty)?;
    writeln!(out, "rounds: {}", r.rounds)?;
    Ok(())
}

fn cmd_sweep_w(a: SweepArgs) -> CmdResult {
    let inst = load(&a.instance)?;
    let ws = a.w.clone().unwrap_or_else(default_w_grid);
    let params = DecompArgs {
        n_sub: a.decomp.n_sub.min(inst.n()),
        ..a.decomp.clone()
    }
    .params(a.seed)?;
    let solver = SweepSolver::for_size(inst.n(), params, a.anneal.params(a.seed));
    let rows = sweep_w(&inst, &ws, &solver).map_err(Failure::solver)?;
    write_sweep_csv(&rows, output(a.out.as_deref())?)?;
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        sizes: a.sizes.clone(),
        seeds: (0..a.seeds).collect(),
        profile: a.profile,
        decomp: a.decomp.params(0)?,
        annealer: SubsolverParams {
            num_reads: a.num_reads,
            sweeps: a.sweeps,
            ..SubsolverParams::default()
        },
    };
    let rows = bench_decomp(&cfg).map_err(Failure::solver)?;
    let gaps = summarize(&rows);
    match &a.summary {
        Some(path) => {
            write_bench_csv(&rows, output(a.out.as_deref())?, !a.no_timing)?;
            write_summary_csv(&gaps, output(Some(path))?)?;
        }
        None => {
            let mut out = output(a.out.as_deref())?;
            write_bench_csv(&rows, &mut out, !a.no_timing)?;
            if a.out.is_none() {
                writeln!(out)?;
            }
            drop(out);
            write_summary_csv(&gaps, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> CmdResult {
    let file = File::open(&a.log).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", a.log.display())))?;
    let parsed = parse_log(BufReader::new(file))?;
    let cfg = EstimationConfig {
        smoothing_alpha: a.alpha,
        smoothing_beta: a.beta,
        min_sessions: a.min_sessions,
    };
    let (inst, summary) = instance_from_log(&parsed.events, &a.area, a.n, &cfg, a.band, a.w)?;
    write_instance(&a.out, &inst)?;

    let mut out = io::stdout().lock();
    writeln!(out, "rows: {}", parsed.events.len())?;
    writeln!(out, "malformed: {}", parsed.malformed)?;
    writeln!(out, "area_rows: {}", summary.area_events)?;
    writeln!(out, "items: {}", summary.universe.len())?;
    for (k, id) in summary.universe.ids().iter().enumerate() {
        writeln!(out, "{k}\t{id}")?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let inst = generate_synthetic(a.n, a.seed, a.profile)?;
    match &a.out {
        Some(path) => write_instance(path, &inst)?,
        None => io::stdout().lock().write_all(instance_to_json(&inst)?.as_bytes())?,
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CmdResult {
    let inst = load(&a.instance)?;
    let p = build_qubo(&inst, a.penalty)?;
    let mut out = output(a.out.as_deref())?;
    out.write_all(export_qubo(&p).as_bytes())?;
    out.flush()?;
    Ok(())
}
