mod report;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fleetup_bench::{run_scaling_with, write_csv, BenchError, BenchPlan};
use fleetup_core::ml::{derive_counts, optimize_traced, TraceRow};
use fleetup_core::scenarios::{self, case1, case2, ScenarioError};
use fleetup_core::{
    check_feasibility, discrepancy, solve_bnb, validate_scenario, BnbLimits, ExactError, IpError, MlError,
    MlHyperparams, ModelError, ScenarioConfig, SolveResult, SolveStatus,
};
use report::{CompareRow, SolveReport};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Fleet renewal and upgrade planning with an exact and a gradient solver.
#[derive(Parser, Debug)]
#[command(name = "fleetup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario.
    Solve(SolveArgs),
    /// Run both solvers and report the discrepancy.
    Compare(CompareArgs),
    /// Horizon-scaling study, written as CSV.
    Bench(BenchArgs),
    /// Check a plan file against a scenario.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ScenarioArgs {
    /// Built-in case-1 scenario (1..=8).
    #[arg(long)]
    case1: Option<usize>,
    /// Built-in extended case.
    #[arg(long)]
    case2: bool,
    /// Scenario file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Seed for the gradient solver's restarts.
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations per restart of the gradient solver.
    #[arg(long)]
    iterations: Option<usize>,
    /// Restarts of the gradient solver.
    #[arg(long)]
    restarts: Option<usize>,
    /// Fixed penalty weight c of the gradient solver.
    #[arg(long)]
    penalty_weight: Option<f64>,
    /// Wall-clock cap in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Memory cap of the exact solver, in bytes (K, M and G suffixes allowed).
    #[arg(long, value_parser = parse_bytes)]
    mem_limit: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Exact,
    Ml,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "exact")]
    solver: SolverKind,
    #[command(flatten)]
    options: SolverArgs,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the plan in plan-file format here.
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Write the gradient solver's iteration trace (CSV) here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Case-1 scenarios, comma separated. All eight when nothing is selected.
    #[arg(long, value_delimiter = ',')]
    case1: Vec<usize>,
    #[arg(long)]
    case2: bool,
    #[arg(long)]
    file: Vec<PathBuf>,
    #[command(flatten)]
    options: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Bench plan file (TOML). Defaults apply to omitted fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Case-1 scenario to scale.
    #[arg(long)]
    case1: Option<usize>,
    /// Horizon ladder, comma separated.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Time cap per run in seconds, for both solvers.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Memory cap of the exact solver.
    #[arg(long, value_parser = parse_bytes)]
    mem_limit: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Plan file.
    #[arg(long)]
    plan: PathBuf,
    /// Recompute every tensor except the deployments from the deployments.
    #[arg(long)]
    derive: bool,
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, scale) = match s.chars().last() {
        Some('K' | 'k') => (&s[..s.len() - 1], 1u64 << 10),
        Some('M' | 'm') => (&s[..s.len() - 1], 1 << 20),
        Some('G' | 'g') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    let n: u64 = digits.parse().map_err(|_| format!("not a byte count: {s}"))?;
    n.checked_mul(scale).ok_or_else(|| format!("byte count overflows: {s}"))
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    if let Some(id) = args.case1 {
        Ok(case1(id)?)
    } else if args.case2 {
        Ok(case2())
    } else if let Some(path) = &args.file {
        Ok(validate_scenario(&scenarios::load(path)?)?)
    } else {
        bail!(ScenarioError::UnknownScenario(0))
    }
}

fn limits(opts: &SolverArgs) -> BnbLimits {
    let mut l = BnbLimits::default();
    if let Some(t) = opts.time_limit {
        l.max_seconds = t;
    }
    if let Some(m) = opts.mem_limit {
        l.max_memory_bytes = m;
    }
    l
}

fn hyper(opts: &SolverArgs) -> MlHyperparams {
    let mut h = MlHyperparams::default();
    if let Some(s) = opts.seed {
        h.seed = s;
    }
    if let Some(i) = opts.iterations {
        h.iterations = i;
    }
    if let Some(r) = opts.restarts {
        h.restarts = r;
    }
    h.penalty_weight = opts.penalty_weight.or(h.penalty_weight);
    h.time_limit = opts.time_limit.or(h.time_limit);
    h
}

fn exit_for(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::Feasible => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::Timeout | SolveStatus::MemoryLimit => EXIT_LIMIT,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["restart", "iteration", "loss", "cost", "penalty", "best_objective"])?;
    for r in trace {
        w.write_record([
            r.restart.to_string(),
            r.iteration.to_string(),
            r.loss.to_string(),
            r.cost.to_string(),
            r.penalty.to_string(),
            r.best_objective.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_solver(
    cfg: &ScenarioConfig,
    solver: SolverKind,
    opts: &SolverArgs,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<SolveResult> {
    Ok(match solver {
        SolverKind::Exact => solve_bnb(cfg, &limits(opts))?,
        SolverKind::Ml => optimize_traced(cfg, &hyper(opts), trace)?,
    })
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let cfg = load_scenario(&args.scenario)?;
    let mut trace = args.trace.as_ref().map(|_| Vec::new());
    let start = Instant::now();
    let result = run_solver(&cfg, args.solver, &args.options, trace.as_mut())?;
    let seconds = start.elapsed().as_secs_f64();
    let (name, seed) = match args.solver {
        SolverKind::Exact => ("exact", None),
        SolverKind::Ml => ("ml", Some(hyper(&args.options).seed)),
    };
    let report = SolveReport::new(&cfg, name, seed, &result)?;
    let json = report.to_json()?;
    if let Some(path) = &args.out {
        write_file(path, &json)?;
    }
    if let (Some(path), Some(rows)) = (&args.trace, &trace) {
        write_trace(path, rows)?;
    }
    if let Some(path) = &args.plan_out {
        scenarios::save_plan(&result.plan, path)?;
    }
    let stdout = match args.format {
        Format::Json => json,
        Format::Csv => report::deployment_csv(&cfg, &result.plan),
        Format::Table => report::solve_text(&report, &cfg, seconds),
    };
    print!("{stdout}");
    Ok(exit_for(result.status))
}

fn cmd_compare(args: CompareArgs) -> Result<u8> {
    let mut configs = Vec::new();
    for &id in &args.case1 {
        configs.push(case1(id)?);
    }
    if args.case2 {
        configs.push(case2());
    }
    for path in &args.file {
        configs.push(validate_scenario(&scenarios::load(path)?)?);
    }
    if configs.is_empty() {
        for id in 1..=8 {
            configs.push(case1(id)?);
        }
    }
    let mut rows = Vec::new();
    let mut code = 0;
    for cfg in &configs {
        let exact = run_solver(cfg, SolverKind::Exact, &args.options, None)?;
        let ml = run_solver(cfg, SolverKind::Ml, &args.options, None)?;
        code = code.max(exit_for(exact.status)).max(exit_for(ml.status));
        let exact_objective = exact.status.has_solution().then_some(exact.objective);
        let ml_objective = ml.status.has_solution().then_some(ml.objective);
        let discrepancy_percent = match (exact_objective, ml_objective) {
            (Some(e), Some(m)) if exact.status == SolveStatus::Optimal => discrepancy(m, e).ok(),
            _ => None,
        };
        rows.push(CompareRow {
            scenario: cfg.name.clone(),
            exact_status: exact.status,
            exact_objective,
            ml_status: ml.status,
            ml_objective,
            discrepancy_percent,
        });
    }
    let text = match args.format {
        Format::Table => report::compare_table(&rows),
        Format::Csv => report::compare_csv(&rows)?,
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    if let Some(path) = &args.out {
        write_file(path, &text)?;
    }
    print!("{text}");
    Ok(code)
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let mut plan = match &args.plan {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| InputError(format!("{}: {}", path.display(), e.message())))?
        }
        None => BenchPlan::default(),
    };
    if let Some(id) = args.case1 {
        plan.scenario = id;
    }
    if !args.horizons.is_empty() {
        plan.horizons = args.horizons.clone();
    }
    if let Some(r) = args.repetitions {
        plan.repetitions = r;
    }
    if let Some(t) = args.time_limit {
        plan.exact.max_seconds = t;
        plan.ml.time_limit = Some(t);
    }
    if let Some(m) = args.mem_limit {
        plan.exact.max_memory_bytes = m;
    }
    if let Some(s) = args.seed {
        plan.ml.seed = s;
    }
    let rows = run_scaling_with(&plan, |r| {
        let secs = r.seconds.map_or("-".to_string(), |s| format!("{s:.3}"));
        eprintln!(
            "T={} {} rep {}: {} ({secs} s)",
            r.horizon, r.solver, r.repetition, r.status
        );
    })?;
    let file = fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    write_csv(&rows, file)?;
    println!("{}", args.out.display());
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8> {
    let cfg = load_scenario(&args.scenario)?;
    let mut plan = scenarios::load_plan(&args.plan, &cfg)?;
    if args.derive {
        plan = derive_counts(&cfg, &plan.deployed);
    }
    let violations = check_feasibility(&cfg, &plan)?;
    let mut out = std::io::stdout().lock();
    if violations.is_empty() {
        writeln!(out, "feasible")?;
        return Ok(0);
    }
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    writeln!(out, "{} violation(s)", violations.len())?;
    Ok(EXIT_INFEASIBLE)
}

#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn is_input_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<InputError>()
            || e.is::<ScenarioError>()
            || e.is::<ModelError>()
            || e.is::<IpError>()
            || e.is::<MlError>()
            || e.is::<ExactError>()
            || e.is::<BenchError>()
            || e.is::<std::io::Error>()
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_input_error(&e) { EXIT_INPUT } else { 1 })
        }
    }
}
