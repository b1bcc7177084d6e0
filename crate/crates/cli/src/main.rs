//! `dse`: command-line entry point for accelerator design-space studies.
//!
//! Precedence for every tunable is flags > environment > spec file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dse_core::analysis::compare_report;
use dse_core::exhaustive::write_exhaustive;
use dse_core::runner::{study_dir, SPEC_FILE};
use dse_core::transfer::prepare_warm_start;
use dse_core::{
    resume_study, run_exhaustive, run_study, Calibration, DseError, OptimizerKind, OptimizerSpec,
    Problem, PruneFilter, RunOptions, SearchSpace, StudyResult, StudySpec, WorkloadSuite,
};

const SPACE_FILE: &str = "space/default.json";
const SUITE_FILE: &str = "workloads/default_suite.json";
const CALIBRATION_FILE: &str = "costmodel/default_calibration.json";

#[derive(Parser, Debug)]
#[command(
    name = "dse",
    version,
    about = "Design-space exploration for edge ML accelerators",
    after_help = "Settings resolve as: command-line flags, then APOLLO_DSE_* environment variables, then the spec file."
)]
struct Cli {
    /// Directory holding space/, workloads/ and costmodel/ definitions.
    /// Missing files fall back to the built-in defaults.
    #[arg(long, global = true, env = "APOLLO_DSE_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect the search space.
    Space {
        #[command(subcommand)]
        command: SpaceCommand,
    },
    /// Run a study.
    Run(RunArgs),
    /// Continue an interrupted study from its logs.
    Resume(ResumeArgs),
    /// Run a target study warm-started from a finished source study.
    Transfer(TransferArgs),
    /// Evaluate every configuration of a pruned region.
    Exhaustive(ExhaustiveArgs),
    /// Compare finished studies.
    Report(ReportArgs),
    /// Schema-check configuration files.
    Validate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
enum SpaceCommand {
    /// Print parameters and cardinality.
    Info,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Run a single seed with this value (overrides base_seed and n_seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum concurrent evaluations.
    #[arg(long, env = "APOLLO_DSE_WORKERS")]
    workers: Option<usize>,
    /// Trials per seed.
    #[arg(long)]
    trials: Option<usize>,
}

impl Overrides {
    fn apply(&self, spec: &mut StudySpec) {
        if let Some(s) = self.seed {
            spec.base_seed = s;
            spec.n_seeds = 1;
        }
        if let Some(w) = self.workers {
            spec.max_concurrent = w;
        }
        if let Some(t) = self.trials {
            spec.trial_budget = t;
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Study spec JSON. Without it, a multi-model geomean-speedup study
    /// over every workload is built from the flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Strategy: random, evolutionary, mbo, p3bo or gp_bo.
    #[arg(long)]
    optimizer: Option<String>,
    /// Study name (directory under --root).
    #[arg(long)]
    name: Option<String>,
    /// Area budget in mm².
    #[arg(long)]
    area_budget: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
    /// Directory that holds study directories.
    #[arg(long, default_value = "study")]
    root: PathBuf,
    /// Overwrite an existing study directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ResumeArgs {
    /// Study directory containing spec.json and seed logs.
    dir: PathBuf,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// Finished source study directory.
    #[arg(long)]
    source: PathBuf,
    /// Only source trials with reward at or below this are transferred.
    #[arg(long)]
    threshold: f64,
    #[arg(long)]
    target_spec: PathBuf,
    /// Maximum number of seed trials.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "study")]
    root: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ExhaustiveArgs {
    /// Prune filter JSON. Defaults to the built-in filter.
    #[arg(long)]
    filter: Option<PathBuf>,
    /// Spec supplying the objective, workloads and area budget.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "APOLLO_DSE_WORKERS", default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Study directories, or directories containing study directories.
    #[arg(required = true)]
    studies: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Files to check. Without any, the data directory (or the built-in
    /// defaults) is checked.
    files: Vec<PathBuf>,
}

/// An error caused by the caller's input rather than by the tool.
#[derive(Debug)]
struct UserError(String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UserError(msg.into()))
}

fn is_user_error(err: &anyhow::Error) -> bool {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return true;
        }
        if let Some(e) = cause.downcast_ref::<DseError>() {
            return !matches!(e, DseError::Io { .. } | DseError::SingularKernel { .. });
        }
    }
    false
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_user_error(&e) { 1 } else { 2 })
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let data = cli.data_dir.as_deref();
    match cli.command {
        Command::Space {
            command: SpaceCommand::Info,
        } => space_info(data),
        Command::Run(args) => run(data, args),
        Command::Resume(args) => resume(data, args),
        Command::Transfer(args) => transfer(data, args),
        Command::Exhaustive(args) => exhaustive(data, args),
        Command::Report(args) => report(data, args),
        Command::Validate(args) => validate(data, args),
    }
}

fn data_file(data: Option<&Path>, rel: &str) -> Option<PathBuf> {
    data.map(|d| d.join(rel)).filter(|p| p.exists())
}

fn load_space(data: Option<&Path>) -> anyhow::Result<SearchSpace> {
    Ok(match data_file(data, SPACE_FILE) {
        Some(p) => SearchSpace::load(&p)?,
        None => SearchSpace::default_space(),
    })
}

fn load_problem(data: Option<&Path>) -> anyhow::Result<Problem> {
    if let Some(d) = data {
        if !d.is_dir() {
            return Err(user(format!(
                "data directory {} does not exist",
                d.display()
            )));
        }
    }
    let suite = match data_file(data, SUITE_FILE) {
        Some(p) => WorkloadSuite::load(&p)?,
        None => WorkloadSuite::default_suite(),
    };
    let calibration = match data_file(data, CALIBRATION_FILE) {
        Some(p) => Calibration::load(&p)?,
        None => Calibration::default(),
    };
    Ok(Problem::new(load_space(data)?, suite, calibration))
}

fn space_info(data: Option<&Path>) -> anyhow::Result<()> {
    let space = load_space(data)?;
    for p in space.params() {
        let values: Vec<String> = p.values.iter().map(|v| v.to_string()).collect();
        println!(
            "{:<24} {:>3} values  [{}]",
            p.name,
            p.count(),
            values.join(", ")
        );
    }
    println!("cardinality: {}", group_thousands(space.cardinality()));
    Ok(())
}

fn group_thousands(n: u128) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn print_result(dir: &Path, result: &StudyResult) {
    println!("study: {}", dir.display());
    for s in &result.best_per_seed {
        println!(
            "seed {}: {} trials, best reward {:.6} at trial {}",
            s.seed,
            s.n_trials,
            s.best_reward,
            s.best_trial_index
                .map_or("-".to_string(), |i| i.to_string())
        );
    }
    println!("wall time: {:.2}s", result.wall_time_s);
}

fn run(data: Option<&Path>, args: RunArgs) -> anyhow::Result<()> {
    let problem = load_problem(data)?;
    let mut spec = match &args.spec {
        Some(p) => StudySpec::load(p)?,
        None => {
            let kind = args.optimizer.as_deref().unwrap_or("random");
            let name = args.name.clone().unwrap_or_else(|| kind.to_string());
            StudySpec::geomean(
                &name,
                problem.suite.names(),
                args.area_budget,
                OptimizerSpec::new(OptimizerKind::parse(kind)?),
            )
        }
    };
    if args.spec.is_some() {
        if let Some(kind) = &args.optimizer {
            spec.optimizer = OptimizerSpec::new(OptimizerKind::parse(kind)?);
        }
        if let Some(name) = &args.name {
            spec.name = name.clone();
        }
        if args.area_budget.is_some() {
            spec.area_budget_mm2 = args.area_budget;
        }
    }
    args.overrides.apply(&mut spec);
    spec.validate()?;
    println!("spec hash: {}", spec.hash());
    let opts = RunOptions {
        root: Some(args.root.clone()),
        force: args.force,
        warm_start: None,
    };
    let result = run_study(&spec, &problem, &opts)?;
    print_result(&study_dir(&args.root, &spec), &result);
    Ok(())
}

fn resume(data: Option<&Path>, args: ResumeArgs) -> anyhow::Result<()> {
    let problem = load_problem(data)?;
    let spec = StudySpec::load(args.dir.join(SPEC_FILE))?;
    println!("spec hash: {}", spec.hash());
    let result = resume_study(&args.dir, &problem, None)?;
    print_result(&args.dir, &result);
    Ok(())
}

fn transfer(data: Option<&Path>, args: TransferArgs) -> anyhow::Result<()> {
    let problem = load_problem(data)?;
    let mut spec = StudySpec::load(&args.target_spec)?;
    args.overrides.apply(&mut spec);
    spec.validate()?;
    println!("spec hash: {}", spec.hash());
    let warm = prepare_warm_start(&args.source, &spec, &problem, args.threshold, args.count)?;
    println!(
        "transferred {} seed trials from {}",
        warm.records.len(),
        warm.source
    );
    let opts = RunOptions {
        root: Some(args.root.clone()),
        force: args.force,
        warm_start: Some(warm),
    };
    let result = run_study(&spec, &problem, &opts)?;
    print_result(&study_dir(&args.root, &spec), &result);
    Ok(())
}

fn exhaustive(data: Option<&Path>, args: ExhaustiveArgs) -> anyhow::Result<()> {
    let problem = load_problem(data)?;
    let spec = StudySpec::load(&args.spec)?;
    println!("spec hash: {}", spec.hash());
    let filter = match &args.filter {
        Some(p) => PruneFilter::load(p)?,
        None => PruneFilter::default(),
    };
    let evaluator = problem.evaluator(&spec)?;
    let result = run_exhaustive(
        &problem.space,
        &filter,
        &evaluator,
        &problem.calibration,
        spec.area_budget_mm2,
        args.workers.max(1),
    )?;
    let summary = write_exhaustive(&problem.space, &result, &args.out)?;
    println!("survivors_count: {}", summary.survivors_count);
    println!("best reward: {:.6}", summary.best_reward);
    println!("best genome: {:?}", summary.best_genome.genome());
    println!("output: {}", args.out.display());
    Ok(())
}

/// Expands roots into the study directories beneath them.
fn collect_studies(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            return Err(user(format!("{} is not a directory", p.display())));
        }
        if p.join(SPEC_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join(SPEC_FILE).is_file())
            .collect();
        if children.is_empty() {
            return Err(user(format!("no studies found in {}", p.display())));
        }
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

fn report(data: Option<&Path>, args: ReportArgs) -> anyhow::Result<()> {
    let space = load_space(data)?;
    let studies = collect_studies(&args.studies)?;
    let report = compare_report(&space, &studies, &args.out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{:<24} {:>12} {:>12} {:>12}",
        "strategy", "median best", "feasibility", "uniqueness"
    );
    for s in &report.strategies {
        println!(
            "{:<24} {:>12.6} {:>12.4} {:>12.4}",
            s.strategy, s.final_best_median, s.feasibility_ratio_median, s.uniqueness_ratio_median
        );
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

/// Schema kinds recognized by `validate`, tried in order.
fn check_file(path: &Path) -> anyhow::Result<&'static str> {
    let text =
        std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        dse_core::runner::read_log(path)?;
        return Ok("trial log");
    }
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| user(format!("{}: not valid JSON: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| user(format!("{}: expected a JSON object", path.display())))?;
    let kind = if obj.contains_key("optimizer") {
        StudySpec::from_json(&text).map(|_| "study spec")?
    } else if obj.contains_key("params") {
        SearchSpace::from_json(&text).map(|_| "space")?
    } else if obj.contains_key("workloads") {
        WorkloadSuite::from_json(&text).map(|_| "workload suite")?
    } else if obj.contains_key("clock_hz") {
        Calibration::from_json(&text).map(|_| "calibration")?
    } else if obj.contains_key("total_memory_mb_range") {
        PruneFilter::from_json(&text).map(|_| "prune filter")?
    } else {
        return Err(user(format!(
            "{}: unrecognized configuration file",
            path.display()
        )));
    };
    Ok(kind)
}

fn validate(data: Option<&Path>, args: ValidateArgs) -> anyhow::Result<()> {
    let files: Vec<PathBuf> = if args.files.is_empty() {
        match data {
            Some(d) => [SPACE_FILE, SUITE_FILE, CALIBRATION_FILE]
                .iter()
                .map(|r| d.join(r))
                .filter(|p| p.exists())
                .collect(),
            None => Vec::new(),
        }
    } else {
        args.files.clone()
    };
    if files.is_empty() {
        load_problem(None)?;
        println!("built-in defaults: ok");
        return Ok(());
    }
    let mut failures = 0;
    for f in &files {
        match check_file(f) {
            Ok(kind) => println!("{}: ok ({kind})", f.display()),
            Err(e) => {
                failures += 1;
                println!("{}: {e:#}", f.display());
            }
        }
    }
    if failures > 0 {
        return Err(user(format!(
            "{failures} of {} files failed validation",
            files.len()
        )));
    }
    if args.files.is_empty() {
        load_problem(data)
            .map_err(|e| user(format!("data directory does not load as a whole: {e:#}")))?;
    }
    Ok(())
}
