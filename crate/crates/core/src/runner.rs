//! Study execution: ask, evaluate with bounded concurrency, tell in
//! completion order, log every trial, repeat across seeds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::costmodel::{baseline_latencies, evaluate, Calibration, Evaluation};
use crate::error::{DseError, Result};
use crate::objective::{ClockMode, Objective, StudySpec};
use crate::optimizers::{Optimizer, TrialRecord};
use crate::space::{AcceleratorConfig, SearchSpace};
use crate::workload::WorkloadSuite;

pub const EVALUATOR_ERROR: &str = "evaluator_error";
pub const SPEC_FILE: &str = "spec.json";
pub const RESULT_FILE: &str = "result.json";
pub const SEEDS_FILE: &str = "seeds.jsonl";

/// Everything a trial is evaluated against.
#[derive(Debug, Clone)]
pub struct Problem {
    pub space: Arc<SearchSpace>,
    pub suite: Arc<WorkloadSuite>,
    pub calibration: Arc<Calibration>,
}

impl Default for Problem {
    fn default() -> Self {
        Problem::new(
            SearchSpace::default_space(),
            WorkloadSuite::default_suite(),
            Calibration::default(),
        )
    }
}

impl Problem {
    pub fn new(space: SearchSpace, suite: WorkloadSuite, calibration: Calibration) -> Self {
        Problem {
            space: Arc::new(space),
            suite: Arc::new(suite),
            calibration: Arc::new(calibration),
        }
    }

    /// The study objective with baselines resolved against this problem.
    pub fn objective(&self, spec: &StudySpec) -> Result<Objective> {
        for w in &spec.workloads {
            self.suite.get(w)?;
        }
        let baselines = baseline_latencies(&self.space, &self.suite, &self.calibration)?;
        Objective::new(spec, baselines)
    }

    pub fn evaluator(&self, spec: &StudySpec) -> Result<CostModelEvaluator> {
        Ok(CostModelEvaluator {
            problem: self.clone(),
            objective: self.objective(spec)?,
        })
    }
}

/// Result of evaluating one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub feasible: bool,
    pub reasons: Vec<String>,
    pub area_mm2: f64,
    pub latency_s: BTreeMap<String, f64>,
    pub reward: f64,
}

impl TrialOutcome {
    pub fn failed() -> Self {
        TrialOutcome {
            feasible: false,
            reasons: vec![EVALUATOR_ERROR.to_string()],
            area_mm2: 0.0,
            latency_s: BTreeMap::new(),
            reward: 0.0,
        }
    }

    /// Enforces reward = 0 exactly when the trial is infeasible.
    fn normalized(mut self) -> Self {
        if self.feasible && !(self.reward.is_finite() && self.reward > 0.0) {
            self.feasible = false;
            self.reasons.push(EVALUATOR_ERROR.to_string());
        }
        if !self.feasible {
            self.reward = 0.0;
            if self.reasons.is_empty() {
                self.reasons.push("infeasible".to_string());
            }
        }
        self
    }
}

pub trait TrialEvaluator: Sync {
    fn evaluate(&self, config: &AcceleratorConfig) -> Result<TrialOutcome>;
}

impl<F> TrialEvaluator for F
where
    F: Fn(&AcceleratorConfig) -> Result<TrialOutcome> + Sync,
{
    fn evaluate(&self, config: &AcceleratorConfig) -> Result<TrialOutcome> {
        self(config)
    }
}

/// The analytical cost model scored under a study objective.
#[derive(Debug, Clone)]
pub struct CostModelEvaluator {
    problem: Problem,
    objective: Objective,
}

impl CostModelEvaluator {
    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn evaluation(&self, config: &AcceleratorConfig) -> Result<Evaluation> {
        let p = &self.problem;
        evaluate(
            &p.space,
            config,
            &p.suite,
            &self.objective.spec().workloads,
            &p.calibration,
        )
    }
}

impl TrialEvaluator for CostModelEvaluator {
    fn evaluate(&self, config: &AcceleratorConfig) -> Result<TrialOutcome> {
        let e = self.evaluation(config)?;
        let s = self.objective.score(&e)?;
        Ok(TrialOutcome {
            feasible: s.feasible,
            reasons: s.reasons,
            area_mm2: e.area_mm2,
            latency_s: e.latency_s,
            reward: s.reward,
        })
    }
}

/// Panics and errors become `evaluator_error` outcomes.
fn guarded(evaluator: &dyn TrialEvaluator, config: &AcceleratorConfig) -> TrialOutcome {
    match catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(config))) {
        Ok(Ok(o)) => o.normalized(),
        Ok(Err(e)) => {
            log::warn!("evaluation of {config} failed: {e}");
            TrialOutcome::failed()
        }
        Err(_) => {
            log::warn!("evaluation of {config} panicked");
            TrialOutcome::failed()
        }
    }
}

/// Source-task trials inserted into every seed's strategy before it runs.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub records: Vec<TrialRecord>,
    pub source: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Study root; logs go to `<root>/<spec.name>/`. `None` keeps everything in memory.
    pub root: Option<PathBuf>,
    /// Replace an existing study directory.
    pub force: bool,
    pub warm_start: Option<WarmStart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub n_trials: usize,
    pub best_reward: f64,
    pub best_trial_index: Option<usize>,
    pub best_genome: Option<AcceleratorConfig>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub spec: StudySpec,
    pub logs: Vec<Vec<TrialRecord>>,
    pub wall_time_s: f64,
    pub best_per_seed: Vec<SeedSummary>,
}

/// The persisted `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub name: String,
    pub spec_hash: String,
    pub optimizer: String,
    pub trial_budget: usize,
    pub wall_time_s: f64,
    pub best_per_seed: Vec<SeedSummary>,
}

impl StudyResult {
    fn new(spec: &StudySpec, logs: Vec<Vec<TrialRecord>>, wall_time_s: f64) -> Self {
        let best_per_seed = logs
            .iter()
            .enumerate()
            .map(|(k, log)| summarize(spec.base_seed + k as u64, log))
            .collect();
        StudyResult {
            spec: spec.clone(),
            logs,
            wall_time_s,
            best_per_seed,
        }
    }

    pub fn best_rewards(&self) -> Vec<f64> {
        self.best_per_seed.iter().map(|s| s.best_reward).collect()
    }

    pub fn result_file(&self) -> ResultFile {
        ResultFile {
            name: self.spec.name.clone(),
            spec_hash: self.spec.hash(),
            optimizer: self.spec.optimizer.kind.tag().to_string(),
            trial_budget: self.spec.trial_budget,
            wall_time_s: self.wall_time_s,
            best_per_seed: self.best_per_seed.clone(),
        }
    }
}

fn summarize(seed: u64, log: &[TrialRecord]) -> SeedSummary {
    // Earliest trial wins ties.
    let best = log.iter().fold(None::<&TrialRecord>, |b, r| match b {
        Some(b) if b.reward >= r.reward => Some(b),
        _ => Some(r),
    });
    SeedSummary {
        seed,
        n_trials: log.len(),
        best_reward: best.map_or(0.0, |r| r.reward),
        best_trial_index: best.map(|r| r.trial_index),
        best_genome: best.map(|r| r.config.clone()),
    }
}

pub fn seed_log_path(dir: &Path, seed_index: usize) -> PathBuf {
    dir.join(format!("seed{seed_index}.jsonl"))
}

/// Reads a JSONL trial log. A malformed line is reported with its 1-based
/// number.
pub fn read_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| DseError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DseError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(&line)
            .map_err(|e| DseError::parse(format!("{} line {}", path.display(), i + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_log(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| DseError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(
            w,
            "{}",
            serde_json::to_string(r).expect("record serializes")
        )
        .map_err(|e| DseError::io(path, e))?;
    }
    w.flush().map_err(|e| DseError::io(path, e))
}

/// Drives one seed until `spec.trial_budget` trials are logged. `prior`
/// holds already-logged trials (resume); they must have been told to
/// `optimizer` already.
pub fn run_seed(
    spec: &StudySpec,
    seed: u64,
    space: &SearchSpace,
    evaluator: &dyn TrialEvaluator,
    optimizer: &mut dyn Optimizer,
    prior: Vec<TrialRecord>,
    mut sink: Option<&mut dyn Write>,
    transfer_source: Option<&str>,
) -> Result<Vec<TrialRecord>> {
    let budget = spec.trial_budget;
    let limit = spec.max_concurrent.max(1);
    let start = Instant::now();
    let mut log = prior;
    let mut clock: u64 = log.last().map_or(0, |r| r.completed_at_ms + 1);
    let tick = |clock: &mut u64| -> u64 {
        match spec.clock {
            ClockMode::Logical => {
                let t = *clock;
                *clock += 1;
                t
            }
            ClockMode::Wall => start.elapsed().as_millis() as u64,
        }
    };
    let mut memo: HashMap<AcceleratorConfig, TrialOutcome> = HashMap::new();
    if spec.memoize {
        for r in &log {
            memo.insert(r.config.clone(), outcome_of(r));
        }
    }
    let tag = optimizer.tag().to_string();
    let make_record = |index: usize,
                       config: AcceleratorConfig,
                       o: TrialOutcome,
                       proposed: u64,
                       completed: u64| TrialRecord {
        trial_index: index,
        seed,
        optimizer_tag: tag.clone(),
        values: space
            .params()
            .iter()
            .zip(space.values(&config))
            .map(|(p, v)| (p.name.clone(), v))
            .collect(),
        config,
        feasible: o.feasible,
        infeasibility_reasons: o.reasons,
        area_mm2: o.area_mm2,
        latency_s: o.latency_s,
        reward: o.reward,
        proposed_at_ms: proposed,
        completed_at_ms: completed,
        transfer_source: transfer_source.map(str::to_string),
    };
    let mut emit = |log: &mut Vec<TrialRecord>,
                    rec: TrialRecord,
                    optimizer: &mut dyn Optimizer|
     -> Result<()> {
        if let Some(w) = sink.as_deref_mut() {
            writeln!(
                w,
                "{}",
                serde_json::to_string(&rec).expect("record serializes")
            )
            .and_then(|_| w.flush())
            .map_err(|e| DseError::io("trial log", e))?;
        }
        optimizer.tell(std::slice::from_ref(&rec));
        log.push(rec);
        Ok(())
    };

    if limit == 1 {
        // Inline evaluation: fully deterministic.
        while log.len() < budget {
            let Some(config) = optimizer.ask(1).pop() else {
                return Err(DseError::invalid(
                    "optimizer",
                    "strategy produced no proposal",
                ));
            };
            let proposed = tick(&mut clock);
            let outcome = match memo.get(&config) {
                Some(o) => o.clone(),
                None => {
                    let o = guarded(evaluator, &config);
                    if spec.memoize {
                        memo.insert(config.clone(), o.clone());
                    }
                    o
                }
            };
            let completed = tick(&mut clock);
            let rec = make_record(log.len(), config, outcome, proposed, completed);
            emit(&mut log, rec, optimizer)?;
        }
        return Ok(log);
    }

    let (job_tx, job_rx) = mpsc::channel::<(AcceleratorConfig, u64)>();
    let (done_tx, done_rx) = mpsc::channel::<(AcceleratorConfig, u64, TrialOutcome)>();
    let job_rx = Arc::new(Mutex::new(job_rx));
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..limit {
            let job_rx = Arc::clone(&job_rx);
            let done_tx = done_tx.clone();
            scope.spawn(move || loop {
                let job = job_rx.lock().expect("job queue").recv();
                let Ok((config, proposed)) = job else { break };
                let o = guarded(evaluator, &config);
                if done_tx.send((config, proposed, o)).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);
        let result = (|| -> Result<()> {
            let mut in_flight: HashSet<AcceleratorConfig> = HashSet::new();
            let mut dispatched = log.len();
            let mut ready: Vec<(AcceleratorConfig, u64, TrialOutcome)> = Vec::new();
            while log.len() < budget {
                let want = (limit - in_flight.len()).min(budget - dispatched);
                if want > 0 {
                    for config in optimizer.ask(want) {
                        if in_flight.contains(&config) {
                            optimizer.cancel(&config);
                            continue;
                        }
                        let proposed = tick(&mut clock);
                        dispatched += 1;
                        if let Some(o) = memo.get(&config) {
                            ready.push((config, proposed, o.clone()));
                            continue;
                        }
                        in_flight.insert(config.clone());
                        job_tx.send((config, proposed)).expect("workers alive");
                    }
                }
                assert!(
                    in_flight.len() <= limit,
                    "in-flight evaluations exceed the concurrency limit"
                );
                let (config, proposed, outcome) = if let Some(r) = ready.pop() {
                    r
                } else if in_flight.is_empty() {
                    return Err(DseError::invalid(
                        "optimizer",
                        "strategy produced no proposal",
                    ));
                } else {
                    let r = done_rx.recv().expect("workers alive");
                    in_flight.remove(&r.0);
                    if spec.memoize {
                        memo.insert(r.0.clone(), r.2.clone());
                    }
                    r
                };
                let completed = tick(&mut clock);
                let rec = make_record(log.len(), config, outcome, proposed, completed);
                emit(&mut log, rec, optimizer)?;
            }
            Ok(())
        })();
        drop(job_tx);
        result
    })?;
    Ok(log)
}

fn outcome_of(r: &TrialRecord) -> TrialOutcome {
    TrialOutcome {
        feasible: r.feasible,
        reasons: r.infeasibility_reasons.clone(),
        area_mm2: r.area_mm2,
        latency_s: r.latency_s.clone(),
        reward: r.reward,
    }
}

/// Directory of a named study under `root`.
pub fn study_dir(root: &Path, spec: &StudySpec) -> PathBuf {
    root.join(&spec.name)
}

fn prepare_dir(dir: &Path, spec: &StudySpec, force: bool, warm: Option<&WarmStart>) -> Result<()> {
    if dir.exists() {
        if !force {
            return Err(DseError::invalid(
                "study",
                format!(
                    "{} already exists (use --force to overwrite)",
                    dir.display()
                ),
            ));
        }
        fs::remove_dir_all(dir).map_err(|e| DseError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| DseError::io(dir, e))?;
    let spec_path = dir.join(SPEC_FILE);
    fs::write(&spec_path, spec.to_json()).map_err(|e| DseError::io(&spec_path, e))?;
    if let Some(w) = warm {
        write_log(&dir.join(SEEDS_FILE), &w.records)?;
    }
    Ok(())
}

fn write_result(dir: &Path, result: &StudyResult) -> Result<()> {
    let path = dir.join(RESULT_FILE);
    let text = serde_json::to_string_pretty(&result.result_file()).expect("result serializes");
    fs::write(&path, text).map_err(|e| DseError::io(&path, e))
}

/// Runs every seed of the study with the cost-model evaluator.
pub fn run_study(spec: &StudySpec, problem: &Problem, opts: &RunOptions) -> Result<StudyResult> {
    spec.validate()?;
    let evaluator = problem.evaluator(spec)?;
    run_study_with(spec, problem.space.clone(), &evaluator, opts)
}

/// [`run_study`] with an arbitrary evaluator.
pub fn run_study_with(
    spec: &StudySpec,
    space: Arc<SearchSpace>,
    evaluator: &dyn TrialEvaluator,
    opts: &RunOptions,
) -> Result<StudyResult> {
    spec.validate()?;
    let dir = opts.root.as_ref().map(|r| study_dir(r, spec));
    if let Some(d) = &dir {
        prepare_dir(d, spec, opts.force, opts.warm_start.as_ref())?;
    }
    let start = Instant::now();
    let mut logs = Vec::with_capacity(spec.n_seeds);
    for k in 0..spec.n_seeds {
        let seed = spec.base_seed + k as u64;
        let mut optimizer = spec.optimizer.build(space.clone(), seed)?;
        if let Some(w) = &opts.warm_start {
            optimizer.warm_start(&w.records);
        }
        let source = opts.warm_start.as_ref().map(|w| w.source.as_str());
        let log = match &dir {
            Some(d) => {
                let path = seed_log_path(d, k);
                let file = File::create(&path).map_err(|e| DseError::io(&path, e))?;
                let mut w = BufWriter::new(file);
                run_seed(
                    spec,
                    seed,
                    &space,
                    evaluator,
                    optimizer.as_mut(),
                    Vec::new(),
                    Some(&mut w),
                    source,
                )?
            }
            None => run_seed(
                spec,
                seed,
                &space,
                evaluator,
                optimizer.as_mut(),
                Vec::new(),
                None,
                source,
            )?,
        };
        log::info!(
            "{}: seed {seed} done, best reward {:.6}",
            spec.name,
            log.iter().map(|r| r.reward).fold(0.0, f64::max)
        );
        logs.push(log);
    }
    let result = StudyResult::new(spec, logs, start.elapsed().as_secs_f64());
    if let Some(d) = &dir {
        write_result(d, &result)?;
    }
    Ok(result)
}

/// Loads the spec stored in a study directory.
pub fn load_study_spec(dir: &Path) -> Result<StudySpec> {
    StudySpec::load(dir.join(SPEC_FILE))
}

/// Loads every seed log present in a study directory, in seed order.
pub fn load_study_logs(dir: &Path) -> Result<(StudySpec, Vec<Vec<TrialRecord>>)> {
    let spec = load_study_spec(dir)?;
    let mut logs = Vec::new();
    for k in 0..spec.n_seeds {
        let path = seed_log_path(dir, k);
        if !path.exists() {
            break;
        }
        logs.push(read_log(&path)?);
    }
    Ok((spec, logs))
}

/// Restores each seed's strategy by replaying its log, then continues the
/// study to its budget. Replay asks before each tell so that strategies
/// whose state depends only on (seed, tells) resume exactly; once a replayed
/// ask disagrees with the log, the rest is told without asking.
pub fn resume_study(
    dir: &Path,
    problem: &Problem,
    expected: Option<&StudySpec>,
) -> Result<StudyResult> {
    let spec = load_study_spec(dir)?;
    if let Some(e) = expected {
        let (want, have) = (e.hash(), spec.hash());
        if want != have {
            return Err(DseError::SpecHashMismatch {
                expected: want,
                actual: have,
            });
        }
    }
    let evaluator = problem.evaluator(&spec)?;
    let seeds_path = dir.join(SEEDS_FILE);
    let warm = if seeds_path.exists() {
        let records = read_log(&seeds_path)?;
        let source = records
            .iter()
            .find_map(|r| r.transfer_source.clone())
            .unwrap_or_default();
        Some(WarmStart { records, source })
    } else {
        None
    };
    let start = Instant::now();
    let mut logs = Vec::with_capacity(spec.n_seeds);
    for k in 0..spec.n_seeds {
        let seed = spec.base_seed + k as u64;
        let path = seed_log_path(dir, k);
        let mut prior = if path.exists() {
            read_log(&path)?
        } else {
            Vec::new()
        };
        prior.truncate(spec.trial_budget);
        let mut optimizer = spec.optimizer.build(problem.space.clone(), seed)?;
        if let Some(w) = &warm {
            optimizer.warm_start(&w.records);
        }
        replay(optimizer.as_mut(), &prior);
        write_log(&path, &prior)?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| DseError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let source = warm.as_ref().map(|w| w.source.as_str());
        let log = run_seed(
            &spec,
            seed,
            &problem.space,
            &evaluator,
            optimizer.as_mut(),
            prior,
            Some(&mut w),
            source,
        )?;
        logs.push(log);
    }
    let result = StudyResult::new(&spec, logs, start.elapsed().as_secs_f64());
    write_result(dir, &result)?;
    Ok(result)
}

/// Feeds a logged history back into a fresh strategy.
pub fn replay(optimizer: &mut dyn Optimizer, records: &[TrialRecord]) {
    let mut in_sync = true;
    for r in records {
        if in_sync {
            match optimizer.ask(1).pop() {
                Some(c) if c == r.config => {}
                Some(c) => {
                    optimizer.cancel(&c);
                    in_sync = false;
                }
                None => in_sync = false,
            }
        }
        optimizer.tell(std::slice::from_ref(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{OptimizerKind, OptimizerSpec};

    fn spec(kind: OptimizerKind, budget: usize, conc: usize) -> StudySpec {
        let mut s = StudySpec::geomean(
            "unit",
            WorkloadSuite::default_suite().names(),
            Some(6.8),
            OptimizerSpec::new(kind),
        );
        s.trial_budget = budget;
        s.max_concurrent = conc;
        s.n_seeds = 1;
        s
    }

    #[test]
    fn sequential_budget_and_dense_indices() {
        let problem = Problem::default();
        let r = run_study(
            &spec(OptimizerKind::Random, 10, 1),
            &problem,
            &RunOptions::default(),
        )
        .unwrap();
        let log = &r.logs[0];
        assert_eq!(log.len(), 10);
        for (i, rec) in log.iter().enumerate() {
            assert_eq!(rec.trial_index, i);
            assert_eq!(rec.reward == 0.0, !rec.feasible);
            assert_eq!(rec.proposed_at_ms, 2 * i as u64);
            assert_eq!(rec.completed_at_ms, 2 * i as u64 + 1);
        }
    }

    #[test]
    fn concurrent_budget_is_exact() {
        let problem = Problem::default();
        let r = run_study(
            &spec(OptimizerKind::Evolutionary, 100, 8),
            &problem,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(r.logs[0].len(), 100);
        let idx: Vec<usize> = r.logs[0].iter().map(|t| t.trial_index).collect();
        assert_eq!(idx, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn panicking_evaluator_is_recorded() {
        let space = Arc::new(SearchSpace::default_space());
        let eval = |c: &AcceleratorConfig| -> Result<TrialOutcome> {
            if c.genome()[0] % 2 == 0 {
                panic!("boom");
            }
            Ok(TrialOutcome {
                feasible: true,
                reasons: vec![],
                area_mm2: 1.0,
                latency_s: BTreeMap::new(),
                reward: 1.0,
            })
        };
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let r = run_study_with(
            &spec(OptimizerKind::Random, 40, 4),
            space,
            &eval,
            &RunOptions::default(),
        );
        std::panic::set_hook(prev);
        let log = &r.unwrap().logs[0];
        assert_eq!(log.len(), 40);
        for rec in log {
            if rec.config.genome()[0] % 2 == 0 {
                assert_eq!(rec.infeasibility_reasons, vec![EVALUATOR_ERROR.to_string()]);
                assert_eq!(rec.reward, 0.0);
            } else {
                assert!(rec.feasible);
            }
        }
    }

    #[test]
    fn memoization_reuses_outcomes() {
        let space = Arc::new(SearchSpace::default_space());
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let eval = |_: &AcceleratorConfig| -> Result<TrialOutcome> {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(TrialOutcome {
                feasible: true,
                reasons: vec![],
                area_mm2: 1.0,
                latency_s: BTreeMap::new(),
                reward: 1.0,
            })
        };
        let mut s = spec(OptimizerKind::Evolutionary, 300, 1);
        s.memoize = true;
        s.optimizer = OptimizerSpec::with_params(
            OptimizerKind::Evolutionary,
            serde_json::json!({"population": 4, "dedup_attempts": 1}),
        );
        let r = run_study_with(&s, space, &eval, &RunOptions::default()).unwrap();
        let unique: HashSet<_> = r.logs[0].iter().map(|t| t.config.clone()).collect();
        assert_eq!(
            calls.load(std::sync::atomic::Ordering::SeqCst),
            unique.len()
        );
    }

    #[test]
    fn corrupted_line_names_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seed0.jsonl");
        let problem = Problem::default();
        let r = run_study(
            &spec(OptimizerKind::Random, 3, 1),
            &problem,
            &RunOptions::default(),
        )
        .unwrap();
        write_log(&path, &r.logs[0]).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        fs::write(&path, text).unwrap();
        let err = read_log(&path).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
    }
}
