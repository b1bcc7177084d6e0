//! Study-level behavior through the filesystem: determinism, resume and
//! transfer provenance.

use std::fs;
use std::path::Path;

use dse_core::runner::{read_log, seed_log_path, SEEDS_FILE};
use dse_core::transfer::{prepare_warm_start, select_seed_trials};
use dse_core::{
    resume_study, run_study, DseError, OptimizerKind, OptimizerSpec, Problem, RunOptions, StudySpec,
};

fn spec(name: &str, kind: OptimizerKind, budget: usize, area: f64) -> StudySpec {
    let problem = Problem::default();
    let mut s = StudySpec::geomean(
        name,
        problem.suite.names(),
        Some(area),
        OptimizerSpec::new(kind),
    );
    s.trial_budget = budget;
    s.n_seeds = 2;
    s.max_concurrent = 1;
    s
}

fn opts(root: &Path) -> RunOptions {
    RunOptions {
        root: Some(root.to_path_buf()),
        ..Default::default()
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn sequential_studies_are_bit_identical() {
    let problem = Problem::default();
    for kind in [
        OptimizerKind::Random,
        OptimizerKind::Evolutionary,
        OptimizerKind::Mbo,
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s = spec("det", kind, 80, 6.8);
        run_study(&s, &problem, &opts(a.path())).unwrap();
        run_study(&s, &problem, &opts(b.path())).unwrap();
        for k in 0..2 {
            let la = read(&seed_log_path(&a.path().join("det"), k));
            let lb = read(&seed_log_path(&b.path().join("det"), k));
            assert_eq!(la.lines().count(), 80);
            assert_eq!(la, lb, "{kind:?} seed {k}");
        }
    }
}

/// Cuts every seed log to `keep` lines, resumes, and expects the exact
/// uninterrupted logs back.
fn check_resume(kind: OptimizerKind, budget: usize, keep: usize) {
    let problem = Problem::default();
    let s = spec("resume", kind, budget, 6.8);
    let full = tempfile::tempdir().unwrap();
    run_study(&s, &problem, &opts(full.path())).unwrap();

    let cut = tempfile::tempdir().unwrap();
    run_study(&s, &problem, &opts(cut.path())).unwrap();
    let dir = cut.path().join("resume");
    for k in 0..2 {
        let path = seed_log_path(&dir, k);
        let text = read(&path);
        let head: Vec<&str> = text.lines().take(keep).collect();
        fs::write(&path, head.join("\n") + "\n").unwrap();
    }
    let resumed = resume_study(&dir, &problem, Some(&s)).unwrap();
    assert_eq!(resumed.logs[0].len(), budget);
    for k in 0..2 {
        let got = read(&seed_log_path(&dir, k));
        let want = read(&seed_log_path(&full.path().join("resume"), k));
        for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
            assert_eq!(g, w, "{kind:?} seed {k} line {i}");
        }
        assert_eq!(got.lines().count(), want.lines().count());
    }
}

#[test]
fn resume_replays_to_identical_logs() {
    check_resume(OptimizerKind::Random, 60, 25);
    check_resume(OptimizerKind::Evolutionary, 300, 170);
    check_resume(OptimizerKind::GpBo, 30, 18);
}

#[test]
fn resume_rejects_a_different_spec() {
    let problem = Problem::default();
    let root = tempfile::tempdir().unwrap();
    let s = spec("guarded", OptimizerKind::Random, 5, 6.8);
    run_study(&s, &problem, &opts(root.path())).unwrap();
    let mut other = s.clone();
    other.trial_budget = 6;
    let err = resume_study(&root.path().join("guarded"), &problem, Some(&other)).unwrap_err();
    assert!(matches!(err, DseError::SpecHashMismatch { .. }));
}

#[test]
fn existing_study_needs_force() {
    let problem = Problem::default();
    let root = tempfile::tempdir().unwrap();
    let s = spec("twice", OptimizerKind::Random, 3, 6.8);
    run_study(&s, &problem, &opts(root.path())).unwrap();
    assert!(run_study(&s, &problem, &opts(root.path())).is_err());
    let forced = RunOptions {
        force: true,
        ..opts(root.path())
    };
    run_study(&s, &problem, &forced).unwrap();
}

#[test]
fn transfer_seeds_are_filtered_and_tagged() {
    let problem = Problem::default();
    let root = tempfile::tempdir().unwrap();
    let source = spec("source", OptimizerKind::Evolutionary, 400, 6.8);
    run_study(&source, &problem, &opts(root.path())).unwrap();
    let source_dir = root.path().join("source");

    let mut target = spec("target", OptimizerKind::Evolutionary, 40, 4.8);
    target.n_seeds = 1;
    let warm = prepare_warm_start(&source_dir, &target, &problem, 0.8, 100).unwrap();
    assert!(!warm.records.is_empty() && warm.records.len() <= 100);
    for r in &warm.records {
        assert!(r.feasible && r.area_mm2 <= 4.8 && r.reward <= 0.8 && r.reward > 0.0);
        assert_eq!(r.transfer_source.as_deref(), Some(warm.source.as_str()));
    }
    let n_seeds = warm.records.len();
    let run = RunOptions {
        warm_start: Some(warm),
        ..opts(root.path())
    };
    let result = run_study(&target, &problem, &run).unwrap();
    // Seeds do not consume the target budget.
    assert_eq!(result.logs[0].len(), 40);
    assert!(result.logs[0].iter().all(|r| r.transfer_source.is_some()));
    assert_eq!(
        read_log(&root.path().join("target").join(SEEDS_FILE))
            .unwrap()
            .len(),
        n_seeds
    );

    // Zero threshold leaves nothing to transfer.
    let all: Vec<_> = read_log(&seed_log_path(&source_dir, 0)).unwrap();
    assert!(matches!(
        select_seed_trials(&all, 4.8, 0.0, 100),
        Err(DseError::NoTransferableTrials(_))
    ));
}

#[test]
fn concurrent_study_keeps_protocol() {
    let problem = Problem::default();
    let mut s = spec("conc", OptimizerKind::Evolutionary, 500, 4.8);
    s.max_concurrent = 16;
    let r = run_study(&s, &problem, &RunOptions::default()).unwrap();
    for log in &r.logs {
        assert_eq!(log.len(), 500);
        for (i, rec) in log.iter().enumerate() {
            assert_eq!(rec.trial_index, i);
            assert_eq!(rec.feasible, rec.infeasibility_reasons.is_empty());
            assert_eq!(rec.reward == 0.0, !rec.feasible);
            assert!(rec.completed_at_ms >= rec.proposed_at_ms);
        }
    }
}
