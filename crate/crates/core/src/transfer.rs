//! Transfer between studies that differ in area budget: seed-trial
//! selection from a source study and warm starts of target strategies.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{DseError, Result};
use crate::objective::StudySpec;
use crate::optimizers::{Optimizer, TrialRecord};
use crate::runner::{load_study_logs, Problem, TrialEvaluator, WarmStart};

/// Unique feasible source trials with `area_mm2 <= target_area_budget` and
/// `reward <= reward_threshold`, best first, at most `count`.
pub fn select_seed_trials(
    source: &[TrialRecord],
    target_area_budget: f64,
    reward_threshold: f64,
    count: usize,
) -> Result<Vec<TrialRecord>> {
    let mut seen = HashSet::new();
    let mut picked: Vec<&TrialRecord> = source
        .iter()
        .filter(|r| r.feasible && r.area_mm2 <= target_area_budget && r.reward <= reward_threshold)
        .filter(|r| seen.insert(r.config.clone()))
        .collect();
    if picked.is_empty() {
        return Err(DseError::NoTransferableTrials(format!(
            "no unique feasible trial with area <= {target_area_budget} mm2 and reward <= {reward_threshold}"
        )));
    }
    picked.sort_by(|a, b| b.reward.total_cmp(&a.reward));
    picked.truncate(count);
    Ok(picked.into_iter().cloned().collect())
}

/// Re-scores seeds under the target objective and tags their provenance.
/// Seeds that are infeasible under the target are dropped.
pub fn rescore(
    seeds: &[TrialRecord],
    evaluator: &dyn TrialEvaluator,
    source: &str,
) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::with_capacity(seeds.len());
    for s in seeds {
        let o = evaluator.evaluate(&s.config)?;
        if !o.feasible {
            continue;
        }
        let mut r = s.clone();
        r.feasible = true;
        r.infeasibility_reasons = o.reasons;
        r.area_mm2 = o.area_mm2;
        r.latency_s = o.latency_s;
        r.reward = o.reward;
        r.transfer_source = Some(source.to_string());
        out.push(r);
    }
    Ok(out)
}

/// Initializes an evolutionary or portfolio population from seeds.
pub fn warm_start_population(handle: &mut dyn Optimizer, seeds: &[TrialRecord]) {
    handle.warm_start(seeds);
}

/// Fits the base level of a GP-BO stack on source records.
pub fn warm_start_gp_stack(source: &[TrialRecord], handle: &mut dyn Optimizer) {
    handle.warm_start(source);
}

/// Selects seeds from every log of a source study directory and re-scores
/// them for the target study.
pub fn prepare_warm_start(
    source_dir: &Path,
    target: &StudySpec,
    problem: &Problem,
    reward_threshold: f64,
    count: usize,
) -> Result<WarmStart> {
    let (_, logs) = load_study_logs(source_dir)?;
    let all: Vec<TrialRecord> = logs.into_iter().flatten().collect();
    let source = source_dir.display().to_string();
    warm_start_from_records(&all, &source, target, problem, reward_threshold, count)
}

pub fn warm_start_from_records(
    source_records: &[TrialRecord],
    source: &str,
    target: &StudySpec,
    problem: &Problem,
    reward_threshold: f64,
    count: usize,
) -> Result<WarmStart> {
    let budget = target.area_budget_mm2.unwrap_or(f64::INFINITY);
    let seeds = select_seed_trials(source_records, budget, reward_threshold, count)?;
    let evaluator = problem.evaluator(target)?;
    let records = rescore(&seeds, &evaluator, source)?;
    if records.is_empty() {
        return Err(DseError::NoTransferableTrials(
            "every selected trial is infeasible under the target".into(),
        ));
    }
    Ok(WarmStart {
        records,
        source: source.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::AcceleratorConfig;

    fn rec(g: usize, reward: f64, area: f64) -> TrialRecord {
        let mut r = TrialRecord::synthetic(AcceleratorConfig::from_genome(vec![g; 10]), reward, g);
        r.area_mm2 = area;
        r
    }

    #[test]
    fn filters_and_orders() {
        let src = vec![
            rec(0, 0.5, 4.0),
            rec(1, 0.9, 4.0),
            rec(2, 0.7, 5.0),
            rec(3, 0.3, 4.5),
            rec(4, 0.0, 1.0),
        ];
        let s = select_seed_trials(&src, 4.8, 0.8, 100).unwrap();
        let rewards: Vec<f64> = s.iter().map(|r| r.reward).collect();
        assert_eq!(rewards, vec![0.5, 0.3]);
        for r in &s {
            assert!(r.area_mm2 <= 4.8 && r.reward <= 0.8);
        }
        assert_eq!(select_seed_trials(&src, 4.8, 0.8, 1).unwrap().len(), 1);
    }

    #[test]
    fn zero_threshold_has_nothing_to_transfer() {
        let src = vec![rec(0, 0.5, 4.0)];
        assert!(matches!(
            select_seed_trials(&src, 4.8, 0.0, 100),
            Err(DseError::NoTransferableTrials(_))
        ));
    }

    #[test]
    fn duplicates_count_once() {
        let src = vec![rec(0, 0.5, 4.0), rec(0, 0.5, 4.0), rec(1, 0.4, 4.0)];
        assert_eq!(select_seed_trials(&src, 4.8, 0.8, 100).unwrap().len(), 2);
    }
}
