//! Semi-exhaustive baseline: domain pruning and an area pre-filter, then
//! full evaluation of the survivors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costmodel::{area, Calibration};
use crate::error::{DseError, Result};
use crate::optimizers::TrialRecord;
use crate::runner::{write_log, TrialEvaluator, TrialOutcome};
use crate::space::{AcceleratorConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneFilter {
    /// Inclusive bounds on global + parameter + activation + all local memory, MB.
    pub total_memory_mb_range: [f64; 2],
    /// Inclusive bounds on PEs-X × PEs-Y.
    pub total_pes_range: [u64; 2],
    /// Inclusive genome-index bounds per parameter name.
    #[serde(default)]
    pub index_ranges: BTreeMap<String, [usize; 2]>,
}

impl Default for PruneFilter {
    /// The two stated ranges plus per-parameter clamps to a typical edge
    /// configuration.
    fn default() -> Self {
        let clamps: [(&str, [usize; 2]); 10] = [
            ("pes_x", [1, 3]),
            ("pes_y", [1, 3]),
            ("local_memory_kb", [3, 4]),
            ("simd_units", [3, 5]),
            ("global_memory_mb", [2, 6]),
            ("compute_lanes", [1, 3]),
            ("instruction_memory_kb", [2, 2]),
            ("parameter_memory_mb", [1, 3]),
            ("activation_memory_mb", [2, 4]),
            ("io_bandwidth_gbps", [3, 3]),
        ];
        PruneFilter {
            index_ranges: clamps.iter().map(|(n, r)| (n.to_string(), *r)).collect(),
            ..PruneFilter::ranges_only()
        }
    }
}

impl PruneFilter {
    /// Only the total-memory and total-PE ranges.
    pub fn ranges_only() -> Self {
        PruneFilter {
            total_memory_mb_range: [4.0, 16.0],
            total_pes_range: [2, 16],
            index_ranges: BTreeMap::new(),
        }
    }

    /// No pruning at all.
    pub fn unbounded() -> Self {
        PruneFilter {
            total_memory_mb_range: [0.0, f64::INFINITY],
            total_pes_range: [0, u64::MAX],
            index_ranges: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PruneFilter =
            serde_json::from_str(text).map_err(|e| DseError::parse("prune filter", e))?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DseError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.total_memory_mb_range;
        if !(lo <= hi) {
            return Err(DseError::invalid(
                "total_memory_mb_range",
                "lo must not exceed hi",
            ));
        }
        if self.total_pes_range[0] > self.total_pes_range[1] {
            return Err(DseError::invalid(
                "total_pes_range",
                "lo must not exceed hi",
            ));
        }
        for (name, [l, h]) in &self.index_ranges {
            if l > h {
                return Err(DseError::invalid(
                    format!("index_ranges.{name}"),
                    "lo must not exceed hi",
                ));
            }
        }
        Ok(())
    }

    /// Index box implied by `index_ranges`, clipped to the space.
    fn index_box(&self, space: &SearchSpace) -> Result<(Vec<usize>, Vec<usize>)> {
        for name in self.index_ranges.keys() {
            if !space.params().iter().any(|p| &p.name == name) {
                return Err(DseError::invalid(
                    format!("index_ranges.{name}"),
                    "unknown parameter",
                ));
            }
        }
        let mut lo = Vec::with_capacity(space.len());
        let mut hi = Vec::with_capacity(space.len());
        for p in space.params() {
            let [l, h] = self
                .index_ranges
                .get(&p.name)
                .copied()
                .unwrap_or([0, usize::MAX]);
            lo.push(l);
            hi.push(h.min(p.count() - 1));
        }
        Ok((lo, hi))
    }

    /// Range predicate over derived totals.
    pub fn admits(&self, space: &SearchSpace, config: &AcceleratorConfig) -> bool {
        let Ok(hw) = space.hardware(config) else {
            return false;
        };
        let mem = hw.total_memory_mb();
        let pes = hw.num_pes();
        let [mlo, mhi] = self.total_memory_mb_range;
        let [plo, phi] = self.total_pes_range;
        mem >= mlo && mem <= mhi && pes >= plo as f64 && pes <= phi as f64
    }
}

/// Lazily yields configs inside the filter's index box that pass the range
/// predicates and, when given, the area budget. Row-major order.
pub fn prune_enumerate<'a>(
    space: &'a SearchSpace,
    filter: &'a PruneFilter,
    cal: &'a Calibration,
    area_budget: Option<f64>,
) -> Result<impl Iterator<Item = AcceleratorConfig> + 'a> {
    filter.validate()?;
    let (lo, hi) = filter.index_box(space)?;
    Ok(space.iter_box(lo, hi).filter(move |c| {
        filter.admits(space, c)
            && area_budget.is_none_or(|a| {
                space
                    .hardware(c)
                    .map(|hw| area(&hw, cal) <= a)
                    .unwrap_or(false)
            })
    }))
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub best_config: AcceleratorConfig,
    pub best_reward: f64,
    pub n_evaluated: usize,
    pub evaluations: Vec<TrialRecord>,
}

/// Evaluates every survivor with up to `workers` threads. The best reward
/// wins; ties go to the earliest (lexicographically smallest) genome.
pub fn run_exhaustive(
    space: &SearchSpace,
    filter: &PruneFilter,
    evaluator: &dyn TrialEvaluator,
    cal: &Calibration,
    area_budget: Option<f64>,
    workers: usize,
) -> Result<ExhaustiveResult> {
    let survivors: Vec<AcceleratorConfig> =
        prune_enumerate(space, filter, cal, area_budget)?.collect();
    if survivors.is_empty() {
        return Err(DseError::Exhaustive(
            "zero survivors after pruning".to_string(),
        ));
    }
    let workers = workers.clamp(1, survivors.len());
    let chunk = survivors.len().div_ceil(workers);
    let outcomes: Vec<TrialOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = survivors
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|c| {
                            evaluator
                                .evaluate(c)
                                .unwrap_or_else(|_| TrialOutcome::failed())
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation thread"))
            .collect()
    });
    let evaluations: Vec<TrialRecord> = survivors
        .into_iter()
        .zip(outcomes)
        .enumerate()
        .map(|(i, (config, o))| {
            let reward = if o.feasible { o.reward } else { 0.0 };
            TrialRecord {
                trial_index: i,
                seed: 0,
                optimizer_tag: "exhaustive".to_string(),
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
                reward,
                proposed_at_ms: 2 * i as u64,
                completed_at_ms: 2 * i as u64 + 1,
                transfer_source: None,
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in evaluations.iter().enumerate() {
        if r.feasible && best.is_none_or(|b| r.reward > evaluations[b].reward) {
            best = Some(i);
        }
    }
    let Some(best) = best else {
        return Err(DseError::Exhaustive(format!(
            "zero feasible survivors ({} evaluated)",
            evaluations.len()
        )));
    };
    Ok(ExhaustiveResult {
        best_config: evaluations[best].config.clone(),
        best_reward: evaluations[best].reward,
        n_evaluated: evaluations.len(),
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveSummary {
    pub survivors_count: usize,
    pub best_reward: f64,
    pub best_genome: AcceleratorConfig,
    pub best_values: BTreeMap<String, f64>,
}

/// Writes `summary.json`, `best.json` and `evaluations.jsonl`.
pub fn write_exhaustive(
    space: &SearchSpace,
    result: &ExhaustiveResult,
    out_dir: &Path,
) -> Result<ExhaustiveSummary> {
    fs::create_dir_all(out_dir).map_err(|e| DseError::io(out_dir, e))?;
    let summary = ExhaustiveSummary {
        survivors_count: result.n_evaluated,
        best_reward: result.best_reward,
        best_genome: result.best_config.clone(),
        best_values: space
            .params()
            .iter()
            .zip(space.values(&result.best_config))
            .map(|(p, v)| (p.name.clone(), v))
            .collect(),
    };
    let best = result
        .evaluations
        .iter()
        .find(|r| r.config == result.best_config)
        .expect("best is among evaluations");
    let put = |name: &str, text: String| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| DseError::io(&p, e))
    };
    put(
        "summary.json",
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    put(
        "best.json",
        serde_json::to_string_pretty(best).expect("record serializes"),
    )?;
    write_log(&out_dir.join("evaluations.jsonl"), &result.evaluations)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_intersection_yields_nothing() {
        let space = SearchSpace::default_space();
        let cal = Calibration::default();
        let f = PruneFilter {
            total_memory_mb_range: [4.0, 16.0],
            total_pes_range: [200, 300],
            index_ranges: BTreeMap::new(),
        };
        assert_eq!(prune_enumerate(&space, &f, &cal, None).unwrap().count(), 0);
    }

    #[test]
    fn survivors_satisfy_both_predicates() {
        let space = SearchSpace::default_space();
        let cal = Calibration::default();
        let f = PruneFilter::default();
        let mut n = 0;
        for c in prune_enumerate(&space, &f, &cal, Some(6.8)).unwrap() {
            let hw = space.hardware(&c).unwrap();
            assert!((4.0..=16.0).contains(&hw.total_memory_mb()));
            assert!((2.0..=16.0).contains(&hw.num_pes()));
            assert!(area(&hw, &cal) <= 6.8);
            n += 1;
        }
        assert!((500..=20_000).contains(&n), "{n}");
    }

    #[test]
    fn unknown_parameter_in_filter_is_rejected() {
        let space = SearchSpace::default_space();
        let cal = Calibration::default();
        let mut f = PruneFilter::ranges_only();
        f.index_ranges.insert("pes_z".into(), [0, 1]);
        assert!(prune_enumerate(&space, &f, &cal, None).is_err());
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let space = SearchSpace::default_space();
        let cal = Calibration::default();
        let f = PruneFilter::default();
        let eval = |_: &AcceleratorConfig| -> Result<TrialOutcome> { Ok(TrialOutcome::failed()) };
        let err = run_exhaustive(&space, &f, &eval, &cal, Some(6.8), 2).unwrap_err();
        assert!(err.to_string().contains("zero feasible survivors"), "{err}");
    }
}
