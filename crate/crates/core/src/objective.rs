//! Study specifications and the scalar rewards optimizers maximize.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costmodel::Evaluation;
use crate::error::{DseError, Result};
use crate::optimizers::OptimizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// (1 / latency) * (1 / area) for a single workload.
    ThroughputPerArea,
    /// Geometric mean over workloads of baseline latency / latency.
    GeomeanSpeedup,
}

/// How trial timestamps in the log are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Event counter shared by proposals and completions; reproducible.
    #[default]
    Logical,
    /// Wall-clock milliseconds since the seed's run started.
    Wall,
}

fn default_trial_budget() -> usize {
    4096
}
fn default_n_seeds() -> usize {
    5
}
fn default_max_concurrent() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub name: String,
    pub objective: ObjectiveKind,
    pub workloads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_budget_mm2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_budget_s: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_trial_budget")]
    pub trial_budget: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    /// Seed `k` of the study runs with `base_seed + k`.
    #[serde(default)]
    pub base_seed: u64,
    pub optimizer: OptimizerSpec,
    /// Evaluate each distinct configuration once and reuse the result.
    #[serde(default)]
    pub memoize: bool,
    #[serde(default)]
    pub clock: ClockMode,
}

impl StudySpec {
    /// A multi-model geomean-speedup study over the given workloads.
    pub fn geomean(
        name: &str,
        workloads: Vec<String>,
        area_budget_mm2: Option<f64>,
        optimizer: OptimizerSpec,
    ) -> Self {
        StudySpec {
            name: name.to_string(),
            objective: ObjectiveKind::GeomeanSpeedup,
            workloads,
            area_budget_mm2,
            latency_budget_s: None,
            trial_budget: default_trial_budget(),
            n_seeds: default_n_seeds(),
            max_concurrent: default_max_concurrent(),
            base_seed: 0,
            optimizer,
            memoize: false,
            clock: ClockMode::Logical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(DseError::invalid("name", "must not be empty"));
        }
        if self.workloads.is_empty() {
            return Err(DseError::invalid(
                "workloads",
                "at least one workload is required",
            ));
        }
        if self.objective == ObjectiveKind::ThroughputPerArea && self.workloads.len() != 1 {
            return Err(DseError::invalid(
                "workloads",
                "throughput_per_area studies target exactly one workload",
            ));
        }
        if let Some(a) = self.area_budget_mm2 {
            if !(a > 0.0) {
                return Err(DseError::invalid("area_budget_mm2", "must be positive"));
            }
        }
        if let Some(map) = &self.latency_budget_s {
            for (w, t) in map {
                if !(*t > 0.0) {
                    return Err(DseError::invalid(
                        format!("latency_budget_s.{w}"),
                        "must be positive",
                    ));
                }
            }
        }
        if self.trial_budget == 0 {
            return Err(DseError::invalid("trial_budget", "must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(DseError::invalid("n_seeds", "must be at least 1"));
        }
        if self.max_concurrent == 0 {
            return Err(DseError::invalid("max_concurrent", "must be at least 1"));
        }
        self.optimizer.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: StudySpec =
            serde_json::from_str(text).map_err(|e| DseError::parse("study spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DseError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            DseError::Parse { message, .. } => DseError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

pub fn reward_throughput_per_area(evaluation: &Evaluation, workload: &str) -> Result<f64> {
    let latency = evaluation
        .latency_s
        .get(workload)
        .ok_or_else(|| DseError::UnknownWorkload(workload.to_string()))?;
    Ok(1.0 / latency / evaluation.area_mm2)
}

/// Geometric mean speedup, accumulated in log space.
pub fn reward_geomean_speedup(
    evaluation: &Evaluation,
    baselines: &BTreeMap<String, f64>,
) -> Result<f64> {
    if evaluation.latency_s.is_empty() {
        return Err(DseError::invalid("evaluation", "no latencies to compare"));
    }
    let mut log_sum = 0.0;
    for (w, lat) in &evaluation.latency_s {
        let base = baselines
            .get(w)
            .ok_or_else(|| DseError::MissingBaseline(w.clone()))?;
        log_sum += base.ln() - lat.ln();
    }
    Ok((log_sum / evaluation.latency_s.len() as f64).exp())
}

/// Reasons an evaluation earns zero reward under `spec`: mapping failures
/// plus budget violations.
pub fn constraint_violations(evaluation: &Evaluation, spec: &StudySpec) -> Vec<String> {
    let mut reasons = evaluation.infeasibility_reasons.clone();
    if !evaluation.feasible && reasons.is_empty() {
        reasons.push("infeasible".to_string());
    }
    if let Some(alpha) = spec.area_budget_mm2 {
        if evaluation.area_mm2 > alpha {
            reasons.push("area_budget".to_string());
        }
    }
    if let Some(taus) = &spec.latency_budget_s {
        for (w, tau) in taus {
            if let Some(lat) = evaluation.latency_s.get(w) {
                if lat > tau {
                    reasons.push(format!("latency_budget@{w}"));
                }
            }
        }
    }
    reasons
}

/// Zero for infeasible or over-budget evaluations, else `raw_reward`.
pub fn apply_constraints(evaluation: &Evaluation, spec: &StudySpec, raw_reward: f64) -> f64 {
    if constraint_violations(evaluation, spec).is_empty() {
        raw_reward.max(0.0)
    } else {
        0.0
    }
}

/// Outcome of scoring one evaluation under a study's objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub reward: f64,
    pub feasible: bool,
    pub reasons: Vec<String>,
}

/// A study objective bound to resolved baseline latencies.
#[derive(Debug, Clone)]
pub struct Objective {
    spec: StudySpec,
    baselines: BTreeMap<String, f64>,
}

impl Objective {
    pub fn new(spec: &StudySpec, baselines: BTreeMap<String, f64>) -> Result<Self> {
        if spec.objective == ObjectiveKind::GeomeanSpeedup {
            for w in &spec.workloads {
                match baselines.get(w) {
                    Some(b) if *b > 0.0 => {}
                    Some(_) => {
                        return Err(DseError::invalid(
                            format!("baseline.{w}"),
                            "must be positive",
                        ))
                    }
                    None => return Err(DseError::MissingBaseline(w.clone())),
                }
            }
        }
        Ok(Objective {
            spec: spec.clone(),
            baselines,
        })
    }

    pub fn spec(&self) -> &StudySpec {
        &self.spec
    }

    /// Same objective, different area budget.
    pub fn with_area_budget(&self, area_budget_mm2: Option<f64>) -> Self {
        let mut spec = self.spec.clone();
        spec.area_budget_mm2 = area_budget_mm2;
        Objective {
            spec,
            baselines: self.baselines.clone(),
        }
    }

    pub fn score(&self, evaluation: &Evaluation) -> Result<Scored> {
        let reasons = constraint_violations(evaluation, &self.spec);
        if !reasons.is_empty() {
            return Ok(Scored {
                reward: 0.0,
                feasible: false,
                reasons,
            });
        }
        let raw = match self.spec.objective {
            ObjectiveKind::ThroughputPerArea => {
                reward_throughput_per_area(evaluation, &self.spec.workloads[0])?
            }
            ObjectiveKind::GeomeanSpeedup => reward_geomean_speedup(evaluation, &self.baselines)?,
        };
        Ok(Scored {
            reward: apply_constraints(evaluation, &self.spec, raw),
            feasible: true,
            reasons,
        })
    }
}
