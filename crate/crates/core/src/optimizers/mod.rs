//! Optimization strategies behind a common ask/tell interface.
//!
//! Every strategy owns its RNG and keeps a set of pending proposals (asked
//! but not yet told). `ask` never returns a configuration that is currently
//! pending; `tell` accepts records for configurations the strategy never
//! proposed, which is how warm starts and shared portfolio data arrive.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, SearchSpace};

pub mod evolution;
pub mod gp;
pub mod gp_bo;
pub mod hill_climb;
pub mod mbo;
pub mod models;
pub mod p3bo;
pub mod random;

pub use evolution::{EvoParams, Evolution};
pub use gp::{expected_improvement, GaussianProcess, GpHyper, HyperGrid};
pub use gp_bo::{GpBo, GpBoParams, GpStack};
pub use hill_climb::{hill_climb, hill_climb_from};
pub use mbo::{Mbo, MboParams};
pub use p3bo::{P3bo, P3boParams};
pub use random::{RandomParams, RandomSearch};

/// One evaluated configuration. Serializes as one line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub optimizer_tag: String,
    #[serde(rename = "genome")]
    pub config: AcceleratorConfig,
    pub values: BTreeMap<String, f64>,
    pub feasible: bool,
    pub infeasibility_reasons: Vec<String>,
    pub area_mm2: f64,
    pub latency_s: BTreeMap<String, f64>,
    pub reward: f64,
    pub proposed_at_ms: u64,
    pub completed_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_source: Option<String>,
}

impl TrialRecord {
    /// Minimal record for strategy-level tests and synthetic histories.
    pub fn synthetic(config: AcceleratorConfig, reward: f64, trial_index: usize) -> Self {
        TrialRecord {
            trial_index,
            seed: 0,
            optimizer_tag: String::new(),
            config,
            values: BTreeMap::new(),
            feasible: reward > 0.0,
            infeasibility_reasons: if reward > 0.0 {
                vec![]
            } else {
                vec!["infeasible".into()]
            },
            area_mm2: 0.0,
            latency_s: BTreeMap::new(),
            reward,
            proposed_at_ms: 0,
            completed_at_ms: 0,
            transfer_source: None,
        }
    }
}

/// Uniform strategy interface. Handles are single-owner; callers serialize
/// `ask` and `tell`.
pub trait Optimizer: Send {
    fn tag(&self) -> &str;

    /// Proposes `n` configurations and marks them pending.
    fn ask(&mut self, n: usize) -> Vec<AcceleratorConfig>;

    /// Feeds back evaluated trials, in completion order.
    fn tell(&mut self, records: &[TrialRecord]);

    /// Drops a pending proposal that will never be evaluated.
    fn cancel(&mut self, config: &AcceleratorConfig);

    fn pending(&self) -> &HashSet<AcceleratorConfig>;

    fn history(&self) -> &[TrialRecord];

    /// Inserts source-task trials as initial state. The default feeds them
    /// through `tell`.
    fn warm_start(&mut self, seeds: &[TrialRecord]) {
        self.tell(seeds);
    }
}

/// Pending set plus told history, shared by all strategies.
#[derive(Debug, Clone, Default)]
pub(crate) struct Bookkeeping {
    pub pending: HashSet<AcceleratorConfig>,
    pub history: Vec<TrialRecord>,
    pub seen: HashSet<AcceleratorConfig>,
}

impl Bookkeeping {
    pub fn propose(&mut self, config: AcceleratorConfig) -> AcceleratorConfig {
        let fresh = self.pending.insert(config.clone());
        debug_assert!(fresh, "re-proposed a pending config");
        config
    }

    pub fn record(&mut self, record: &TrialRecord) {
        self.pending.remove(&record.config);
        self.seen.insert(record.config.clone());
        self.history.push(record.clone());
    }

    pub fn is_pending(&self, config: &AcceleratorConfig) -> bool {
        self.pending.contains(config)
    }

    pub fn is_seen(&self, config: &AcceleratorConfig) -> bool {
        self.seen.contains(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Random,
    Evolutionary,
    Mbo,
    P3bo,
    GpBo,
}

impl OptimizerKind {
    pub fn tag(self) -> &'static str {
        match self {
            OptimizerKind::Random => "random",
            OptimizerKind::Evolutionary => "evolutionary",
            OptimizerKind::Mbo => "mbo",
            OptimizerKind::P3bo => "p3bo",
            OptimizerKind::GpBo => "gp_bo",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(OptimizerKind::Random),
            "evolutionary" | "evolution" | "evo" => Ok(OptimizerKind::Evolutionary),
            "mbo" => Ok(OptimizerKind::Mbo),
            "p3bo" => Ok(OptimizerKind::P3bo),
            "gp_bo" | "gpbo" | "vizier" | "gp" => Ok(OptimizerKind::GpBo),
            other => Err(DseError::invalid(
                "optimizer.kind",
                format!("unknown strategy `{other}`"),
            )),
        }
    }
}

/// Strategy choice plus hyperparameters, as written in a study spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    #[serde(default = "empty_params", skip_serializing_if = "is_empty_params")]
    pub params: serde_json::Value,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn is_empty_params(v: &serde_json::Value) -> bool {
    v.as_object().is_some_and(|m| m.is_empty())
}

fn parse_params<T: serde::de::DeserializeOwned>(
    kind: OptimizerKind,
    params: &serde_json::Value,
) -> Result<T> {
    serde_json::from_value(params.clone())
        .map_err(|e| DseError::parse(format!("optimizer.params ({})", kind.tag()), e))
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerSpec {
            kind,
            params: empty_params(),
        }
    }

    pub fn with_params(kind: OptimizerKind, params: serde_json::Value) -> Self {
        OptimizerSpec { kind, params }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            OptimizerKind::Random => {
                parse_params::<RandomParams>(self.kind, &self.params).map(|_| ())
            }
            OptimizerKind::Evolutionary => {
                parse_params::<EvoParams>(self.kind, &self.params)?.validate()
            }
            OptimizerKind::Mbo => parse_params::<MboParams>(self.kind, &self.params)?.validate(),
            OptimizerKind::GpBo => parse_params::<GpBoParams>(self.kind, &self.params)?.validate(),
            OptimizerKind::P3bo => parse_params::<P3boParams>(self.kind, &self.params)?.validate(),
        }
    }

    /// Builds a fresh handle for one seed.
    pub fn build(&self, space: Arc<SearchSpace>, seed: u64) -> Result<Box<dyn Optimizer>> {
        Ok(match self.kind {
            OptimizerKind::Random => Box::new(RandomSearch::new(
                space,
                parse_params(self.kind, &self.params)?,
                seed,
            )),
            OptimizerKind::Evolutionary => {
                let p: EvoParams = parse_params(self.kind, &self.params)?;
                p.validate()?;
                Box::new(Evolution::new(space, p, seed))
            }
            OptimizerKind::Mbo => {
                let p: MboParams = parse_params(self.kind, &self.params)?;
                p.validate()?;
                Box::new(Mbo::new(space, p, seed))
            }
            OptimizerKind::GpBo => {
                let p: GpBoParams = parse_params(self.kind, &self.params)?;
                p.validate()?;
                Box::new(GpBo::new(space, p, seed))
            }
            OptimizerKind::P3bo => {
                let p: P3boParams = parse_params(self.kind, &self.params)?;
                p.validate()?;
                Box::new(P3bo::new(space, p, seed)?)
            }
        })
    }
}

/// Unique observations capped at `cap`: the best half by reward plus the
/// most recently reported, returned in report order.
pub(crate) fn capped_training_set(
    observed: &HashMap<AcceleratorConfig, (f64, usize)>,
    cap: usize,
) -> Vec<(AcceleratorConfig, f64)> {
    let mut all: Vec<(&AcceleratorConfig, f64, usize)> =
        observed.iter().map(|(c, (r, t))| (c, *r, *t)).collect();
    all.sort_by_key(|a| a.2);
    if all.len() > cap {
        let mut by_reward: Vec<usize> = (0..all.len()).collect();
        by_reward.sort_by(|&a, &b| all[b].1.total_cmp(&all[a].1).then(all[a].2.cmp(&all[b].2)));
        let mut keep = vec![false; all.len()];
        let mut kept = 0;
        for i in by_reward.into_iter().take(cap / 2) {
            keep[i] = true;
            kept += 1;
        }
        for i in (0..all.len()).rev() {
            if kept >= cap {
                break;
            }
            if !keep[i] {
                keep[i] = true;
                kept += 1;
            }
        }
        all = all
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(a, _)| a)
            .collect();
    }
    all.into_iter().map(|(c, r, _)| (c.clone(), r)).collect()
}

/// Mixes a seed with a stream id so sub-generators do not share streams.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let spec: OptimizerSpec =
            serde_json::from_str(r#"{"kind": "evolutionary", "params": {"population": 50}}"#)
                .unwrap();
        assert!(spec.validate().is_ok());
        let bad: OptimizerSpec =
            serde_json::from_str(r#"{"kind": "evolutionary", "params": {"populaton": 50}}"#)
                .unwrap();
        assert!(bad.validate().is_err());
        assert_eq!(OptimizerKind::parse("vizier").unwrap(), OptimizerKind::GpBo);
        assert!(OptimizerKind::parse("sgd").is_err());
    }

    #[test]
    fn every_strategy_builds() {
        let space = Arc::new(SearchSpace::default_space());
        for kind in [
            OptimizerKind::Random,
            OptimizerKind::Evolutionary,
            OptimizerKind::Mbo,
            OptimizerKind::P3bo,
            OptimizerKind::GpBo,
        ] {
            let opt = OptimizerSpec::new(kind).build(space.clone(), 1).unwrap();
            assert_eq!(opt.tag(), kind.tag());
        }
    }
}
