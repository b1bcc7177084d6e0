//! Population-based portfolio of optimizers. Proposal slots go to members
//! by performance weights; every evaluated trial is broadcast to all
//! members. The adaptive variant periodically replaces the weakest member
//! with a perturbed clone of the strongest.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Bookkeeping, Optimizer, OptimizerKind, OptimizerSpec, TrialRecord};
use super::{EvoParams, GpBoParams, MboParams};
use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P3boParams {
    pub members: Vec<OptimizerSpec>,
    /// Per-round decay of past improvements in the credit sum.
    pub decay: f64,
    /// Tells per round.
    pub round_size: usize,
    /// Rounds between adaptation steps.
    pub adapt_every: u64,
    pub adaptive: bool,
}

impl Default for P3boParams {
    fn default() -> Self {
        P3boParams {
            members: vec![
                OptimizerSpec::new(OptimizerKind::Evolutionary),
                // Smaller training cap keeps the shared surrogate cheap.
                OptimizerSpec::with_params(
                    OptimizerKind::Mbo,
                    serde_json::json!({"max_train_points": 256}),
                ),
                OptimizerSpec::with_params(
                    OptimizerKind::Evolutionary,
                    serde_json::json!({"crossover_rate": 0.3, "mutation_rate": 0.05}),
                ),
            ],
            decay: 0.9,
            round_size: 16,
            adapt_every: 10,
            adaptive: false,
        }
    }
}

impl P3boParams {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(DseError::invalid(
                "members",
                "a portfolio needs at least 2 members",
            ));
        }
        for m in &self.members {
            if m.kind == OptimizerKind::P3bo {
                return Err(DseError::invalid("members", "portfolios cannot nest"));
            }
            m.validate()?;
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(DseError::invalid("decay", "must lie in [0, 1]"));
        }
        if self.round_size == 0 {
            return Err(DseError::invalid("round_size", "must be at least 1"));
        }
        if self.adapt_every == 0 {
            return Err(DseError::invalid("adapt_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// One improvement credited to the member that proposed the trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub round: u64,
    pub improvement: f64,
}

/// `credit_i = Σ decay^(current_round − round_t) · improvement_t`.
pub fn credits(per_member: &[Vec<Contribution>], decay: f64, current_round: u64) -> Vec<f64> {
    per_member
        .iter()
        .map(|cs| {
            cs.iter()
                .map(|c| {
                    decay.powi(current_round.saturating_sub(c.round).min(i32::MAX as u64) as i32)
                        * c.improvement
                })
                .sum()
        })
        .collect()
}

/// Softmax of credits with temperature equal to the largest credit (1 when
/// no member has any).
pub fn softmax_weights(credits: &[f64]) -> Vec<f64> {
    let max = credits.iter().copied().fold(0.0f64, f64::max);
    let t = if max > 0.0 { max } else { 1.0 };
    let top = credits
        .iter()
        .map(|c| c / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = credits.iter().map(|c| (c / t - top).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn p3bo_update_weights(
    per_member: &[Vec<Contribution>],
    decay: f64,
    current_round: u64,
) -> Vec<f64> {
    softmax_weights(&credits(per_member, decay, current_round))
}

/// Number of the `n` slots each member receives; each slot is an
/// independent draw from `weights`.
pub fn allocate<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0usize; weights.len()];
    let total: f64 = weights.iter().sum();
    for _ in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        // Never hand slots to zero-weight members through rounding.
        if weights[pick] == 0.0 {
            pick = weights.iter().position(|w| *w > 0.0).unwrap_or(pick);
        }
        counts[pick] += 1;
    }
    counts
}

/// Keys perturbed by adaptation, with their valid ranges and integrality.
const TUNABLE: [(&str, f64, f64, bool); 5] = [
    ("crossover_rate", 0.0, 1.0, false),
    ("mutation_rate", 0.0, 1.0, false),
    ("tournament_size", 1.0, 64.0, true),
    ("beta", 0.0, 10.0, false),
    ("xi", 0.0, 10.0, false),
];

/// Multiplies every tunable numeric hyperparameter by U(0.5, 2), clamped.
/// Defaults are materialized first so unspecified values are perturbed too.
pub fn perturb_spec<R: Rng + ?Sized>(spec: &OptimizerSpec, rng: &mut R) -> Result<OptimizerSpec> {
    let mut params = materialize(spec)?;
    if let Some(map) = params.as_object_mut() {
        let mut keys: Vec<String> = map.keys().cloned().collect();
        keys.sort();
        for key in keys {
            let Some(&(_, lo, hi, int)) = TUNABLE.iter().find(|t| t.0 == key) else {
                continue;
            };
            let Some(v) = map[&key].as_f64() else {
                continue;
            };
            let f = rng.random_range(0.5..=2.0);
            let mut nv = (v * f).clamp(lo, hi);
            if int {
                nv = nv.round().max(lo);
                map.insert(key, serde_json::json!(nv as u64));
            } else {
                map.insert(key, serde_json::json!(nv));
            }
        }
    }
    Ok(OptimizerSpec::with_params(spec.kind, params))
}

fn materialize(spec: &OptimizerSpec) -> Result<serde_json::Value> {
    fn roundtrip<T: Serialize + serde::de::DeserializeOwned>(
        v: &serde_json::Value,
    ) -> Result<serde_json::Value> {
        let p: T = serde_json::from_value(v.clone())
            .map_err(|e| DseError::parse("optimizer.params", e))?;
        serde_json::to_value(p).map_err(|e| DseError::parse("optimizer.params", e))
    }
    match spec.kind {
        OptimizerKind::Evolutionary => roundtrip::<EvoParams>(&spec.params),
        OptimizerKind::Mbo => roundtrip::<MboParams>(&spec.params),
        OptimizerKind::GpBo => roundtrip::<GpBoParams>(&spec.params),
        _ => Ok(spec.params.clone()),
    }
}

struct Member {
    spec: OptimizerSpec,
    handle: Box<dyn Optimizer>,
    contributions: Vec<Contribution>,
}

pub struct P3bo {
    space: Arc<SearchSpace>,
    params: P3boParams,
    seed: u64,
    rng: ChaCha8Rng,
    book: Bookkeeping,
    members: Vec<Member>,
    /// Proposing member of each pending config.
    owner: HashMap<AcceleratorConfig, usize>,
    best: Option<f64>,
    tells: u64,
    last_adapt_round: u64,
    clones: u64,
}

impl P3bo {
    pub fn new(space: Arc<SearchSpace>, params: P3boParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let members = params
            .members
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                Ok(Member {
                    spec: spec.clone(),
                    handle: spec.build(space.clone(), derive_seed(seed, i as u64 + 1))?,
                    contributions: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(P3bo {
            space,
            params,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            book: Bookkeeping::default(),
            members,
            owner: HashMap::new(),
            best: None,
            tells: 0,
            last_adapt_round: 0,
            clones: 0,
        })
    }

    fn round(&self) -> u64 {
        self.tells / self.params.round_size as u64
    }

    pub fn weights(&self) -> Vec<f64> {
        let per: Vec<Vec<Contribution>> = self
            .members
            .iter()
            .map(|m| m.contributions.clone())
            .collect();
        p3bo_update_weights(&per, self.params.decay, self.round())
    }

    pub fn member_specs(&self) -> Vec<OptimizerSpec> {
        self.members.iter().map(|m| m.spec.clone()).collect()
    }

    pub fn member_history_lens(&self) -> Vec<usize> {
        self.members
            .iter()
            .map(|m| m.handle.history().len())
            .collect()
    }

    fn random_unpending(&mut self) -> AcceleratorConfig {
        loop {
            let c = self.space.sample_uniform(&mut self.rng);
            if !self.book.is_pending(&c) {
                return c;
            }
        }
    }

    /// Asks member `i` for one config not pending anywhere in the portfolio.
    fn ask_member(&mut self, i: usize) -> AcceleratorConfig {
        for _ in 0..4 {
            let Some(c) = self.members[i].handle.ask(1).pop() else {
                break;
            };
            if !self.book.is_pending(&c) {
                return c;
            }
            self.members[i].handle.cancel(&c);
        }
        self.random_unpending()
    }

    fn maybe_adapt(&mut self) {
        let round = self.round();
        if !self.params.adaptive
            || round == 0
            || round % self.params.adapt_every != 0
            || round == self.last_adapt_round
        {
            return;
        }
        self.last_adapt_round = round;
        if let Err(e) = self.adapt() {
            log::warn!("p3bo: adaptation skipped ({e})");
        }
    }

    /// Replaces the lowest-credit member with a perturbed clone of the
    /// highest-credit one. The clone is replayed the shared history.
    pub fn adapt(&mut self) -> Result<()> {
        let per: Vec<Vec<Contribution>> = self
            .members
            .iter()
            .map(|m| m.contributions.clone())
            .collect();
        let c = credits(&per, self.params.decay, self.round());
        // Highest credit, earliest index on ties; lowest credit, latest index.
        let mut winner = 0;
        let mut loser = 0;
        for (i, v) in c.iter().enumerate() {
            if *v > c[winner] {
                winner = i;
            }
            if *v <= c[loser] {
                loser = i;
            }
        }
        if winner == loser {
            loser = if winner == 0 {
                self.members.len() - 1
            } else {
                0
            };
        }
        let spec = perturb_spec(&self.members[winner].spec, &mut self.rng)?;
        self.clones += 1;
        let mut handle = spec.build(
            self.space.clone(),
            derive_seed(self.seed, 1000 + self.clones),
        )?;
        let shared: Vec<TrialRecord> = self.book.history.clone();
        handle.tell(&shared);
        // Pending configs owned by the loser are reassigned to the clone's
        // account; they will still be broadcast on completion.
        let old = std::mem::replace(
            &mut self.members[loser],
            Member {
                spec,
                handle,
                contributions: Vec::new(),
            },
        );
        drop(old);
        for owner in self.owner.values_mut() {
            if *owner == loser {
                *owner = usize::MAX;
            }
        }
        Ok(())
    }
}

impl Optimizer for P3bo {
    fn tag(&self) -> &str {
        "p3bo"
    }

    fn ask(&mut self, n: usize) -> Vec<AcceleratorConfig> {
        let weights = self.weights();
        let counts = allocate(&weights, n, &mut self.rng);
        let mut out = Vec::with_capacity(n);
        for (i, k) in counts.into_iter().enumerate() {
            for _ in 0..k {
                let c = self.ask_member(i);
                self.owner.insert(c.clone(), i);
                out.push(self.book.propose(c));
            }
        }
        out
    }

    fn tell(&mut self, records: &[TrialRecord]) {
        for r in records {
            let round = self.round();
            let before = self.best.unwrap_or(0.0);
            let improvement = (r.reward - before).max(0.0);
            if let Some(i) = self.owner.remove(&r.config) {
                if i < self.members.len() && improvement > 0.0 {
                    self.members[i]
                        .contributions
                        .push(Contribution { round, improvement });
                }
            }
            self.best = Some(self.best.map_or(r.reward, |b| b.max(r.reward)));
            self.book.record(r);
            for m in &mut self.members {
                m.handle.tell(std::slice::from_ref(r));
            }
            self.tells += 1;
            self.maybe_adapt();
        }
    }

    fn cancel(&mut self, config: &AcceleratorConfig) {
        self.book.pending.remove(config);
        if let Some(i) = self.owner.remove(config) {
            if i < self.members.len() {
                self.members[i].handle.cancel(config);
            }
        }
    }

    fn pending(&self) -> &HashSet<AcceleratorConfig> {
        &self.book.pending
    }

    fn history(&self) -> &[TrialRecord] {
        &self.book.history
    }

    /// Every member receives the seeds through its own warm start; the best
    /// seed reward becomes the improvement baseline.
    fn warm_start(&mut self, seeds: &[TrialRecord]) {
        for m in &mut self.members {
            m.handle.warm_start(seeds);
        }
        for s in seeds {
            self.best = Some(self.best.map_or(s.reward, |b| b.max(s.reward)));
            self.book.seen.insert(s.config.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_credit_is_uniform() {
        let w = p3bo_update_weights(&[vec![], vec![], vec![]], 0.9, 5);
        for x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn improving_member_gains_weight() {
        let a = vec![Contribution {
            round: 0,
            improvement: 1.0,
        }];
        let w = p3bo_update_weights(&[a, vec![]], 0.9, 0);
        assert!(w[0] > w[1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_three_trial_history() {
        // Member 0 improved by 2 in round 0 and by 1 in round 2; member 1 by 3 in round 1.
        // At round 2: c0 = 0.81·2 + 1 = 2.62, c1 = 0.9·3 = 2.7; T = 2.7.
        let per = vec![
            vec![
                Contribution {
                    round: 0,
                    improvement: 2.0,
                },
                Contribution {
                    round: 2,
                    improvement: 1.0,
                },
            ],
            vec![Contribution {
                round: 1,
                improvement: 3.0,
            }],
        ];
        let c = credits(&per, 0.9, 2);
        assert!((c[0] - 2.62).abs() < 1e-12);
        assert!((c[1] - 2.7).abs() < 1e-12);
        let w = p3bo_update_weights(&per, 0.9, 2);
        let e0 = (2.62f64 / 2.7).exp();
        let e1 = 1.0f64.exp();
        assert!((w[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((w[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn allocation_follows_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(allocate(&[1.0, 0.0], 7, &mut rng), vec![7, 0]);
        let w = [0.5, 0.3, 0.2];
        let counts = allocate(&w, 10_000, &mut rng);
        for (c, p) in counts.iter().zip(w) {
            assert!((*c as f64 / 10_000.0 - p).abs() <= 0.05 * p, "{counts:?}");
        }
    }

    #[test]
    fn tells_are_broadcast() {
        let space = Arc::new(SearchSpace::default_space());
        let mut p = P3bo::new(space, P3boParams::default(), 3).unwrap();
        let mut idx = 0;
        for _ in 0..5 {
            let batch = p.ask(8);
            let set: HashSet<_> = batch.iter().collect();
            assert_eq!(set.len(), 8);
            let recs: Vec<_> = batch
                .into_iter()
                .map(|c| {
                    idx += 1;
                    let r = c.genome()[0] as f64;
                    TrialRecord::synthetic(c, r, idx)
                })
                .collect();
            p.tell(&recs);
            let lens = p.member_history_lens();
            assert!(lens.iter().all(|l| *l == lens[0]));
            let w = p.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(p.pending().is_empty());
    }

    #[test]
    fn perturbation_respects_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = OptimizerSpec::with_params(
            OptimizerKind::Evolutionary,
            serde_json::json!({"crossover_rate": 0.9}),
        );
        for _ in 0..200 {
            let s = perturb_spec(&spec, &mut rng).unwrap();
            let g = s.params["crossover_rate"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&g));
            assert!(s.params["tournament_size"].as_u64().unwrap() >= 1);
            s.validate().unwrap();
        }
    }

    #[test]
    fn adaptation_replaces_loser_only_on_schedule() {
        let space = Arc::new(SearchSpace::default_space());
        let params = P3boParams {
            members: vec![
                OptimizerSpec::new(OptimizerKind::Evolutionary),
                OptimizerSpec::new(OptimizerKind::Random),
            ],
            round_size: 4,
            adapt_every: 10,
            adaptive: true,
            ..Default::default()
        };
        let mut p = P3bo::new(space, params, 5).unwrap();
        let before = p.member_specs();
        let mut idx = 0;
        let mut step = |p: &mut P3bo, n: usize| {
            for _ in 0..n {
                let c = p.ask(1).pop().unwrap();
                idx += 1;
                let r = idx as f64;
                p.tell(&[TrialRecord::synthetic(c, r, idx)]);
            }
        };
        step(&mut p, 39);
        assert_eq!(p.member_specs(), before);
        step(&mut p, 1);
        let after = p.member_specs();
        assert_ne!(after, before);
        let lens = p.member_history_lens();
        assert!(lens.iter().all(|l| *l == 40));
    }
}
