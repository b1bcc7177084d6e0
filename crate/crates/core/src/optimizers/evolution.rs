//! Regularized evolution: tournament selection, uniform crossover, per-gene
//! mutation and age-based eviction.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bookkeeping, Optimizer, TrialRecord};
use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoParams {
    /// Population size K.
    pub population: usize,
    /// Per-gene probability of taking the second parent's value.
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub tournament_size: usize,
    /// Members older than this many rounds are discarded.
    pub max_age_rounds: u64,
    /// Tells per round.
    pub round_size: usize,
    /// Children regenerated when they duplicate an evaluated config.
    pub dedup_attempts: usize,
}

impl Default for EvoParams {
    fn default() -> Self {
        EvoParams {
            population: 100,
            crossover_rate: 0.1,
            mutation_rate: 0.01,
            tournament_size: 5,
            max_age_rounds: 40,
            round_size: 16,
            dedup_attempts: 8,
        }
    }
}

impl EvoParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(DseError::invalid("population", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(DseError::invalid("crossover_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(DseError::invalid("mutation_rate", "must lie in [0, 1]"));
        }
        if self.tournament_size == 0 {
            return Err(DseError::invalid("tournament_size", "must be at least 1"));
        }
        if self.round_size == 0 {
            return Err(DseError::invalid("round_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// A population member. `birth` orders members by insertion (lower is older).
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub config: AcceleratorConfig,
    pub reward: f64,
    pub birth: u64,
    pub born_round: u64,
}

/// Tournament selection with replacement; highest reward wins, ties go to
/// the older member.
pub fn select_parent<'a, R: Rng + ?Sized>(
    population: &'a [Member],
    tournament_size: usize,
    rng: &mut R,
) -> &'a Member {
    assert!(
        !population.is_empty(),
        "tournament over an empty population"
    );
    let mut best = &population[rng.random_range(0..population.len())];
    for _ in 1..tournament_size {
        let m = &population[rng.random_range(0..population.len())];
        if m.reward > best.reward || (m.reward == best.reward && m.birth < best.birth) {
            best = m;
        }
    }
    best
}

/// Uniform crossover: each gene comes from `b` with probability `rate`.
pub fn crossover<R: Rng + ?Sized>(
    a: &AcceleratorConfig,
    b: &AcceleratorConfig,
    rate: f64,
    rng: &mut R,
) -> AcceleratorConfig {
    debug_assert_eq!(a.genome().len(), b.genome().len());
    let genome = a
        .genome()
        .iter()
        .zip(b.genome())
        .map(|(&ga, &gb)| if rng.random_bool(rate) { gb } else { ga })
        .collect();
    AcceleratorConfig::from_genome(genome)
}

/// Resamples each gene with probability `rate` via [`SearchSpace::mutate_gene`].
pub fn mutate<R: Rng + ?Sized>(
    space: &SearchSpace,
    config: &AcceleratorConfig,
    rate: f64,
    rng: &mut R,
) -> AcceleratorConfig {
    let mut out = config.clone();
    for gene in 0..space.len() {
        if rng.random_bool(rate) {
            out = space.mutate_gene(&out, gene, rng);
        }
    }
    out
}

/// Drops members older than `max_age_rounds`, then the oldest until at most
/// `k` remain.
pub fn evict(population: &mut Vec<Member>, k: usize, max_age_rounds: u64, current_round: u64) {
    population.retain(|m| current_round.saturating_sub(m.born_round) <= max_age_rounds);
    if population.len() > k {
        population.sort_by_key(|m| m.birth);
        let excess = population.len() - k;
        population.drain(..excess);
    }
}

pub struct Evolution {
    space: Arc<SearchSpace>,
    params: EvoParams,
    rng: ChaCha8Rng,
    book: Bookkeeping,
    population: Vec<Member>,
    births: u64,
    tells: u64,
    /// A seeded population breeds immediately instead of topping up to K
    /// with random samples.
    seeded: bool,
}

impl Evolution {
    pub fn new(space: Arc<SearchSpace>, params: EvoParams, seed: u64) -> Self {
        Evolution {
            space,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            book: Bookkeeping::default(),
            population: Vec::new(),
            births: 0,
            tells: 0,
            seeded: false,
        }
    }

    pub fn params(&self) -> &EvoParams {
        &self.params
    }

    pub fn population(&self) -> &[Member] {
        &self.population
    }

    fn round(&self) -> u64 {
        self.tells / self.params.round_size as u64
    }

    fn insert(&mut self, config: AcceleratorConfig, reward: f64) {
        let round = self.round();
        self.population.push(Member {
            config,
            reward,
            birth: self.births,
            born_round: round,
        });
        self.births += 1;
    }

    fn random_unpending(&mut self) -> AcceleratorConfig {
        let mut fallback = None;
        for _ in 0..64 {
            let c = self.space.sample_uniform(&mut self.rng);
            if !self.book.is_pending(&c) {
                if !self.book.is_seen(&c) {
                    return c;
                }
                fallback.get_or_insert(c);
            }
        }
        fallback.unwrap_or_else(|| self.space.sample_uniform(&mut self.rng))
    }

    fn breed(&mut self) -> AcceleratorConfig {
        let mut child = None;
        for _ in 0..self.params.dedup_attempts.max(1) {
            let a = select_parent(&self.population, self.params.tournament_size, &mut self.rng)
                .config
                .clone();
            let b = select_parent(&self.population, self.params.tournament_size, &mut self.rng)
                .config
                .clone();
            let c = crossover(&a, &b, self.params.crossover_rate, &mut self.rng);
            let c = mutate(&self.space, &c, self.params.mutation_rate, &mut self.rng);
            let fresh = !self.book.is_pending(&c) && !self.book.is_seen(&c);
            child = Some(c);
            if fresh {
                break;
            }
        }
        let mut child = child.expect("at least one attempt");
        let mut tries = 0;
        while self.book.is_pending(&child) && tries < 64 {
            let gene = self.rng.random_range(0..self.space.len());
            child = self.space.mutate_gene(&child, gene, &mut self.rng);
            tries += 1;
        }
        if self.book.is_pending(&child) {
            child = self.random_unpending();
        }
        child
    }
}

impl Optimizer for Evolution {
    fn tag(&self) -> &str {
        "evolutionary"
    }

    fn ask(&mut self, n: usize) -> Vec<AcceleratorConfig> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let filling = !self.seeded
                && self.population.len() + self.book.pending.len() < self.params.population;
            let c = if filling || self.population.is_empty() {
                self.random_unpending()
            } else {
                self.breed()
            };
            if self.book.is_pending(&c) {
                break;
            }
            out.push(self.book.propose(c));
        }
        out
    }

    fn tell(&mut self, records: &[TrialRecord]) {
        for r in records {
            self.book.record(r);
            self.tells += 1;
            self.insert(r.config.clone(), r.reward);
            let round = self.round();
            evict(
                &mut self.population,
                self.params.population,
                self.params.max_age_rounds,
                round,
            );
        }
    }

    fn cancel(&mut self, config: &AcceleratorConfig) {
        self.book.pending.remove(config);
    }

    fn pending(&self) -> &HashSet<AcceleratorConfig> {
        &self.book.pending
    }

    fn history(&self) -> &[TrialRecord] {
        &self.book.history
    }

    /// Seeds become the initial population, best first, truncated to K.
    fn warm_start(&mut self, seeds: &[TrialRecord]) {
        let mut sorted: Vec<&TrialRecord> = seeds.iter().collect();
        sorted.sort_by(|a, b| {
            b.reward
                .total_cmp(&a.reward)
                .then(a.trial_index.cmp(&b.trial_index))
        });
        sorted.truncate(self.params.population);
        for r in sorted {
            self.book.record(r);
            self.insert(r.config.clone(), r.reward);
        }
        self.seeded = !self.population.is_empty();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn member(genome: Vec<usize>, reward: f64, birth: u64) -> Member {
        Member {
            config: AcceleratorConfig::from_genome(genome),
            reward,
            birth,
            born_round: 0,
        }
    }

    #[test]
    fn tournament_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = vec![member(vec![1], 0.0, 0)];
        assert_eq!(select_parent(&one, 5, &mut rng).birth, 0);
        // Tournament as large as the population almost surely contains the best.
        let pop: Vec<_> = (0..4)
            .map(|i| member(vec![i], i as f64, i as u64))
            .collect();
        let mut wins = 0;
        for _ in 0..1000 {
            if select_parent(&pop, 64, &mut rng).reward == 3.0 {
                wins += 1;
            }
        }
        assert_eq!(wins, 1000);
    }

    #[test]
    fn tournament_tie_prefers_older() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = vec![member(vec![0], 1.0, 7), member(vec![1], 1.0, 3)];
        for _ in 0..100 {
            let m = select_parent(&pop, 50, &mut rng);
            assert_eq!(m.birth, 3);
        }
    }

    #[test]
    fn tournament_uniform_when_rewards_equal_and_size_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop: Vec<_> = (0..10).map(|i| member(vec![i], 0.0, i as u64)).collect();
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[select_parent(&pop, 1, &mut rng).birth as usize] += 1;
        }
        // 3 binomial standard deviations at p = 0.1, n = 10k.
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.1).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn crossover_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = AcceleratorConfig::from_genome(vec![0; 10]);
        let b = AcceleratorConfig::from_genome(vec![1; 10]);
        assert_eq!(crossover(&a, &b, 0.0, &mut rng), a);
        assert_eq!(crossover(&a, &b, 1.0, &mut rng), b);
        assert_eq!(crossover(&a, &a, 0.5, &mut rng), a);
    }

    #[test]
    fn mutation_rates() {
        let space = SearchSpace::default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = space.sample_uniform(&mut rng);
        assert_eq!(mutate(&space, &c, 0.0, &mut rng), c);
        let m = mutate(&space, &c, 1.0, &mut rng);
        assert!(m.genome().iter().zip(c.genome()).all(|(x, y)| x != y));

        let mut changed = 0usize;
        for _ in 0..10_000 {
            let m = mutate(&space, &c, 0.01, &mut rng);
            changed += m
                .genome()
                .iter()
                .zip(c.genome())
                .filter(|(x, y)| x != y)
                .count();
        }
        let mean = changed as f64 / 10_000.0;
        assert!((mean - 0.1).abs() <= 0.02, "mean changed genes {mean}");
    }

    #[test]
    fn eviction_rules() {
        let mut pop: Vec<_> = (0..3).map(|i| member(vec![i], 1.0, i as u64)).collect();
        evict(&mut pop, 5, 40, 0);
        assert_eq!(pop.len(), 3);

        let mut pop: Vec<_> = (0..6).map(|i| member(vec![i], 1.0, i as u64)).collect();
        evict(&mut pop, 5, 40, 0);
        assert_eq!(pop.len(), 5);
        assert!(pop.iter().all(|m| m.birth != 0));

        let mut pop = vec![member(vec![0], 100.0, 0), member(vec![1], 0.0, 1)];
        pop[1].born_round = 50;
        evict(&mut pop, 5, 40, 50);
        assert_eq!(pop.len(), 1);
        assert_eq!(pop[0].birth, 1);
    }

    #[test]
    fn population_capped_and_no_pending_duplicates() {
        let space = Arc::new(SearchSpace::default_space());
        let mut evo = Evolution::new(
            space.clone(),
            EvoParams {
                population: 10,
                ..Default::default()
            },
            7,
        );
        let mut idx = 0;
        for round in 0..30 {
            let batch = evo.ask(4);
            let set: HashSet<_> = batch.iter().collect();
            assert_eq!(set.len(), batch.len());
            assert!(batch.iter().all(|c| space.contains(c)));
            let recs: Vec<_> = batch
                .into_iter()
                .map(|c| {
                    idx += 1;
                    TrialRecord::synthetic(c.clone(), (c.genome()[0] + round) as f64, idx)
                })
                .collect();
            evo.tell(&recs);
            assert!(evo.population().len() <= 10);
        }
        assert!(evo.pending().is_empty());
    }

    #[test]
    fn warm_start_truncates_by_reward() {
        let space = Arc::new(SearchSpace::default_space());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seeds: Vec<_> = (0..150)
            .map(|i| TrialRecord::synthetic(space.sample_uniform(&mut rng), i as f64 + 1.0, i))
            .collect();
        let mut evo = Evolution::new(space.clone(), EvoParams::default(), 0);
        evo.warm_start(&seeds);
        assert_eq!(evo.population().len(), 100);
        assert!(evo.population().iter().all(|m| m.reward > 50.0));

        let mut evo = Evolution::new(space, EvoParams::default(), 0);
        evo.warm_start(&seeds[..100]);
        let got: HashSet<_> = evo.population().iter().map(|m| m.config.clone()).collect();
        let want: HashSet<_> = seeds[..100].iter().map(|r| r.config.clone()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn seeded_population_breeds_at_once() {
        let space = Arc::new(SearchSpace::default_space());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = space.sample_uniform(&mut rng);
        let seeds: Vec<_> = (0..5)
            .map(|i| TrialRecord::synthetic(space.mutate_gene(&base, i, &mut rng), 1.0, i))
            .collect();
        let mut evo = Evolution::new(space.clone(), EvoParams::default(), 0);
        evo.warm_start(&seeds);
        // Children of near-identical parents stay close; uniform draws would not.
        for c in evo.ask(8) {
            let diff = c
                .genome()
                .iter()
                .zip(base.genome())
                .filter(|(a, b)| a != b)
                .count();
            assert!(diff <= 4, "{diff}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(EvoParams {
            population: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EvoParams {
            crossover_rate: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EvoParams::default().validate().is_ok());
    }
}
