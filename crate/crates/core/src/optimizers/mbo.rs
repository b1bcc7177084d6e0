//! Model-based optimization: an ensemble of cross-validated regressors
//! defines an optimistic acquisition, which an inner evolutionary search
//! maximizes over the space.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evolution::{crossover, mutate};
use super::models::{cross_val_r2, Model, ModelFamily, ModelSpec, Sample};
use super::{capped_training_set, Bookkeeping, Optimizer, TrialRecord};
use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MboParams {
    /// Unique told configs needed before the first model fit.
    pub min_trials: usize,
    pub cv_folds: usize,
    /// Randomized hyperparameter draws per model family.
    pub search_draws: usize,
    /// Minimum CV R² for a model to enter the ensemble.
    pub r2_threshold: f64,
    /// Weight of the ensemble spread in the acquisition.
    pub beta: f64,
    pub refit_every: usize,
    pub max_train_points: usize,
    pub inner_generations: usize,
    pub inner_population: usize,
    /// Best observed configs that seed the inner search.
    pub inner_seed_top: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
}

impl Default for MboParams {
    fn default() -> Self {
        MboParams {
            min_trials: 10,
            cv_folds: 5,
            search_draws: 16,
            r2_threshold: 0.0,
            beta: 1.0,
            refit_every: 16,
            max_train_points: 1024,
            inner_generations: 20,
            inner_population: 50,
            inner_seed_top: 10,
            tournament_size: 3,
            crossover_rate: 0.5,
            mutation_rate: 0.1,
        }
    }
}

impl MboParams {
    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(DseError::invalid("cv_folds", "must be at least 2"));
        }
        if self.search_draws == 0 {
            return Err(DseError::invalid("search_draws", "must be at least 1"));
        }
        if !(self.beta >= 0.0) {
            return Err(DseError::invalid("beta", "must be non-negative"));
        }
        if self.refit_every == 0 {
            return Err(DseError::invalid("refit_every", "must be at least 1"));
        }
        if self.max_train_points < self.cv_folds {
            return Err(DseError::invalid(
                "max_train_points",
                "must be at least cv_folds",
            ));
        }
        if self.inner_population < 2 {
            return Err(DseError::invalid("inner_population", "must be at least 2"));
        }
        if self.tournament_size == 0 {
            return Err(DseError::invalid("tournament_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(DseError::invalid("crossover_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(DseError::invalid("mutation_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub spec: ModelSpec,
    pub cv_r2: f64,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
    /// No family cleared the threshold; the single best model is used.
    pub fallback: bool,
}

/// Tunes each model family by randomized search scored with k-fold CV R²,
/// keeps the families whose best score clears `r2_threshold` and refits
/// them on all data.
pub fn mbo_select_models<R: Rng + ?Sized>(
    xs: &[Sample],
    y: &[f64],
    params: &MboParams,
    rng: &mut R,
) -> Ensemble {
    assert!(!xs.is_empty(), "model selection on empty data");
    let mut best_per_family: Vec<(ModelSpec, f64)> = Vec::new();
    for family in ModelFamily::ALL {
        let mut tried: Vec<ModelSpec> = Vec::new();
        let mut best: Option<(ModelSpec, f64)> = None;
        for _ in 0..params.search_draws {
            let spec = family.draw(rng);
            if tried.contains(&spec) {
                continue;
            }
            tried.push(spec);
            let score = cross_val_r2(&spec, xs, y, params.cv_folds, rng);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((spec, score));
            }
        }
        best_per_family.extend(best);
    }
    let mut chosen: Vec<(ModelSpec, f64)> = best_per_family
        .iter()
        .copied()
        .filter(|(_, s)| *s >= params.r2_threshold)
        .collect();
    let fallback = chosen.is_empty();
    if fallback {
        let top = best_per_family
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one family");
        chosen.push(top);
    }
    let refs: Vec<&Sample> = xs.iter().collect();
    let members = chosen
        .into_iter()
        .map(|(spec, cv_r2)| EnsembleMember {
            spec,
            cv_r2,
            model: spec.fit(&refs, y, rng),
        })
        .collect();
    Ensemble { members, fallback }
}

/// Mean member prediction plus `beta` times their population standard
/// deviation.
pub fn mbo_acquisition(ensemble: &Ensemble, sample: &Sample, beta: f64) -> f64 {
    let preds: Vec<f64> = ensemble
        .members
        .iter()
        .map(|m| m.model.predict(sample))
        .collect();
    acquisition_from_predictions(&preds, beta)
}

pub fn acquisition_from_predictions(preds: &[f64], beta: f64) -> f64 {
    assert!(!preds.is_empty(), "acquisition over an empty ensemble");
    let n = preds.len() as f64;
    let mean = preds.iter().sum::<f64>() / n;
    let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    mean + beta * var.sqrt()
}

pub struct Mbo {
    space: Arc<SearchSpace>,
    params: MboParams,
    rng: ChaCha8Rng,
    book: Bookkeeping,
    observed: HashMap<AcceleratorConfig, (f64, usize)>,
    ensemble: Option<Ensemble>,
    tells_since_fit: usize,
    /// Inner-search candidates, best last.
    pool: Vec<AcceleratorConfig>,
}

impl Mbo {
    pub fn new(space: Arc<SearchSpace>, params: MboParams, seed: u64) -> Self {
        Mbo {
            space,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            book: Bookkeeping::default(),
            observed: HashMap::new(),
            ensemble: None,
            tells_since_fit: 0,
            pool: Vec::new(),
        }
    }

    pub fn params(&self) -> &MboParams {
        &self.params
    }

    pub fn ensemble(&self) -> Option<&Ensemble> {
        self.ensemble.as_ref()
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
        match fallback {
            Some(c) => c,
            None => loop {
                let c = self.space.sample_uniform(&mut self.rng);
                if !self.book.is_pending(&c) {
                    break c;
                }
            },
        }
    }

    fn refit(&mut self) {
        let train = capped_training_set(&self.observed, self.params.max_train_points);
        let xs: Vec<Sample> = train
            .iter()
            .map(|(c, _)| Sample::new(&self.space, c))
            .collect();
        let y: Vec<f64> = train.iter().map(|(_, r)| *r).collect();
        self.ensemble = Some(mbo_select_models(&xs, &y, &self.params, &mut self.rng));
        self.tells_since_fit = 0;
        self.pool = self.inner_search();
    }

    /// Evolutionary maximization of the acquisition. Returns every scored
    /// config, told ones included, ordered so the best pops first.
    fn inner_search(&mut self) -> Vec<AcceleratorConfig> {
        let ensemble = self.ensemble.as_ref().expect("fitted ensemble");
        let space = self.space.clone();
        let beta = self.params.beta;
        let mut scored: HashMap<AcceleratorConfig, f64> = HashMap::new();
        let score = |c: &AcceleratorConfig, scored: &mut HashMap<AcceleratorConfig, f64>| -> f64 {
            *scored
                .entry(c.clone())
                .or_insert_with(|| mbo_acquisition(ensemble, &Sample::new(&space, c), beta))
        };

        let mut seeds: Vec<(&AcceleratorConfig, f64, usize)> = self
            .observed
            .iter()
            .map(|(c, (r, t))| (c, *r, *t))
            .collect();
        seeds.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
        let mut population: Vec<(AcceleratorConfig, f64)> = Vec::new();
        for (c, _, _) in seeds.into_iter().take(self.params.inner_seed_top) {
            let v = score(c, &mut scored);
            population.push((c.clone(), v));
        }
        while population.len() < self.params.inner_population {
            let c = self.space.sample_uniform(&mut self.rng);
            let v = score(&c, &mut scored);
            population.push((c, v));
        }

        for _ in 0..self.params.inner_generations {
            let mut next = population.clone();
            for _ in 0..self.params.inner_population {
                let a = tournament(&population, self.params.tournament_size, &mut self.rng);
                let b = tournament(&population, self.params.tournament_size, &mut self.rng);
                let child = crossover(
                    &population[a].0,
                    &population[b].0,
                    self.params.crossover_rate,
                    &mut self.rng,
                );
                let mut child = mutate(
                    &self.space,
                    &child,
                    self.params.mutation_rate,
                    &mut self.rng,
                );
                if child == population[a].0 {
                    let gene = self.rng.random_range(0..self.space.len());
                    child = self.space.mutate_gene(&child, gene, &mut self.rng);
                }
                let v = score(&child, &mut scored);
                next.push((child, v));
            }
            next.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            next.dedup_by(|a, b| a.0 == b.0);
            next.truncate(self.params.inner_population);
            population = next;
        }

        let mut pool: Vec<(AcceleratorConfig, f64)> = scored.into_iter().collect();
        // Ascending, so `pop` yields the best.
        pool.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        pool.into_iter().map(|(c, _)| c).collect()
    }

    fn propose(&mut self) -> AcceleratorConfig {
        if self.observed.len() < self.params.min_trials.max(self.params.cv_folds) {
            return self.random_unpending();
        }
        if self.ensemble.is_none() || self.tells_since_fit >= self.params.refit_every {
            self.refit();
        }
        for attempt in 0..2 {
            while let Some(c) = self.pool.pop() {
                if !self.book.is_pending(&c) {
                    return c;
                }
            }
            if attempt == 0 {
                self.pool = self.inner_search();
            }
        }
        self.random_unpending()
    }
}

fn tournament<R: Rng + ?Sized>(
    population: &[(AcceleratorConfig, f64)],
    size: usize,
    rng: &mut R,
) -> usize {
    let mut best = rng.random_range(0..population.len());
    for _ in 1..size {
        let i = rng.random_range(0..population.len());
        if population[i].1 > population[best].1 {
            best = i;
        }
    }
    best
}

impl Optimizer for Mbo {
    fn tag(&self) -> &str {
        "mbo"
    }

    fn ask(&mut self, n: usize) -> Vec<AcceleratorConfig> {
        (0..n)
            .map(|_| {
                let c = self.propose();
                self.book.propose(c)
            })
            .collect()
    }

    fn tell(&mut self, records: &[TrialRecord]) {
        for r in records {
            self.book.record(r);
            let order = self.book.history.len();
            self.observed.insert(r.config.clone(), (r.reward, order));
            self.tells_since_fit += 1;
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
}
