//! Bayesian optimization with a GP surrogate, expected improvement and
//! hill-climbing acquisition search. Categorical genes are one-hot encoded
//! alongside the normalized index encoding.
//!
//! Pending proposals are handled with a constant liar: each pending config
//! is imputed at the current posterior mean before the next proposal.
//! Warm starts use a two-level stack: a base GP on source-task data and a
//! residual GP on target data.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement, GaussianProcess, GpHyper, HyperGrid};
use super::hill_climb::hill_climb_from;
use super::{capped_training_set, Bookkeeping, Optimizer, TrialRecord};
use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpBoParams {
    pub restarts: usize,
    /// EI margin in units of the target standard deviation.
    pub xi: f64,
    /// Random proposals before the first model fit.
    pub n_initial: usize,
    /// Tells between hyperparameter re-selections.
    pub refit_every: usize,
    /// Training-set cap: half best rewards, half most recent.
    pub max_train_points: usize,
    pub noise_floor: f64,
}

impl Default for GpBoParams {
    fn default() -> Self {
        GpBoParams {
            restarts: 4,
            xi: 0.01,
            n_initial: 10,
            refit_every: 16,
            max_train_points: 128,
            noise_floor: 1e-10,
        }
    }
}

impl GpBoParams {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(DseError::invalid("restarts", "must be at least 1"));
        }
        if !(self.xi >= 0.0) {
            return Err(DseError::invalid("xi", "must be non-negative"));
        }
        if self.max_train_points < 2 {
            return Err(DseError::invalid("max_train_points", "must be at least 2"));
        }
        if self.refit_every == 0 {
            return Err(DseError::invalid("refit_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Base GP on source data plus residual GP on target data.
#[derive(Debug, Clone)]
pub struct GpStack {
    pub base: Option<GaussianProcess>,
    pub residual: Option<GaussianProcess>,
}

impl GpStack {
    /// Fits both levels, each with its own grid-selected hyperparameters.
    pub fn fit(
        source_x: Vec<Vec<f64>>,
        source_y: &[f64],
        target_x: Vec<Vec<f64>>,
        target_y: &[f64],
        grid: &HyperGrid,
        noise_floor: f64,
    ) -> Result<Self> {
        let base = if source_x.is_empty() {
            None
        } else {
            Some(GaussianProcess::fit_grid(
                source_x,
                source_y,
                grid,
                noise_floor,
            )?)
        };
        let stack = GpStack {
            base,
            residual: None,
        };
        stack.with_target(target_x, target_y, grid, noise_floor)
    }

    pub fn with_target(
        mut self,
        target_x: Vec<Vec<f64>>,
        target_y: &[f64],
        grid: &HyperGrid,
        noise_floor: f64,
    ) -> Result<Self> {
        self.residual = if target_x.is_empty() {
            None
        } else {
            let r = self.residuals(&target_x, target_y);
            Some(GaussianProcess::fit_grid(target_x, &r, grid, noise_floor)?)
        };
        Ok(self)
    }

    pub fn base_mean(&self, x: &[f64]) -> f64 {
        self.base.as_ref().map_or(0.0, |b| b.predict_mean(x))
    }

    fn residuals(&self, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| yi - self.base_mean(xi))
            .collect()
    }

    /// Posterior mean and variance. Without target data the base GP
    /// answers alone.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        match (&self.base, &self.residual) {
            (_, Some(r)) => {
                let (m, v) = r.predict(x);
                (self.base_mean(x) + m, v)
            }
            (Some(b), None) => b.predict(x),
            (None, None) => (0.0, 1.0),
        }
    }
}

pub struct GpBo {
    space: Arc<SearchSpace>,
    params: GpBoParams,
    grid: HyperGrid,
    rng: ChaCha8Rng,
    book: Bookkeeping,
    /// Latest reward per told config, with the tell order of its last report.
    observed: HashMap<AcceleratorConfig, (f64, usize)>,
    base: Option<GaussianProcess>,
    source_best: Option<(AcceleratorConfig, f64)>,
    hyper: Option<GpHyper>,
    tells_since_fit: usize,
}

impl GpBo {
    pub fn new(space: Arc<SearchSpace>, params: GpBoParams, seed: u64) -> Self {
        GpBo {
            space,
            params,
            grid: HyperGrid::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            book: Bookkeeping::default(),
            observed: HashMap::new(),
            base: None,
            source_best: None,
            hyper: None,
            tells_since_fit: 0,
        }
    }

    pub fn encode(&self, config: &AcceleratorConfig) -> Vec<f64> {
        let mut v = self.space.encode_onehot(config);
        v.extend(self.space.encode_numeric(config));
        v
    }

    fn training_set(&self) -> Vec<(AcceleratorConfig, f64)> {
        capped_training_set(&self.observed, self.params.max_train_points)
    }

    fn random_unpending(&mut self) -> AcceleratorConfig {
        loop {
            let c = self.space.sample_uniform(&mut self.rng);
            if !self.book.is_pending(&c) {
                return c;
            }
        }
    }

    /// Stack fitted on current data, with pending configs imputed.
    fn posterior(&mut self) -> Result<(GpStack, Vec<(AcceleratorConfig, f64)>)> {
        let train = self.training_set();
        let x: Vec<Vec<f64>> = train.iter().map(|(c, _)| self.encode(c)).collect();
        let y: Vec<f64> = train.iter().map(|(_, r)| *r).collect();
        let stack = GpStack {
            base: self.base.clone(),
            residual: None,
        };
        if x.is_empty() {
            return Ok((stack, train));
        }
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| yi - stack.base_mean(xi))
            .collect();
        if self.hyper.is_none() || self.tells_since_fit >= self.params.refit_every {
            self.hyper = Some(GaussianProcess::select_hyper(
                &x,
                &resid,
                &self.grid,
                self.params.noise_floor,
            )?);
            self.tells_since_fit = 0;
        }
        let hyper = self.hyper.expect("hyper selected");
        let resid_mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let gp = GaussianProcess::fit_with_mean(x.clone(), &resid, hyper, resid_mean)?;
        let mut pending: Vec<&AcceleratorConfig> = self.book.pending.iter().collect();
        pending.sort();
        if pending.is_empty() {
            return Ok((
                GpStack {
                    base: stack.base,
                    residual: Some(gp),
                },
                train,
            ));
        }
        let mut x_all = x;
        let mut r_all = resid;
        for p in pending {
            let e = self.encode(p);
            r_all.push(gp.predict_mean(&e));
            x_all.push(e);
        }
        let gp = GaussianProcess::fit_with_mean(x_all, &r_all, hyper, resid_mean)?;
        Ok((
            GpStack {
                base: stack.base,
                residual: Some(gp),
            },
            train,
        ))
    }

    fn propose(&mut self) -> AcceleratorConfig {
        let have_model = self.observed.len() >= self.params.n_initial.max(2) || self.base.is_some();
        if !have_model {
            return self.random_unpending();
        }
        let (stack, train) = match self.posterior() {
            Ok(p) => p,
            Err(e) => {
                log::warn!("gp_bo: model fit failed ({e}); proposing at random");
                return self.random_unpending();
            }
        };
        let (best_cfg, best) = match train.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            Some((c, r)) => (Some(c.clone()), *r),
            None => match &self.source_best {
                Some((c, r)) => (Some(c.clone()), *r),
                None => (None, 0.0),
            },
        };
        let ys: Vec<f64> = if train.is_empty() {
            self.base.as_ref().map(|_| vec![best]).unwrap_or_default()
        } else {
            train.iter().map(|(_, r)| *r).collect()
        };
        let mean = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
        let std = (ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / ys.len().max(1) as f64)
            .sqrt();
        let xi = self.params.xi * std;

        let mut starts: Vec<AcceleratorConfig> = (0..self.params.restarts)
            .map(|_| self.space.sample_uniform(&mut self.rng))
            .collect();
        if let Some(c) = best_cfg {
            starts.push(c);
        }
        let space = self.space.clone();
        let encode = |c: &AcceleratorConfig| {
            let mut v = space.encode_onehot(c);
            v.extend(space.encode_numeric(c));
            v
        };
        // Climbs revisit neighbors constantly; memoize within this proposal.
        let mut cache: HashMap<AcceleratorConfig, f64> = HashMap::new();
        let mut acq = |c: &AcceleratorConfig| {
            *cache.entry(c.clone()).or_insert_with(|| {
                let (m, v) = stack.predict(&encode(c));
                expected_improvement(m, v.sqrt(), best, xi)
            })
        };
        let (choice, _) = hill_climb_from(&mut acq, &self.space, starts);
        if self.book.is_pending(&choice) {
            self.random_unpending()
        } else {
            choice
        }
    }
}

impl Optimizer for GpBo {
    fn tag(&self) -> &str {
        "gp_bo"
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

    /// Fits the base GP of the stack on the source trials.
    fn warm_start(&mut self, seeds: &[TrialRecord]) {
        let mut unique: HashMap<AcceleratorConfig, f64> = HashMap::new();
        for s in seeds {
            unique.insert(s.config.clone(), s.reward);
        }
        let mut pairs: Vec<(AcceleratorConfig, f64)> = unique.into_iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.len() < 2 {
            log::warn!("gp_bo: need at least two distinct source trials for a base model");
            return;
        }
        let x: Vec<Vec<f64>> = pairs.iter().map(|(c, _)| self.encode(c)).collect();
        let y: Vec<f64> = pairs.iter().map(|(_, r)| *r).collect();
        match GaussianProcess::fit_grid(x, &y, &self.grid, self.params.noise_floor) {
            Ok(gp) => {
                self.base = Some(gp);
                self.source_best = pairs.into_iter().max_by(|a, b| a.1.total_cmp(&b.1));
                for s in seeds {
                    self.book.seen.insert(s.config.clone());
                }
            }
            Err(e) => log::warn!("gp_bo: base model fit failed: {e}"),
        }
    }
}
