use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bookkeeping, Optimizer, TrialRecord};
use crate::space::{AcceleratorConfig, SearchSpace};

/// Rejection draws before falling back to enumerating unseen configs.
const REJECTION_TRIES: usize = 64;
/// Largest space we are willing to enumerate for unseen configs.
const ENUMERATION_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RandomParams {
    /// Sample without replacement until the space is exhausted.
    pub unique: bool,
}

/// Uniform sampling over the whole space.
pub struct RandomSearch {
    space: Arc<SearchSpace>,
    params: RandomParams,
    rng: ChaCha8Rng,
    book: Bookkeeping,
}

impl RandomSearch {
    pub fn new(space: Arc<SearchSpace>, params: RandomParams, seed: u64) -> Self {
        RandomSearch {
            space,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            book: Bookkeeping::default(),
        }
    }

    fn draw(&mut self) -> AcceleratorConfig {
        let blocked = |b: &Bookkeeping, c: &AcceleratorConfig, unique: bool| {
            b.is_pending(c) || (unique && b.is_seen(c))
        };
        for _ in 0..REJECTION_TRIES {
            let c = self.space.sample_uniform(&mut self.rng);
            if !blocked(&self.book, &c, self.params.unique) {
                return c;
            }
        }
        if self.space.cardinality() <= ENUMERATION_LIMIT {
            let free: Vec<_> = self
                .space
                .iter_configs()
                .filter(|c| !blocked(&self.book, c, self.params.unique))
                .collect();
            if let Some(c) = free.choose(&mut self.rng) {
                return c.clone();
            }
            // Everything seen: repeat a told config that is not pending.
            let free: Vec<_> = self
                .space
                .iter_configs()
                .filter(|c| !self.book.is_pending(c))
                .collect();
            if let Some(c) = free.choose(&mut self.rng) {
                return c.clone();
            }
        }
        loop {
            let c = self.space.sample_uniform(&mut self.rng);
            if !self.book.is_pending(&c) {
                return c;
            }
        }
    }
}

impl Optimizer for RandomSearch {
    fn tag(&self) -> &str {
        "random"
    }

    fn ask(&mut self, n: usize) -> Vec<AcceleratorConfig> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if self.book.pending.len() as u128 >= self.space.cardinality() {
                break;
            }
            let c = self.draw();
            out.push(self.book.propose(c));
        }
        out
    }

    fn tell(&mut self, records: &[TrialRecord]) {
        for r in records {
            self.book.record(r);
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
