//! Gradient-free steepest-ascent hill climbing over single-gene moves.

use rand::Rng;

use crate::space::{AcceleratorConfig, SearchSpace};

/// Climbs from each start until no single-gene move strictly improves the
/// acquisition. Returns the best local optimum and its value; earlier starts
/// win ties.
pub fn hill_climb_from<F>(
    acquisition: &mut F,
    space: &SearchSpace,
    starts: Vec<AcceleratorConfig>,
) -> (AcceleratorConfig, f64)
where
    F: FnMut(&AcceleratorConfig) -> f64,
{
    let mut best: Option<(AcceleratorConfig, f64)> = None;
    for start in starts {
        let mut current_value = acquisition(&start);
        let mut current = start;
        loop {
            let mut step: Option<(AcceleratorConfig, f64)> = None;
            for n in space.neighbors(&current) {
                let v = acquisition(&n);
                let threshold = step.as_ref().map_or(current_value, |(_, s)| *s);
                if v > threshold {
                    step = Some((n, v));
                }
            }
            match step {
                Some((n, v)) => {
                    current = n;
                    current_value = v;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|(_, b)| current_value > *b) {
            best = Some((current, current_value));
        }
    }
    best.expect("at least one start")
}

/// [`hill_climb_from`] with `restarts` uniformly random starting points.
pub fn hill_climb<F, R>(
    mut acquisition: F,
    space: &SearchSpace,
    restarts: usize,
    rng: &mut R,
) -> AcceleratorConfig
where
    F: FnMut(&AcceleratorConfig) -> f64,
    R: Rng + ?Sized,
{
    let starts = (0..restarts.max(1))
        .map(|_| space.sample_uniform(rng))
        .collect();
    hill_climb_from(&mut acquisition, space, starts).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shrunk() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::new("a", vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            ParamSpec::new("b", vec![1.0, 2.0, 3.0]).unwrap(),
            ParamSpec::new("c", vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn fixed_point_at_indicator_target() {
        let space = SearchSpace::default_space();
        let target = AcceleratorConfig::from_genome(vec![1, 2, 3, 4, 5, 6, 3, 2, 1, 0]);
        let t = target.clone();
        let mut acq = move |c: &AcceleratorConfig| if *c == t { 1.0 } else { 0.0 };
        let (best, v) = hill_climb_from(&mut acq, &space, vec![target.clone()]);
        assert_eq!(best, target);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn separable_sum_reaches_all_max() {
        let space = shrunk();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let best = hill_climb(
            |c| c.genome().iter().sum::<usize>() as f64,
            &space,
            1,
            &mut rng,
        );
        assert_eq!(best.genome(), &[3, 2, 4]);
    }
}
