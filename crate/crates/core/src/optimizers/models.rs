//! Small regression models used as MBO surrogates, plus k-fold
//! cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;

use super::gp::{backward_sub, cholesky, forward_sub, sq_dist};
use crate::space::{AcceleratorConfig, SearchSpace};

/// One training or query point in every encoding the models use.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub numeric: Vec<f64>,
    pub onehot: Vec<f64>,
    pub genome: Vec<usize>,
}

impl Sample {
    pub fn new(space: &SearchSpace, config: &AcceleratorConfig) -> Self {
        Sample {
            numeric: space.encode_numeric(config),
            onehot: space.encode_onehot(config),
            genome: config.genome().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    /// k-nearest neighbors on the numeric encoding.
    Knn { k: usize },
    /// Ridge regression on one-hot features.
    Ridge { penalty: f64 },
    /// Bagged regression trees over grid indices.
    Trees { n_trees: usize, max_depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Knn,
    Ridge,
    Trees,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Knn, ModelFamily::Ridge, ModelFamily::Trees];

    /// Random draw from the family's hyperparameter grid.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> ModelSpec {
        match self {
            ModelFamily::Knn => ModelSpec::Knn {
                k: [3, 5, 7][rng.random_range(0..3)],
            },
            ModelFamily::Ridge => ModelSpec::Ridge {
                penalty: [0.1, 1.0, 10.0][rng.random_range(0..3)],
            },
            ModelFamily::Trees => ModelSpec::Trees {
                n_trees: [25, 50][rng.random_range(0..2)],
                max_depth: 3,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Knn {
        k: usize,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
    Ridge {
        weights: Vec<f64>,
        intercept: f64,
    },
    Trees(Vec<Tree>),
}

impl ModelSpec {
    pub fn fit<R: Rng + ?Sized>(&self, xs: &[&Sample], y: &[f64], rng: &mut R) -> Model {
        assert_eq!(xs.len(), y.len());
        assert!(!xs.is_empty(), "fit on empty data");
        match *self {
            ModelSpec::Knn { k } => Model::Knn {
                k,
                x: xs.iter().map(|s| s.numeric.clone()).collect(),
                y: y.to_vec(),
            },
            ModelSpec::Ridge { penalty } => fit_ridge(xs, y, penalty),
            ModelSpec::Trees { n_trees, max_depth } => {
                let n = xs.len();
                let trees = (0..n_trees)
                    .map(|_| {
                        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                        Tree::grow(xs, y, idx, max_depth)
                    })
                    .collect();
                Model::Trees(trees)
            }
        }
    }
}

impl Model {
    pub fn predict(&self, s: &Sample) -> f64 {
        match self {
            Model::Knn { k, x, y } => {
                let mut d: Vec<(f64, usize)> = x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| (sq_dist(xi, &s.numeric), i))
                    .collect();
                let k = (*k).min(d.len());
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|(_, i)| y[*i]).sum::<f64>() / k as f64
            }
            Model::Ridge { weights, intercept } => {
                intercept
                    + weights
                        .iter()
                        .zip(&s.onehot)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            }
            Model::Trees(trees) => {
                trees.iter().map(|t| t.predict(&s.genome)).sum::<f64>() / trees.len() as f64
            }
        }
    }
}

fn fit_ridge(xs: &[&Sample], y: &[f64], penalty: f64) -> Model {
    let n = xs.len();
    let p = xs[0].onehot.len();
    let x_mean: Vec<f64> = (0..p)
        .map(|j| xs.iter().map(|s| s.onehot[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (s, yi) in xs.iter().zip(y) {
        let xc: Vec<f64> = s.onehot.iter().zip(&x_mean).map(|(a, m)| a - m).collect();
        let yc = yi - y_mean;
        for i in 0..p {
            if xc[i] == 0.0 {
                continue;
            }
            rhs[i] += xc[i] * yc;
            for j in 0..=i {
                gram[i * p + j] += xc[i] * xc[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j * p + i] = gram[i * p + j];
        }
        gram[i * p + i] += penalty;
    }
    let weights = if cholesky(&mut gram, p) {
        let mut w = rhs;
        forward_sub(&gram, p, &mut w);
        backward_sub(&gram, p, &mut w);
        w
    } else {
        vec![0.0; p]
    };
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Model::Ridge { weights, intercept }
}

/// Depth-limited regression tree splitting on `genome[feature] <= threshold`.
#[derive(Debug, Clone)]
pub enum Tree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: usize,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    fn grow(xs: &[&Sample], y: &[f64], idx: Vec<usize>, depth: usize) -> Tree {
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        if depth == 0 || idx.len() < 2 {
            return Tree::Leaf(mean);
        }
        let n_features = xs[0].genome.len();
        let total: f64 = idx.iter().map(|&i| y[i]).sum();
        let total_n = idx.len() as f64;
        // Maximizing sum²/n over both sides minimizes SSE.
        let mut best: Option<(f64, usize, usize)> = None;
        let base_score = total * total / total_n;
        for f in 0..n_features {
            let max_v = idx.iter().map(|&i| xs[i].genome[f]).max().unwrap_or(0);
            let mut sums = vec![0.0; max_v + 1];
            let mut counts = vec![0usize; max_v + 1];
            for &i in &idx {
                let v = xs[i].genome[f];
                sums[v] += y[i];
                counts[v] += 1;
            }
            let (mut ls, mut ln) = (0.0, 0usize);
            for t in 0..max_v {
                ls += sums[t];
                ln += counts[t];
                if ln == 0 || ln == idx.len() {
                    continue;
                }
                let rs = total - ls;
                let rn = total_n - ln as f64;
                let score = ls * ls / ln as f64 + rs * rs / rn;
                if score > base_score + 1e-12 && best.is_none_or(|(b, _, _)| score > b) {
                    best = Some((score, f, t));
                }
            }
        }
        match best {
            None => Tree::Leaf(mean),
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| xs[i].genome[feature] <= threshold);
                Tree::Split {
                    feature,
                    threshold,
                    left: Box::new(Tree::grow(xs, y, l, depth - 1)),
                    right: Box::new(Tree::grow(xs, y, r, depth - 1)),
                }
            }
        }
    }

    pub fn predict(&self, genome: &[usize]) -> f64 {
        match self {
            Tree::Leaf(v) => *v,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if genome[*feature] <= *threshold {
                    left.predict(genome)
                } else {
                    right.predict(genome)
                }
            }
        }
    }
}

/// Pooled out-of-fold R². Constant targets score 0.
pub fn cross_val_r2<R: Rng + ?Sized>(
    spec: &ModelSpec,
    xs: &[Sample],
    y: &[f64],
    folds: usize,
    rng: &mut R,
) -> f64 {
    let n = xs.len();
    let folds = folds.clamp(2, n.max(2));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut preds = vec![0.0; n];
    for f in 0..folds {
        let test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(p, _)| p % folds == f)
            .map(|(_, &i)| i)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(p, _)| p % folds != f)
            .map(|(_, &i)| i)
            .collect();
        if test.is_empty() || train.is_empty() {
            continue;
        }
        let tx: Vec<&Sample> = train.iter().map(|&i| &xs[i]).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = spec.fit(&tx, &ty, rng);
        for &i in &test {
            preds[i] = model.predict(&xs[i]);
        }
    }
    r2(y, &preds)
}

pub fn r2(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst <= 0.0 {
        return 0.0;
    }
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - sse / sst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64, f: impl Fn(&AcceleratorConfig) -> f64) -> (Vec<Sample>, Vec<f64>) {
        let space = SearchSpace::default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let configs: Vec<_> = (0..n).map(|_| space.sample_uniform(&mut rng)).collect();
        (
            configs.iter().map(|c| Sample::new(&space, c)).collect(),
            configs.iter().map(f).collect(),
        )
    }

    #[test]
    fn ridge_recovers_linear_onehot_function() {
        let (xs, y) = data(300, 1, |c| {
            2.0 * c.genome()[0] as f64 - 0.5 * c.genome()[4] as f64 + 1.0
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r2 = cross_val_r2(&ModelSpec::Ridge { penalty: 0.1 }, &xs, &y, 5, &mut rng);
        assert!(r2 > 0.99, "ridge r2 {r2}");
    }

    #[test]
    fn noise_is_not_explained() {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(3);
        let (xs, _) = data(200, 4, |_| 0.0);
        let y: Vec<f64> = (0..200).map(|_| noise_rng.random::<f64>()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in [ModelSpec::Knn { k: 3 }, ModelSpec::Ridge { penalty: 0.1 }] {
            assert!(cross_val_r2(&spec, &xs, &y, 5, &mut rng) < 0.0, "{spec:?}");
        }
    }

    #[test]
    fn knn_averages_nearest() {
        let space = SearchSpace::default_space();
        let a = Sample::new(&space, &AcceleratorConfig::from_genome(vec![0; 10]));
        let b = Sample::new(&space, &AcceleratorConfig::from_genome(vec![1; 10]));
        let c = Sample::new(&space, &AcceleratorConfig::from_genome(vec![3; 10]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ModelSpec::Knn { k: 2 }.fit(&[&a, &b, &c], &[1.0, 3.0, 100.0], &mut rng);
        assert_eq!(m.predict(&a), 2.0);
    }

    #[test]
    fn tree_splits_step_function() {
        let (xs, y) = data(200, 6, |c| if c.genome()[2] >= 3 { 5.0 } else { 1.0 });
        let refs: Vec<&Sample> = xs.iter().collect();
        let tree = Tree::grow(&refs, &y, (0..xs.len()).collect(), 3);
        for (s, yi) in xs.iter().zip(&y) {
            assert_eq!(tree.predict(&s.genome), *yi);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r2 = cross_val_r2(
            &ModelSpec::Trees {
                n_trees: 25,
                max_depth: 3,
            },
            &xs,
            &y,
            5,
            &mut rng,
        );
        assert!(r2 > 0.9, "{r2}");
    }

    #[test]
    fn r2_edge_cases() {
        assert_eq!(r2(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
        assert_eq!(r2(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
    }
}
