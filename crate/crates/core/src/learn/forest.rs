use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, Dataset, LearnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 500, max_features: None, min_leaf: 1 }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self, d: usize) -> usize {
        self.max_features.unwrap_or_else(|| (d as f64).sqrt().floor() as usize).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
                Node::Leaf { class } => return class,
            }
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub params: ForestParams,
    pub max_features: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Classifier for ForestModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn feature_names(&self) -> &[String] {
        &self.features
    }

    /// Fraction of trees voting for each class.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        let n = self.trees.len() as f64;
        votes.into_iter().map(|v| v as f64 / n).collect()
    }
}

/// Bagged CART forest with Gini splits.
///
/// Tree `i` draws its bootstrap sample and feature subsets from a seed derived
/// from `(seed, i)`, so the model is the same for any `workers` count
/// (`0` uses the global pool). Candidate features are sampled in feature-name
/// order, which keeps the fitted forest unchanged under column permutations.
pub fn train_forest(
    data: &Dataset,
    params: &ForestParams,
    seed: u64,
    workers: usize,
) -> Result<ForestModel, LearnError> {
    data.check_trainable()?;
    let d = data.n_features();
    if d == 0 {
        return Err(LearnError::Dimension { expected: 1, got: 0 });
    }
    let mut by_name: Vec<usize> = (0..d).collect();
    by_name.sort_by(|&a, &b| data.registry.names[a].cmp(&data.registry.names[b]));
    let mtry = params.resolved_max_features(d);
    let grow = |i: usize| {
        let mut rng = crate::seed::rng(seed, "forest-tree", i as u64);
        let n = data.len();
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut builder = Builder {
            data,
            by_name: &by_name,
            mtry,
            min_leaf: params.min_leaf.max(1),
            rng,
            nodes: Vec::new(),
        };
        builder.grow(sample);
        Tree { nodes: builder.nodes }
    };
    let build_all = || (0..params.n_trees).into_par_iter().map(grow).collect::<Vec<Tree>>();
    let trees = if workers == 0 {
        build_all()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| LearnError::Persist(e.to_string()))?
            .install(build_all)
    };
    Ok(ForestModel {
        features: data.registry.names.clone(),
        classes: data.classes.clone(),
        params: *params,
        max_features: mtry,
        seed,
        trees,
    })
}

struct Builder<'a> {
    data: &'a Dataset,
    by_name: &'a [usize],
    mtry: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    impurity: f64,
    rank: usize,
    feature: usize,
    threshold: f64,
}

fn gini_sum(counts: &[usize], n: usize) -> f64 {
    // n * gini = n - sum(c^2)/n
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl Builder<'_> {
    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.data.classes.len()];
        for &r in rows {
            counts[self.data.y[r]] += 1;
        }
        counts
    }

    /// Grow the subtree for `rows` and return its node index. Iterative so
    /// deep trees on noisy data cannot overflow the stack.
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let root = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let mut stack = vec![(root, rows)];
        while let Some((at, rows)) = stack.pop() {
            let counts = self.class_counts(&rows);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || rows.len() < 2 * self.min_leaf { None } else { self.best_split(&rows, &counts) };
            match split {
                None => self.nodes[at] = Node::Leaf { class: majority(&counts) },
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| self.data.x[i][s.feature] <= s.threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { class: 0 });
                    let right = self.nodes.len();
                    self.nodes.push(Node::Leaf { class: 0 });
                    self.nodes[at] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        root
    }

    /// Best Gini split over a random subset of `mtry` features. When none of
    /// them separates the rows, the remaining features are tried in random
    /// order until one does.
    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let mut order: Vec<usize> = (0..self.by_name.len()).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        for (k, &rank) in order.iter().enumerate() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            let feature = self.by_name[rank];
            if let Some((impurity, threshold)) = self.scan_feature(rows, counts, feature) {
                let replace = match &best {
                    None => true,
                    Some(b) => impurity < b.impurity || (impurity == b.impurity && rank < b.rank),
                };
                if replace {
                    best = Some(BestSplit { impurity, rank, feature, threshold });
                }
            }
        }
        best
    }

    /// Lowest weighted Gini over thresholds of one feature, or `None` if the
    /// feature is constant on `rows` or no threshold respects `min_leaf`.
    fn scan_feature(&self, rows: &[usize], counts: &[usize], feature: usize) -> Option<(f64, f64)> {
        let x = &self.data.x;
        let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (x[r][feature], self.data.y[r])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let mut left = vec![0usize; counts.len()];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left[sorted[i].1] += 1;
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            if a == b {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < self.min_leaf || nr < self.min_leaf {
                continue;
            }
            let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let impurity = gini_sum(&left, nl) + gini_sum(&right, nr);
            if best.is_none_or(|(bi, _)| impurity < bi) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some((impurity, threshold));
            }
        }
        best
    }
}
