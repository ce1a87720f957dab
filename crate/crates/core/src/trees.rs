//! Extremely randomised trees with Gini splitting.
//!
//! Each node draws candidate features uniformly without replacement and a
//! single uniform threshold per candidate between the node-local minimum
//! and maximum of that feature; the candidate with the lowest weighted
//! child impurity wins.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(n_features))`, at least 1.
    #[default]
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesConfig {
    pub n_estimators: usize,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            bootstrap: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Samples with `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Arena of nodes; index 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, query: ArrayView1<f64>) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if query[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesModel {
    pub trees: Vec<Tree>,
    pub config: ExtraTreesConfig,
    pub n_classes: usize,
    pub n_features: usize,
    pub oob_accuracy: Option<f64>,
}

/// `1 - sum_c (count_c / total)^2`.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("gini impurity of an empty node".into()));
    }
    Ok(gini(class_counts, total))
}

fn gini(counts: &[usize], total: usize) -> f64 {
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    min_samples_split: usize,
}

impl Grower<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &s in samples {
            c[self.y[s]] += 1;
        }
        c
    }

    fn grow(&self, samples: &mut [usize], rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = Vec::new();
        // (node index to fill, sample range)
        let mut stack = vec![(0usize, 0usize, samples.len())];
        nodes.push(Node::Leaf { counts: Vec::new() });
        let n_features = self.x.ncols();
        let mut features: Vec<usize> = (0..n_features).collect();
        while let Some((slot, lo, hi)) = stack.pop() {
            let node_samples = &mut samples[lo..hi];
            let counts = self.counts(node_samples);
            let n = node_samples.len();
            let impurity = gini(&counts, n);
            if impurity <= 0.0 || n < self.min_samples_split {
                nodes[slot] = Node::Leaf { counts };
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<(f64, usize, f64)> = None;
            let mut tried = 0;
            for &f in &features {
                if tried == self.max_features {
                    break;
                }
                let (mn, mx) = node_samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| {
                    let v = self.x[(s, f)];
                    (a.min(v), b.max(v))
                });
                if !(mx > mn) {
                    continue;
                }
                tried += 1;
                let threshold = rng.random_range(mn..mx);
                let mut left = vec![0; self.n_classes];
                let mut nl = 0;
                for &s in node_samples.iter() {
                    if self.x[(s, f)] <= threshold {
                        left[self.y[s]] += 1;
                        nl += 1;
                    }
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let nr = n - nl;
                if nl == 0 || nr == 0 {
                    continue;
                }
                let weighted = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.is_none_or(|b| weighted < b.0) {
                    best = Some((weighted, f, threshold));
                }
            }
            match best {
                Some((weighted, feature, threshold)) if weighted < impurity - 1e-15 => {
                    // Partition the node's samples in place: left block first.
                    let mut split = 0;
                    for i in 0..n {
                        if self.x[(node_samples[i], feature)] <= threshold {
                            node_samples.swap(i, split);
                            split += 1;
                        }
                    }
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, lo + split, hi));
                    stack.push((left, lo, lo + split));
                }
                _ => nodes[slot] = Node::Leaf { counts },
            }
        }
        Tree { nodes }
    }
}

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

pub fn etc_fit(scores: ArrayView2<f64>, labels: &[usize], config: &ExtraTreesConfig) -> Result<ExtraTreesModel> {
    let (n, p) = scores.dim();
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("ExtraTrees needs non-empty training data".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("ExtraTrees needs at least 2 samples".into()));
    }
    if labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    if config.n_estimators == 0 {
        return Err(Error::InvalidArgument("n_estimators must be at least 1".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let grower = Grower {
        x: scores,
        y: labels,
        n_classes,
        max_features: config.max_features.resolve(p),
        min_samples_split: config.min_samples_split.max(2),
    };
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut in_bag: Vec<Vec<bool>> = Vec::new();
    for t in 0..config.n_estimators {
        let mut rng = tree_rng(config.seed, t);
        let mut samples: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        if config.bootstrap {
            let mut bag = vec![false; n];
            for &s in &samples {
                bag[s] = true;
            }
            in_bag.push(bag);
        }
        trees.push(grower.grow(&mut samples, &mut rng));
    }

    let oob_accuracy = if config.bootstrap {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for i in 0..n {
            let mut proba = vec![0.0; n_classes];
            let mut votes = 0;
            for (t, tree) in trees.iter().enumerate() {
                if in_bag[t][i] {
                    continue;
                }
                accumulate(&mut proba, tree.leaf_for(scores.row(i)));
                votes += 1;
            }
            if votes > 0 {
                scored += 1;
                if argmax(&proba) == labels[i] {
                    correct += 1;
                }
            }
        }
        (scored > 0).then(|| correct as f64 / scored as f64)
    } else {
        None
    };

    Ok(ExtraTreesModel {
        trees,
        config: config.clone(),
        n_classes,
        n_features: p,
        oob_accuracy,
    })
}

fn accumulate(proba: &mut [f64], counts: &[usize]) {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return;
    }
    for (p, &c) in proba.iter_mut().zip(counts) {
        *p += c as f64 / total as f64;
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

impl ExtraTreesModel {
    /// Out-of-bag accuracy; only defined for forests grown on bootstrap
    /// resamples.
    pub fn oob_score(&self) -> Result<f64> {
        if !self.config.bootstrap {
            return Err(Error::Config(
                "out-of-bag score requires bootstrap = true; this forest was grown on the full sample".into(),
            ));
        }
        self.oob_accuracy
            .ok_or_else(|| Error::Config("no sample was out of bag for any tree".into()))
    }

    pub fn predict_proba(&self, query: ArrayView1<f64>) -> Result<Vec<f64>> {
        if query.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: query.len(),
            });
        }
        let mut proba = vec![0.0; self.n_classes];
        for tree in &self.trees {
            accumulate(&mut proba, tree.leaf_for(query));
        }
        let k = self.trees.len() as f64;
        proba.iter_mut().for_each(|p| *p /= k);
        Ok(proba)
    }
}

/// Argmax of the tree-averaged class probabilities, lowest label on ties.
pub fn etc_predict(model: &ExtraTreesModel, query: ArrayView1<f64>) -> Result<usize> {
    Ok(argmax(&model.predict_proba(query)?))
}
