//! CART regression trees and a bagged random forest.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Fraction of features examined at each split (at least one).
    pub feature_fraction: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feature_fraction: DEFAULT_FEATURE_FRACTION,
            bootstrap: true,
        }
    }
}

pub const DEFAULT_FEATURE_FRACTION: f64 = 0.6;

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("forest min_leaf must be at least 1"));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::invalid("forest feature_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn features_per_split(&self, n_features: usize) -> usize {
        ((self.feature_fraction * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: &'a ForestParams,
    rng: Rng,
    feature_order: Vec<usize>,
    scratch: Vec<(f64, f64)>,
}

impl TreeBuilder<'_> {
    fn grow(mut self, mut rows: Vec<usize>) -> RegressionTree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        // (node id, start, end, depth) over `rows`
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let slice = &mut rows[start..end];
            let value = slice.iter().map(|&i| self.y[i]).sum::<f64>() / slice.len() as f64;
            let can_split = self.params.max_depth.is_none_or(|d| depth < d)
                && slice.len() >= 2 * self.params.min_leaf
                && slice.iter().any(|&i| self.y[i] != self.y[slice[0]]);
            let best = if can_split { self.best_split(slice) } else { None };
            let Some(best) = best else {
                nodes[id] = Node::Leaf { value };
                continue;
            };
            // partition in place: rows going left first
            let mut mid = 0;
            for k in 0..slice.len() {
                if self.x[[slice[k], best.feature]] <= best.threshold {
                    slice.swap(k, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
            stack.push((right, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        RegressionTree { nodes }
    }

    /// Best variance-reducing split over a random subset of features. If that subset
    /// offers no valid split the remaining features are tried as well.
    fn best_split(&mut self, rows: &[usize]) -> Option<Candidate> {
        let p = self.x.ncols();
        let mtry = self.params.features_per_split(p);
        self.feature_order.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        for pos in 0..p {
            if pos >= mtry && best.is_some() {
                break;
            }
            let feature = self.feature_order[pos];
            if let Some(c) = self.best_split_on(rows, feature) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_split_on(&mut self, rows: &[usize], feature: usize) -> Option<Candidate> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        self.scratch.clear();
        self.scratch
            .extend(rows.iter().map(|&i| (self.x[[i, feature]], self.y[i])));
        self.scratch
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let total: f64 = self.scratch.iter().map(|p| p.1).sum();
        let mut left_sum = 0.0;
        let mut best: Option<Candidate> = None;
        for k in 1..n {
            left_sum += self.scratch[k - 1].1;
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (lo, hi) = (self.scratch[k - 1].0, self.scratch[k].0);
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let diff = left_sum / nl - (total - left_sum) / nr;
            // SSE reduction of splitting the node: nl nr / n (mean_l - mean_r)^2
            let gain = nl * nr / n as f64 * diff * diff;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

/// Fits one tree on `rows` (indices into `x`, repeats allowed).
pub fn tree_fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    rows: Vec<usize>,
    params: &ForestParams,
    seed: u64,
) -> RegressionTree {
    let builder = TreeBuilder {
        x,
        y,
        params,
        rng: rng_from_seed(seed),
        feature_order: (0..x.ncols()).collect(),
        scratch: Vec::with_capacity(rows.len()),
    };
    builder.grow(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

/// Bagged CART ensemble. Tree `t` uses its own seed derived from `seed`, so the
/// result is the same whether trees are built serially or in parallel.
pub fn forest_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    params.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::NoRows);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let rows = if params.bootstrap {
                let mut rng = rng_from_seed(derive_seed(tree_seed, u64::MAX));
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree_fit(x, y, rows, params, tree_seed)
        })
        .collect();
    Ok(RandomForest {
        params: *params,
        n_features: x.ncols(),
        trees,
    })
}

impl RandomForest {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok(x.rows()
            .into_iter()
            .map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n_trees)
            .collect())
    }
}
