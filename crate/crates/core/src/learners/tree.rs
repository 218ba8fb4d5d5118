//! Weighted CART with Gini impurity. Shared by the standalone tree, the
//! forest and the boosting stumps.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Attributes examined per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Weighted fraction of positive training rows.
        score: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn score(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { score } => return *score,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.score(row) >= 0.5
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

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct Builder<'a, R> {
    data: &'a FeatureMatrix,
    labels: &'a [bool],
    weights: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_cols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let (pos, total) = rows.iter().fold((0.0, 0.0), |(p, t), &i| {
            let w = self.weights[i];
            (if self.labels[i] { p + w } else { p }, t + w)
        });
        let leaf_score = if total > 0.0 { pos / total } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { score: leaf_score });

        let pure = pos <= 0.0 || pos >= total;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let parent = total * gini(pos, total);
        let Some(best) = self.best_split(rows, total, pos) else {
            return id;
        };
        if best.impurity >= parent {
            return id;
        }
        let mid = partition(rows, |&i| self.data.get(i, best.feature) <= best.threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], total: f64, pos: f64) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for f in self.candidate_features() {
            order.sort_by(|&a, &b| self.data.get(a, f).total_cmp(&self.data.get(b, f)));
            let (mut lw, mut lp) = (0.0, 0.0);
            for (n_left, pair) in order.windows(2).enumerate() {
                let i = pair[0];
                lw += self.weights[i];
                if self.labels[i] {
                    lp += self.weights[i];
                }
                let (lo, hi) = (self.data.get(i, f), self.data.get(pair[1], f));
                if lo == hi || n_left + 1 < min_leaf || order.len() - n_left - 1 < min_leaf {
                    continue;
                }
                let impurity = lw * gini(lp, lw) + (total - lw) * gini(pos - lp, total - lw);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

fn partition(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..rows.len() {
        if pred(&rows[i]) {
            rows.swap(i, mid);
            mid += 1;
        }
    }
    mid
}

/// Grows a tree on `rows` (duplicates allowed, for bootstrap samples).
/// `rng` is only consulted when `max_features` restricts the candidates.
pub fn grow<R: Rng>(
    data: &FeatureMatrix,
    labels: &[bool],
    weights: &[f64],
    rows: &[usize],
    params: TreeParams,
    rng: Option<&mut R>,
) -> DecisionTree {
    let mut b = Builder {
        data,
        labels,
        weights,
        params,
        rng,
        nodes: Vec::new(),
    };
    let mut rows = rows.to_vec();
    b.build(&mut rows, 0);
    DecisionTree { nodes: b.nodes }
}
