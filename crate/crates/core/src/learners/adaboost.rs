use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, DecisionTree, TreeParams};
use crate::matrix::FeatureMatrix;

/// Weighted error below which a stump is treated as perfect.
const PERFECT_ERR: f64 = 1e-10;

/// Binary SAMME boosting over depth-1 stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stumps: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    /// Score used when no stump beat chance.
    pub prior: f64,
}

impl AdaBoost {
    pub fn fit(data: &FeatureMatrix, labels: &[bool], rounds: usize) -> Self {
        let n = data.n_rows();
        let rows: Vec<usize> = (0..n).collect();
        let mut w = vec![1.0 / n as f64; n];
        let params = TreeParams {
            max_depth: 1,
            min_leaf: 1,
            max_features: None,
        };
        let prior = labels.iter().filter(|l| **l).count() as f64 / n as f64;
        let mut stumps = Vec::new();
        let mut alphas = Vec::new();
        for _ in 0..rounds {
            let stump = grow::<ChaCha8Rng>(data, labels, &w, &rows, params, None);
            let miss: Vec<bool> = (0..n).map(|i| stump.predict(data.row(i)) != labels[i]).collect();
            let total: f64 = w.iter().sum();
            let err = w.iter().zip(&miss).filter(|(_, m)| **m).map(|(w, _)| w).sum::<f64>() / total;
            if err >= 0.5 {
                break;
            }
            let e = err.max(PERFECT_ERR);
            let alpha = ((1.0 - e) / e).ln();
            stumps.push(stump);
            alphas.push(alpha);
            if err <= PERFECT_ERR {
                break;
            }
            for (wi, m) in w.iter_mut().zip(&miss) {
                if *m {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= s);
        }
        AdaBoost { stumps, alphas, prior }
    }

    /// Share of the total vote weight on the positive class.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.staged_score(row, self.stumps.len())
    }

    /// Score using only the first `rounds` stumps.
    pub fn staged_score(&self, row: &[f64], rounds: usize) -> f64 {
        let rounds = rounds.min(self.stumps.len());
        let total: f64 = self.alphas[..rounds].iter().sum();
        if rounds == 0 || total <= 0.0 {
            return self.prior;
        }
        let pos: f64 = self.stumps[..rounds]
            .iter()
            .zip(&self.alphas)
            .filter(|(s, _)| s.predict(row))
            .map(|(_, a)| a)
            .sum();
        pos / total
    }
}
