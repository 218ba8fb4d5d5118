use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, DecisionTree, TreeParams};
use crate::matrix::FeatureMatrix;

/// Bagged CART trees with per-split attribute subsampling; the score is the
/// fraction of trees voting positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(data: &FeatureMatrix, labels: &[bool], n_trees: usize, params: TreeParams, seed: u64) -> Self {
        let n = data.n_rows();
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..n_trees).map(|_| master.next_u64()).collect();
        let weights = vec![1.0; n];
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                grow(data, labels, &weights, &rows, params, Some(&mut rng))
            })
            .collect();
        RandomForest { trees }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let votes = self.trees.iter().filter(|t| t.predict(row)).count();
        votes as f64 / self.trees.len() as f64
    }
}
