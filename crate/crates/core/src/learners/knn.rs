use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

/// k-nearest neighbours on z-scored attributes, Euclidean distance.
/// Distance ties resolve toward the earlier training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Standardized training rows, row-major.
    pub points: Vec<f64>,
    pub labels: Vec<bool>,
}

impl Knn {
    pub fn fit(data: &FeatureMatrix, labels: &[bool], k: usize) -> Self {
        let n = data.n_rows() as f64;
        let d = data.n_cols();
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let mu = data.column(j).sum::<f64>() / n;
            let sd = (data.column(j).map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
            mean[j] = mu;
            if sd > 0.0 {
                scale[j] = sd;
            }
        }
        let mut points = Vec::with_capacity(data.n_rows() * d);
        for r in data.rows() {
            points.extend(r.iter().enumerate().map(|(j, x)| (x - mean[j]) / scale[j]));
        }
        Knn {
            k: k.max(1),
            mean,
            scale,
            points,
            labels: labels.to_vec(),
        }
    }

    /// Fraction of positive labels among the k nearest training rows.
    pub fn score(&self, row: &[f64]) -> f64 {
        let d = self.mean.len();
        let q: Vec<f64> = row.iter().enumerate().map(|(j, x)| (x - self.mean[j]) / self.scale[j]).collect();
        let mut dist: Vec<(f64, usize)> = self
            .points
            .chunks_exact(d.max(1))
            .take(self.labels.len())
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        if k == 0 {
            return 0.0;
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let pos = dist[..k].iter().filter(|(_, i)| self.labels[*i]).count();
        pos as f64 / k as f64
    }
}
