//! FastICA: whitening followed by symmetric fixed-point iterations with the
//! log-cosh contrast.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_fit_input, standardization, Projection, ProjectionKind, TransformError};
use crate::matrix::FeatureMatrix;

/// E[log cosh(ν)] for a standard normal ν.
const GAUSSIAN_LOGCOSH: f64 = 0.374_567_207_491_976_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaOptions {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            seed: 0,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// (W Wᵀ)^{-1/2} W
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = (w * w.transpose()).symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Fits `k` independent components. Non-convergence is reported through
/// `converged`, not as an error.
pub fn fit_ica(m: &FeatureMatrix, k: usize, opts: IcaOptions) -> Result<Projection, TransformError> {
    check_fit_input(m)?;
    let (n, d) = (m.n_rows(), m.n_cols());
    let (mean, scale) = standardization(m);
    let z = DMatrix::from_fn(n, d, |i, j| (m.get(i, j) - mean[j]) / scale[j]);

    let cov = z.transpose() * &z / n as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > top * 1e-10).count();
    if k == 0 || k > rank {
        return Err(TransformError::TooManyComponents {
            requested: k,
            available: rank,
        });
    }
    // whitening: k × d
    let whiten = DMatrix::from_fn(k, d, |c, j| {
        let i = order[c];
        eig.eigenvectors[(j, i)] / eig.eigenvalues[i].sqrt()
    });
    let x = &z * whiten.transpose(); // n × k, identity covariance

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let wx = &w * x.transpose(); // k × n
        let g = wx.map(f64::tanh);
        let g_prime_mean: Vec<f64> = (0..k)
            .map(|c| g.row(c).iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64)
            .collect();
        let mut next = &g * &x / n as f64;
        for c in 0..k {
            for j in 0..k {
                next[(c, j)] -= g_prime_mean[c] * w[(c, j)];
            }
        }
        let next = symmetric_decorrelation(&next);
        let lim = (&next * w.transpose())
            .diagonal()
            .iter()
            .map(|v| (v.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if lim < opts.tol {
            converged = true;
            break;
        }
    }

    // d × k
    let basis_m = whiten.transpose() * w.transpose();
    let sources = &x * w.transpose();
    let gaussian_like = (0..k)
        .filter(|&c| {
            let g: Vec<f64> = sources.column(c).iter().map(|s| s.cosh().ln()).collect();
            let mu = g.iter().sum::<f64>() / n as f64;
            let var = g.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
            (mu - GAUSSIAN_LOGCOSH).powi(2) < 9.0 * var / n as f64
        })
        .count();

    let mut basis = vec![0.0; d * k];
    for j in 0..d {
        for c in 0..k {
            basis[j * k + c] = basis_m[(j, c)];
        }
    }
    Ok(Projection {
        kind: ProjectionKind::Ica,
        k,
        mean,
        scale,
        basis,
        singular_values: None,
        seed: Some(opts.seed),
        converged: Some(converged),
        iterations: Some(iterations),
        weakly_identified: Some(gaussian_like >= 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::project_matrix;
    use rand::Rng;

    fn mixed_uniform(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let s1: f64 = rng.random_range(-1.0..1.0);
                let s2: f64 = rng.random_range(-1.0..1.0);
                vec![s1 + 0.5 * s2, 0.3 * s1 + s2, s1 - s2 + 0.1]
            })
            .collect();
        FeatureMatrix::unnamed(&rows)
    }

    #[test]
    fn whitened_sources_have_unit_variance() {
        let m = mixed_uniform(2000, 1);
        let p = fit_ica(&m, 2, IcaOptions::default()).unwrap();
        let s = project_matrix(&p, &m).unwrap();
        for c in 0..2 {
            let mu = s.column(c).sum::<f64>() / 2000.0;
            let var = s.column(c).map(|v| (v - mu).powi(2)).sum::<f64>() / 2000.0;
            assert!((var - 1.0).abs() < 0.05, "{var}");
        }
    }

    #[test]
    fn same_seed_same_basis() {
        let m = mixed_uniform(500, 2);
        let a = fit_ica(&m, 2, IcaOptions { seed: 9, ..Default::default() }).unwrap();
        let b = fit_ica(&m, 2, IcaOptions { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(a.basis, b.basis);
    }

    #[test]
    fn rank_limits_components() {
        // third column is a linear combination of the other two
        let m = mixed_uniform(300, 3);
        assert!(matches!(
            fit_ica(&m, 3, IcaOptions::default()),
            Err(TransformError::TooManyComponents { available: 2, .. })
        ));
    }

    #[test]
    fn gaussian_input_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![a + b, a - 0.5 * b]
            })
            .collect();
        let p = fit_ica(&FeatureMatrix::unnamed(&rows), 2, IcaOptions::default()).unwrap();
        assert!(!p.converged.unwrap() || p.weakly_identified.unwrap());
    }
}
