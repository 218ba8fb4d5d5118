use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpscope_core::transforms::{
    dct_component, dct_ii, fit_ica, fit_svd, project, project_matrix, thin_svd, AugmentConfig, Augmenter, IcaOptions,
    Scaling, TransformError,
};
use rdpscope_core::FeatureMatrix;

fn naive_dct(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let c = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    c * x
        .iter()
        .enumerate()
        .map(|(i, v)| v * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
        .sum::<f64>()
}

fn random(seed: u64, n: usize, d: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    FeatureMatrix::unnamed(&rows)
}

proptest! {
    #[test]
    fn dct_matches_definition(x in prop::collection::vec(-1e3f64..1e3, 1..64), k in any::<prop::sample::Index>()) {
        let k = k.index(x.len());
        let got = dct_component(&x, k).unwrap();
        let want = naive_dct(&x, k);
        let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((got - want).abs() <= 1e-12 * scale);
    }

    #[test]
    fn dct_preserves_energy(x in prop::collection::vec(-1e3f64..1e3, 1..64)) {
        let e_in: f64 = x.iter().map(|v| v * v).sum();
        let e_out: f64 = dct_ii(&x).iter().map(|v| v * v).sum();
        prop_assert!((e_in - e_out).abs() <= 1e-9 * e_in.max(1e-300));
    }

    #[test]
    fn truncation_error_shrinks_with_rank(seed in any::<u64>()) {
        let a = random(seed, 30, 15).to_dmatrix();
        let svd = thin_svd(&a);
        let mut prev = f64::INFINITY;
        for k in 1..=5 {
            let u = svd.u.columns(0, k);
            let s = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&svd.singular_values[..k]));
            let v = svd.v.columns(0, k);
            let err = (&a - u * s * v.transpose()).norm();
            prop_assert!(err <= prev + 1e-9);
            prev = err;
        }
    }
}

#[test]
fn full_rank_reconstruction() {
    for seed in 0..5 {
        let a = random(seed, 12, 7).to_dmatrix();
        let svd = thin_svd(&a);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.singular_values.clone()));
        let err = (&a - &svd.u * s * svd.v.transpose()).norm();
        assert!(err <= 1e-8 * a.norm());
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let m = random(10, 40, 6);
    let p = fit_svd(&m, 6, Scaling::PreStandardized).unwrap();
    let a = m.to_dmatrix();
    let mut eig: Vec<f64> = (a.transpose() * &a).symmetric_eigen().eigenvalues.iter().map(|l| l.sqrt()).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    for (s, e) in p.singular_values.unwrap().iter().zip(&eig) {
        assert!((s - e).abs() <= 1e-9 * eig[0]);
    }
}

#[test]
fn svd_basis_is_orthonormal_after_rescaling() {
    let m = random(11, 50, 8);
    let p = fit_svd(&m, 5, Scaling::Standardize).unwrap();
    let s = p.singular_values.clone().unwrap();
    let v = |j: usize, c: usize| p.basis_at(j, c) * s[c];
    for a in 0..5 {
        for b in 0..5 {
            let dot: f64 = (0..8).map(|j| v(j, a) * v(j, b)).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-8);
        }
    }
}

#[test]
fn training_projection_has_orthonormal_columns() {
    let m = random(12, 60, 10);
    let p = fit_svd(&m, 4, Scaling::Standardize).unwrap();
    let u = project_matrix(&p, &m).unwrap().to_dmatrix();
    let gram = u.transpose() * &u;
    assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-8);
}

#[test]
fn ica_unmixes_independent_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 4000;
    let sources: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let rows: Vec<Vec<f64>> = sources
        .iter()
        .map(|s| vec![2.0 * s[0] + 1.0 * s[1], 1.0 * s[0] - 3.0 * s[1]])
        .collect();
    let m = FeatureMatrix::unnamed(&rows);
    let p = fit_ica(&m, 2, IcaOptions::default()).unwrap();
    assert_eq!(p.converged, Some(true));
    let out: Vec<Vec<f64>> = rows.iter().map(|r| project(&p, r).unwrap()).collect();
    let corr = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| {
        let (ma, mb) = ((0..n).map(a).sum::<f64>() / n as f64, (0..n).map(b).sum::<f64>() / n as f64);
        let cov: f64 = (0..n).map(|i| (a(i) - ma) * (b(i) - mb)).sum();
        let va: f64 = (0..n).map(|i| (a(i) - ma).powi(2)).sum();
        let vb: f64 = (0..n).map(|i| (b(i) - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    #[allow(clippy::needless_range_loop)]
    for c in 0..2 {
        let best = (0..2)
            .map(|s| corr(&|i| out[i][c], &|i| sources[i][s]).abs())
            .fold(0.0, f64::max);
        assert!(best > 0.95, "component {c}: {best}");
    }
    for c in 0..2 {
        let mean = out.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = out.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.05);
    }
}

#[test]
fn augmenter_uses_training_statistics_only() {
    let train = random(14, 40, 6);
    let test = random(15, 10, 6);
    let aug = Augmenter::fit(&train, AugmentConfig { components: 3, ..AugmentConfig::default() }).unwrap();
    let before = aug.clone();
    let out = aug.augment(&test).unwrap();
    assert_eq!(aug, before);
    assert_eq!(out.n_cols(), 6 + 1 + 2 * 3);
    assert_eq!(&out.names()[6..], aug.output_names().as_slice());
    let refit = Augmenter::fit(&test, AugmentConfig { components: 3, ..AugmentConfig::default() }).unwrap();
    assert_ne!(refit.svd.mean, aug.svd.mean);
}

#[test]
fn projection_errors() {
    let m = random(16, 10, 4);
    assert!(matches!(fit_svd(&m, 5, Scaling::Standardize), Err(TransformError::TooManyComponents { .. })));
    let p = fit_svd(&m, 2, Scaling::Standardize).unwrap();
    assert_eq!(
        project(&p, &[1.0, 2.0]).unwrap_err(),
        TransformError::ArityMismatch { expected: 4, found: 2 }
    );
    assert_eq!(
        dct_component(&[1.0, 2.0], 2).unwrap_err(),
        TransformError::IndexOutOfRange { index: 2, len: 2 }
    );
}

#[test]
fn projection_json_round_trip() {
    let m = random(17, 30, 5);
    let p = fit_ica(&m, 3, IcaOptions { seed: 4, ..IcaOptions::default() }).unwrap();
    let back = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(p, back);
}
