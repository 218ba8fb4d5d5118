use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, train, Confusion, LearnError, Metrics, ModelSpec};
use crate::matrix::FeatureMatrix;

/// Assigns each row a fold in `0..folds` so every fold holds ⌊n_c/folds⌋ or
/// ⌈n_c/folds⌉ members of each class.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>, LearnError> {
    stratified_folds_by_key(labels, folds, seed)
}

/// Stratifies on an arbitrary ordered key, e.g. a label combination.
pub fn stratified_folds_by_key<K: Ord + Clone>(keys: &[K], folds: usize, seed: u64) -> Result<Vec<usize>, LearnError> {
    if folds < 2 {
        return Err(LearnError::StratificationError(format!("folds must be >= 2, got {folds}")));
    }
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    if let Some(small) = groups.values().map(Vec::len).min() {
        if small < folds {
            return Err(LearnError::StratificationError(format!(
                "a class has {small} members, fewer than {folds} folds"
            )));
        }
    } else {
        return Err(LearnError::EmptyData(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; keys.len()];
    let mut offset = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for (j, &row) in members.iter().enumerate() {
            assignment[row] = (offset + j) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub spec: ModelSpec,
    pub folds: Vec<Metrics>,
    pub pooled: Metrics,
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds.
    pub std_accuracy: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

/// Stratified k-fold cross-validation of one model spec.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &FeatureMatrix,
    labels: &[bool],
    folds: usize,
    seed: u64,
) -> Result<CvReport, LearnError> {
    if data.n_rows() != labels.len() {
        return Err(LearnError::LabelMismatch {
            rows: data.n_rows(),
            labels: labels.len(),
        });
    }
    let assignment = stratified_folds(labels, folds, seed)?;
    let mut fold_metrics = Vec::with_capacity(folds);
    let mut pooled = Confusion::default();
    for f in 0..folds {
        let train_rows: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let test_rows: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let train_labels: Vec<bool> = train_rows.iter().map(|&i| labels[i]).collect();
        let model = train(spec, &data.select_rows(&train_rows), &train_labels)?;
        let conf = Confusion::from_pairs(test_rows.iter().map(|&i| (model.predict(data.row(i)), labels[i])));
        pooled += conf;
        fold_metrics.push(compute_metrics(conf)?);
    }
    let n = fold_metrics.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| fold_metrics.iter().map(f).sum::<f64>() / n;
    let mean_accuracy = mean(|m| m.accuracy);
    let std_accuracy =
        (fold_metrics.iter().map(|m| (m.accuracy - mean_accuracy).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(CvReport {
        spec: *spec,
        pooled: compute_metrics(pooled)?,
        mean_accuracy,
        std_accuracy,
        mean_precision: mean(|m| m.precision),
        mean_recall: mean(|m| m.recall),
        mean_f1: mean(|m| m.f1),
        folds: fold_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_fold_sizes() {
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let a = stratified_folds(&labels, 10, 1).unwrap();
        for f in 0..10 {
            assert_eq!(a.iter().filter(|&&x| x == f).count(), 10);
        }
    }

    #[test]
    fn class_ratio_preserved() {
        let labels: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let a = stratified_folds(&labels, 10, 7).unwrap();
        for f in 0..10 {
            let pos = (0..100).filter(|&i| a[i] == f && labels[i]).count();
            let neg = (0..100).filter(|&i| a[i] == f && !labels[i]).count();
            assert_eq!((pos, neg), (3, 7));
        }
    }

    #[test]
    fn too_few_members_rejected() {
        let labels = vec![true, true, false, false, false];
        assert!(matches!(
            stratified_folds(&labels, 3, 0),
            Err(LearnError::StratificationError(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let labels: Vec<bool> = (0..57).map(|i| i % 3 == 0).collect();
        assert_eq!(stratified_folds(&labels, 5, 9).unwrap(), stratified_folds(&labels, 5, 9).unwrap());
    }

    #[test]
    fn constant_feature_tree_scores_majority_rate() {
        // all-constant data gives a single-leaf tree predicting the majority
        let labels: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let rows: Vec<Vec<f64>> = vec![vec![1.0]; 100];
        let data = FeatureMatrix::new(vec!["x".into()], &rows).unwrap();
        let r = cross_validate(&ModelSpec::decision_tree(), &data, &labels, 10, 3).unwrap();
        assert!((r.mean_accuracy - 70.0).abs() < 1e-9);
        assert_eq!(r.std_accuracy, 0.0);
    }
}
