//! Shapley attribution and per-class attribute selection.
//!
//! Attributions are interventional: an attribute that is "absent" takes its
//! value from a background row. Two estimators are provided, a Monte-Carlo
//! permutation sampler and exact subset enumeration for small schemas.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::Activity;
use crate::learners::{Scorer, TrainedModel};
use crate::matrix::FeatureMatrix;

pub const MAX_EXACT_ATTRIBUTES: usize = 8;
pub const DEFAULT_MAX_BACKGROUND: usize = 256;
pub const DEFAULT_SELECT_MASS: f64 = 0.90;
pub const DEFAULT_SELECT_CAP: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("schema mismatch: model expects {expected:?}, data has {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("exact enumeration supports at most {MAX_EXACT_ATTRIBUTES} attributes, got {0}")]
    TooManyAttributes(usize),
    #[error("samples_per_row must be >= 1")]
    ZeroSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapleyMode {
    MonteCarlo { samples_per_row: usize },
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    pub seed: u64,
    pub max_background: usize,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            mode: ShapleyMode::MonteCarlo { samples_per_row: 64 },
            seed: 0,
            max_background: DEFAULT_MAX_BACKGROUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAttribution {
    pub name: String,
    pub mean_abs: f64,
    /// One signed contribution per target row.
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub class: Activity,
    pub per_attribute: Vec<AttributeAttribution>,
    /// Names by mean |contribution| descending; ties keep schema order.
    pub ranking: Vec<String>,
}

impl AttributionReport {
    pub fn from_contributions(class: Activity, names: &[String], per_row: &[Vec<f64>]) -> Self {
        let per_attribute: Vec<AttributeAttribution> = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let contributions: Vec<f64> = per_row.iter().map(|r| r[j]).collect();
                let mean_abs = if contributions.is_empty() {
                    0.0
                } else {
                    contributions.iter().map(|c| c.abs()).sum::<f64>() / contributions.len() as f64
                };
                AttributeAttribution {
                    name: name.clone(),
                    mean_abs,
                    contributions,
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| per_attribute[b].mean_abs.total_cmp(&per_attribute[a].mean_abs));
        let ranking = order.into_iter().map(|j| names[j].clone()).collect();
        AttributionReport {
            class,
            per_attribute,
            ranking,
        }
    }

    pub fn mean_abs(&self, name: &str) -> Option<f64> {
        self.per_attribute.iter().find(|a| a.name == name).map(|a| a.mean_abs)
    }

    /// `attribute,mean_abs_contribution,rank` with 1-based ranks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,mean_abs_contribution,rank\n");
        for (rank, name) in self.ranking.iter().enumerate() {
            let v = self.mean_abs(name).unwrap_or(0.0);
            let _ = writeln!(out, "{name},{v:e},{}", rank + 1);
        }
        out
    }
}

/// Seeded subsample of at most `max` rows, kept in original order.
pub fn subsample_background(background: &FeatureMatrix, max: usize, seed: u64) -> FeatureMatrix {
    if background.n_rows() <= max {
        return background.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, background.n_rows(), max).into_vec();
    idx.sort_unstable();
    background.select_rows(&idx)
}

/// Per-target-row contributions, shape targets × attributes.
pub fn shapley_values<S: Scorer + ?Sized>(
    scorer: &S,
    background: &FeatureMatrix,
    targets: &FeatureMatrix,
    config: &ShapleyConfig,
) -> Result<Vec<Vec<f64>>, SelectionError> {
    if background.names() != targets.names() {
        return Err(SelectionError::SchemaMismatch {
            expected: background.names().to_vec(),
            found: targets.names().to_vec(),
        });
    }
    if background.n_rows() == 0 {
        return Err(SelectionError::EmptyBackground);
    }
    let bg = subsample_background(background, config.max_background.max(1), config.seed);
    let d = targets.n_cols();
    match config.mode {
        ShapleyMode::Exact => {
            if d > MAX_EXACT_ATTRIBUTES {
                return Err(SelectionError::TooManyAttributes(d));
            }
            Ok((0..targets.n_rows())
                .into_par_iter()
                .map(|i| exact_row(scorer, &bg, targets.row(i)))
                .collect())
        }
        ShapleyMode::MonteCarlo { samples_per_row } => {
            if samples_per_row == 0 {
                return Err(SelectionError::ZeroSamples);
            }
            Ok((0..targets.n_rows())
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(i as u64);
                    sampled_row(scorer, &bg, targets.row(i), samples_per_row, &mut rng)
                })
                .collect())
        }
    }
}

fn sampled_row<S: Scorer + ?Sized>(
    scorer: &S,
    bg: &FeatureMatrix,
    x: &[f64],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = x.len();
    let mut phi = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut z = vec![0.0; d];
    for _ in 0..samples {
        perm.shuffle(rng);
        let b = rng.random_range(0..bg.n_rows());
        z.copy_from_slice(bg.row(b));
        let mut prev = scorer.score(&z);
        for &j in &perm {
            z[j] = x[j];
            let cur = scorer.score(&z);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= samples as f64);
    phi
}

fn exact_row<S: Scorer + ?Sized>(scorer: &S, bg: &FeatureMatrix, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let subsets = 1usize << d;
    let mut value = vec![0.0; subsets];
    let mut z = vec![0.0; d];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in bg.rows() {
            for j in 0..d {
                z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
            }
            acc += scorer.score(&z);
        }
        *v = acc / bg.n_rows() as f64;
    }
    // weight(|S|) = |S|! (d - |S| - 1)! / d!
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let weight: Vec<f64> = (0..d).map(|s| fact(s) * fact(d - s - 1) / fact(d)).collect();
    let mut phi = vec![0.0; d];
    for mask in 0..subsets {
        let size = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *p += weight[size] * (value[mask | 1 << j] - value[mask]);
            }
        }
    }
    phi
}

/// Attributes `model` on `targets` and ranks its schema for `class`.
pub fn shapley_rank(
    model: &TrainedModel,
    class: Activity,
    background: &FeatureMatrix,
    targets: &FeatureMatrix,
    config: &ShapleyConfig,
) -> Result<AttributionReport, SelectionError> {
    for m in [background, targets] {
        if m.names() != model.schema.as_slice() {
            return Err(SelectionError::SchemaMismatch {
                expected: model.schema.clone(),
                found: m.names().to_vec(),
            });
        }
    }
    let per_row = shapley_values(model, background, targets, config)?;
    Ok(AttributionReport::from_contributions(class, &model.schema, &per_row))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub attributes: Vec<String>,
    /// Set when every contribution is zero and nothing could be chosen.
    pub degenerate: bool,
}

/// Shortest ranking prefix carrying at least `mass` of the total mean
/// |contribution|, truncated to `cap`.
pub fn select_attributes(report: &AttributionReport, mass: f64, cap: usize) -> Selection {
    let mass = mass.clamp(f64::MIN_POSITIVE, 1.0);
    let total: f64 = report.per_attribute.iter().map(|a| a.mean_abs).sum();
    if total <= 0.0 || !total.is_finite() {
        return Selection {
            attributes: Vec::new(),
            degenerate: true,
        };
    }
    let mut attributes = Vec::new();
    let mut acc = 0.0;
    for name in report.ranking.iter().take(cap) {
        attributes.push(name.clone());
        acc += report.mean_abs(name).unwrap_or(0.0);
        if acc / total >= mass - 1e-12 {
            break;
        }
    }
    Selection {
        attributes,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn report(values: &[f64]) -> AttributionReport {
        let per_row = vec![values.to_vec()];
        AttributionReport::from_contributions(Activity::Download, &names(values.len()), &per_row)
    }

    #[test]
    fn select_by_mass() {
        let s = select_attributes(&report(&[0.5, 0.4, 0.1]), 0.9, 20);
        assert_eq!(s.attributes, vec!["x0", "x1"]);
        assert!(!s.degenerate);
    }

    #[test]
    fn select_single() {
        assert_eq!(select_attributes(&report(&[0.3]), 0.9, 20).attributes, vec!["x0"]);
    }

    #[test]
    fn select_all_zero_is_flagged() {
        let s = select_attributes(&report(&[0.0, 0.0]), 0.9, 20);
        assert!(s.attributes.is_empty());
        assert!(s.degenerate);
    }

    #[test]
    fn select_respects_cap() {
        let s = select_attributes(&report(&[1.0; 30]), 0.9, 20);
        assert_eq!(s.attributes.len(), 20);
    }

    #[test]
    fn ranking_uses_magnitude_and_is_stable() {
        let r = report(&[0.1, -0.7, 0.1, 0.3]);
        assert_eq!(r.ranking, vec!["x1", "x3", "x0", "x2"]);
    }

    #[test]
    fn additive_exact() {
        let bg = FeatureMatrix::new(names(2), &[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        let tg = FeatureMatrix::new(names(2), &[vec![5.0, -1.0]]).unwrap();
        let f = |r: &[f64]| r[0] + r[1];
        let cfg = ShapleyConfig {
            mode: ShapleyMode::Exact,
            ..Default::default()
        };
        let phi = shapley_values(&f, &bg, &tg, &cfg).unwrap();
        assert!((phi[0][0] - (5.0 - 2.0)).abs() < 1e-9);
        assert!((phi[0][1] - (-1.0 - 4.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_background_rejected() {
        let bg = FeatureMatrix::new(names(2), &[]).unwrap();
        let tg = FeatureMatrix::new(names(2), &[vec![0.0, 0.0]]).unwrap();
        let f = |_: &[f64]| 0.0;
        assert_eq!(
            shapley_values(&f, &bg, &tg, &ShapleyConfig::default()),
            Err(SelectionError::EmptyBackground)
        );
    }

    #[test]
    fn csv_layout() {
        let csv = report(&[0.25, 0.5]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "attribute,mean_abs_contribution,rank");
        assert!(lines[1].starts_with("x1,") && lines[1].ends_with(",1"));
        assert!(lines[2].starts_with("x0,") && lines[2].ends_with(",2"));
    }
}
