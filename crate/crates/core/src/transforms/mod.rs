//! Derived attributes: a per-row DCT coefficient and fitted SVD / ICA
//! projections of the standardized attribute matrix.

mod dct;
mod ica;
mod svd;

pub use dct::{dct_component, dct_ii};
pub use ica::{fit_ica, IcaOptions};
pub use svd::{fit_svd, thin_svd, ThinSvd};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowstats::{ica_name, svd_name};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("DCT index {index} out of range for row of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("matrix is degenerate: {0}")]
    DegenerateMatrix(String),
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("{requested} components requested, at most {available} available")]
    TooManyComponents { requested: usize, available: usize },
    #[error("row has {found} values, projection expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    Svd,
    Ica,
}

/// A fitted linear map from a raw attribute row to `k` coordinates:
/// `basisᵀ · ((row − mean) / scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// attributes × k, row-major.
    pub basis: Vec<f64>,
    /// SVD only, non-increasing.
    pub singular_values: Option<Vec<f64>>,
    /// ICA only.
    pub seed: Option<u64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    /// ICA only: at least two components look Gaussian, so their rotation is
    /// not identifiable.
    pub weakly_identified: Option<bool>,
}

impl Projection {
    pub fn n_attributes(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, row: &[f64]) -> Result<Vec<f64>, TransformError> {
        if row.len() != self.mean.len() {
            return Err(TransformError::ArityMismatch {
                expected: self.mean.len(),
                found: row.len(),
            });
        }
        Ok(row.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect())
    }

    pub fn basis_at(&self, attr: usize, comp: usize) -> f64 {
        self.basis[attr * self.k + comp]
    }

    pub fn component_names(&self) -> Vec<String> {
        match self.kind {
            ProjectionKind::Svd => (0..self.k).map(svd_name).collect(),
            ProjectionKind::Ica => (0..self.k).map(ica_name).collect(),
        }
    }
}

/// Projects one raw row.
pub fn project(p: &Projection, row: &[f64]) -> Result<Vec<f64>, TransformError> {
    let z = p.standardize(row)?;
    let mut out = vec![0.0; p.k];
    for (j, zj) in z.iter().enumerate() {
        if *zj == 0.0 {
            continue;
        }
        let b = &p.basis[j * p.k..(j + 1) * p.k];
        for (o, bj) in out.iter_mut().zip(b) {
            *o += zj * bj;
        }
    }
    Ok(out)
}

pub fn project_matrix(p: &Projection, m: &FeatureMatrix) -> Result<FeatureMatrix, TransformError> {
    let rows: Vec<Vec<f64>> = m.rows().map(|r| project(p, r)).collect::<Result<_, _>>()?;
    Ok(FeatureMatrix::new(p.component_names(), &rows).expect("projection rows have k columns"))
}

/// Per-attribute mean and population standard deviation; constant
/// attributes get scale 1.
pub(crate) fn standardization(m: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.n_rows() as f64;
    let mut mean = vec![0.0; m.n_cols()];
    let mut scale = vec![1.0; m.n_cols()];
    for j in 0..m.n_cols() {
        let mu = m.column(j).sum::<f64>() / n;
        let var = m.column(j).map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        mean[j] = mu;
        let sd = var.sqrt();
        if sd > 1e-12 * mu.abs().max(1.0) {
            scale[j] = sd;
        }
    }
    (mean, scale)
}

pub(crate) fn check_fit_input(m: &FeatureMatrix) -> Result<(), TransformError> {
    if m.n_rows() < 2 || m.n_cols() == 0 {
        return Err(TransformError::DegenerateMatrix(format!("{} rows × {} columns", m.n_rows(), m.n_cols())));
    }
    if m.rows().flatten().any(|x| !x.is_finite()) {
        return Err(TransformError::NonFinite);
    }
    let first = m.row(0);
    if m.rows().all(|r| r == first) {
        return Err(TransformError::DegenerateMatrix("fewer than 2 distinct rows".into()));
    }
    Ok(())
}

/// Whether to z-score attributes before decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    Standardize,
    /// Input is used as-is (mean 0, scale 1).
    PreStandardized,
}

/// Configuration for the derived attribute block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub dct_index: usize,
    pub components: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            dct_index: 1,
            components: crate::flowstats::DEFAULT_COMPONENTS,
            seed: 0,
        }
    }
}

/// SVD and ICA projections fitted on training rows, applied to any rows of
/// the same base schema. Components beyond the fitted rank are emitted as 0
/// so the output schema is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmenter {
    pub config: AugmentConfig,
    pub base_names: Vec<String>,
    pub svd: Projection,
    pub ica: Projection,
}

impl Augmenter {
    pub fn fit(train: &FeatureMatrix, config: AugmentConfig) -> Result<Self, TransformError> {
        check_fit_input(train)?;
        if config.dct_index >= train.n_cols() {
            return Err(TransformError::IndexOutOfRange {
                index: config.dct_index,
                len: train.n_cols(),
            });
        }
        let svd_k = config.components.min(train.n_rows()).min(train.n_cols());
        let svd = fit_svd(train, svd_k, Scaling::Standardize)?;
        let rank = svd
            .singular_values
            .as_ref()
            .map_or(0, |s| s.iter().filter(|v| **v > s[0] * 1e-9).count());
        let ica_k = config.components.min(rank).max(1);
        let ica = fit_ica(
            train,
            ica_k,
            IcaOptions {
                seed: config.seed,
                ..IcaOptions::default()
            },
        )?;
        Ok(Augmenter {
            config,
            base_names: train.names().to_vec(),
            svd,
            ica,
        })
    }

    pub fn output_names(&self) -> Vec<String> {
        crate::flowstats::derived_names(self.config.components)
    }

    /// Derived attributes for one base row: `dct_col`, `svd*`, `ica*`.
    pub fn derive(&self, row: &[f64]) -> Result<Vec<f64>, TransformError> {
        let k = self.config.components;
        let z = self.svd.standardize(row)?;
        let mut out = Vec::with_capacity(1 + 2 * k);
        out.push(dct_component(&z, self.config.dct_index)?);
        let mut s = project(&self.svd, row)?;
        s.resize(k, 0.0);
        out.extend(s);
        let mut i = project(&self.ica, row)?;
        i.resize(k, 0.0);
        out.extend(i);
        Ok(out)
    }

    /// Base columns followed by the derived block.
    pub fn augment(&self, base: &FeatureMatrix) -> Result<FeatureMatrix, TransformError> {
        if base.names() != self.base_names.as_slice() {
            return Err(TransformError::ArityMismatch {
                expected: self.base_names.len(),
                found: base.n_cols(),
            });
        }
        let derived: Vec<Vec<f64>> = base.rows().map(|r| self.derive(r)).collect::<Result<_, _>>()?;
        let derived = FeatureMatrix::new(self.output_names(), &derived).expect("derived rows share a width");
        Ok(base.hstack(&derived).expect("same row count"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![t, (t * 0.7).sin() * 10.0, 5.0, t * t / 30.0, (t * 1.3).cos()]
            })
            .collect();
        FeatureMatrix::unnamed(&rows)
    }

    #[test]
    fn mean_row_projects_to_zero() {
        let m = toy();
        let p = fit_svd(&m, 3, Scaling::Standardize).unwrap();
        let out = project(&p, &p.mean.clone()).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn arity_mismatch() {
        let p = fit_svd(&toy(), 2, Scaling::Standardize).unwrap();
        assert_eq!(
            project(&p, &[1.0, 2.0]),
            Err(TransformError::ArityMismatch { expected: 5, found: 2 })
        );
    }

    #[test]
    fn augmenter_pads_to_fixed_width() {
        let m = toy();
        let aug = Augmenter::fit(
            &m,
            AugmentConfig {
                dct_index: 1,
                components: 20,
                seed: 3,
            },
        )
        .unwrap();
        let out = aug.augment(&m).unwrap();
        assert_eq!(out.n_cols(), 5 + 41);
        assert_eq!(out.names()[5], "dct_col");
        // only four non-constant attributes, so svd4.. are padding
        let svd4 = out.column_index("svd4").unwrap();
        assert!(out.column(svd4).all(|v| v == 0.0));
        assert!(out.rows().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_attribute_gets_unit_scale() {
        let (mean, scale) = standardization(&toy());
        assert_eq!(mean[2], 5.0);
        assert_eq!(scale[2], 1.0);
    }
}
