use nalgebra::DMatrix;

use super::{check_fit_input, standardization, Projection, ProjectionKind, Scaling, TransformError};
use crate::matrix::FeatureMatrix;

/// Thin SVD with singular values sorted non-increasing: `a = u · diag(s) · vᵀ`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    ThinSvd { u, singular_values, v }
}

/// Rank-`k` truncated SVD of the (optionally standardized) matrix. The basis
/// is `V Σ⁻¹`, so projecting a training row yields its row of `U`;
/// directions with negligible singular value map to 0.
pub fn fit_svd(m: &FeatureMatrix, k: usize, scaling: Scaling) -> Result<Projection, TransformError> {
    check_fit_input(m)?;
    let available = m.n_rows().min(m.n_cols());
    if k == 0 || k > available {
        return Err(TransformError::TooManyComponents { requested: k, available });
    }
    let (mean, scale) = match scaling {
        Scaling::Standardize => standardization(m),
        Scaling::PreStandardized => (vec![0.0; m.n_cols()], vec![1.0; m.n_cols()]),
    };
    let z = DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| (m.get(i, j) - mean[j]) / scale[j]);
    let svd = thin_svd(&z);
    let s_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let tol = s_max * f64::EPSILON * m.n_rows().max(m.n_cols()) as f64;

    let d = m.n_cols();
    let mut basis = vec![0.0; d * k];
    for c in 0..k {
        let s = svd.singular_values[c];
        if s <= tol {
            continue;
        }
        for j in 0..d {
            basis[j * k + c] = svd.v[(j, c)] / s;
        }
    }
    Ok(Projection {
        kind: ProjectionKind::Svd,
        k,
        mean,
        scale,
        basis,
        singular_values: Some(svd.singular_values[..k].to_vec()),
        seed: None,
        converged: None,
        iterations: None,
        weakly_identified: None,
    })
}
