use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("row counts differ: {0} vs {1}")]
    RowMismatch(usize, usize),
}

/// Windows × attributes, row-major, with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(MatrixError::RaggedRow {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            names,
            n_rows: rows.len(),
            data,
        })
    }

    pub fn from_flat(names: Vec<String>, n_rows: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * names.len(), "flat buffer does not match shape");
        FeatureMatrix { names, n_rows, data }
    }

    /// Columns named `x0, x1, ...`.
    pub fn unnamed(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::new((0..cols).map(|i| format!("x{i}")).collect(), rows).expect("rows must share a length")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            n_rows: idx.len(),
            data,
        }
    }

    pub fn column_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>, MatrixError> {
        names
            .iter()
            .map(|n| self.column_index(n.as_ref()).ok_or_else(|| MatrixError::UnknownAttribute(n.as_ref().to_string())))
            .collect()
    }

    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix, MatrixError> {
        let idx = self.column_indices(names)?;
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for i in 0..self.n_rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(FeatureMatrix {
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
            n_rows: self.n_rows,
            data,
        })
    }

    /// Appends the columns of `other` to the right.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, MatrixError> {
        if self.n_rows != other.n_rows {
            return Err(MatrixError::RowMismatch(self.n_rows, other.n_rows));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for i in 0..self.n_rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(FeatureMatrix {
            names,
            n_rows: self.n_rows,
            data,
        })
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols(), &self.data)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_stack() {
        let m = FeatureMatrix::new(vec!["a".into(), "b".into()], &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = m.select_columns(&["b"]).unwrap();
        assert_eq!(b.row(1), &[4.0]);
        let s = m.hstack(&b).unwrap();
        assert_eq!(s.row(0), &[1.0, 2.0, 2.0]);
        assert_eq!(m.select_rows(&[1]).row(0), &[3.0, 4.0]);
        assert!(matches!(m.select_columns(&["zz"]), Err(MatrixError::UnknownAttribute(_))));
        assert_eq!(m.to_dmatrix()[(1, 0)], 3.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(FeatureMatrix::new(vec!["a".into()], &[vec![1.0, 2.0]]).is_err());
    }
}
