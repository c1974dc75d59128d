use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

/// Dense sample-by-feature matrix stored column-major, which is the access
/// pattern of split search.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = vec![0.0; rows.len() * cols];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(MlError::DimensionMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MlError::InvalidParams(format!("non-finite feature at row {i}, column {j}")));
                }
                data[j * rows.len() + i] = v;
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for j in 0..self.cols {
            let col = self.column(j);
            data.extend(idx.iter().map(|&i| col[i]));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for &j in idx {
            if j >= self.cols {
                return Err(MlError::DimensionMismatch {
                    expected: self.cols,
                    actual: j + 1,
                });
            }
            data.extend_from_slice(self.column(j));
        }
        Ok(Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        })
    }
}

/// Per-feature z-scoring with statistics from the training split only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.nrows().max(1) as f64;
        let (mut mean, mut scale) = (Vec::with_capacity(x.ncols()), Vec::with_capacity(x.ncols()));
        for j in 0..x.ncols() {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform_matrix(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        (0..x.nrows()).map(|i| self.transform(&x.row(i))).collect()
    }
}

/// Checks that labels are class indices below `n_classes`.
pub(crate) fn check_labels(x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(MlError::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(MlError::InvalidParams(format!("label {bad} outside {n_classes} classes")));
    }
    let first = y.first().copied();
    if y.iter().all(|&c| Some(c) == first) {
        return Err(MlError::DegenerateModel);
    }
    Ok(())
}

pub(crate) fn check_row(expected: usize, row: &[f64]) -> Result<()> {
    if row.len() == expected {
        Ok(())
    } else {
        Err(MlError::DimensionMismatch {
            expected,
            actual: row.len(),
        })
    }
}
