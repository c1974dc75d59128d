use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_labels, check_row, FeatureMatrix, Standardizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub standardizer: Standardizer,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn train_knn(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &KnnParams) -> Result<KnnModel> {
    check_labels(x, y, n_classes)?;
    if params.k == 0 || params.k > x.nrows() {
        return Err(MlError::InvalidParams(format!("k = {} outside 1..={}", params.k, x.nrows())));
    }
    let standardizer = Standardizer::fit(x);
    Ok(KnnModel {
        k: params.k,
        n_classes,
        rows: standardizer.transform_matrix(x),
        standardizer,
        labels: y.to_vec(),
    })
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Vote fractions among the k nearest (Euclidean, standardized). The
    /// winner is placed by [`KnnModel::predict`]; ties there go to the class
    /// with the smaller mean neighbor distance, then the lower index.
    pub fn neighbors(&self, row: &[f64]) -> Result<Vec<(f64, usize)>> {
        check_row(self.n_features(), row)?;
        let z = self.standardizer.transform(row);
        let mut d: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_unstable_by(cmp);
        Ok(d.into_iter().map(|(dist, i)| (dist.sqrt(), i)).collect())
    }

    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut votes = vec![0.0; self.n_classes];
        for (_, i) in self.neighbors(row)? {
            votes[self.labels[i]] += 1.0 / self.k as f64;
        }
        Ok(votes)
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        let near = self.neighbors(row)?;
        let mut votes = vec![0usize; self.n_classes];
        let mut dist = vec![0.0; self.n_classes];
        for &(d, i) in &near {
            votes[self.labels[i]] += 1;
            dist[self.labels[i]] += d;
        }
        let top = *votes.iter().max().expect("at least one class");
        let best = (0..self.n_classes)
            .filter(|&c| votes[c] == top)
            .min_by(|&a, &b| (dist[a] / top as f64).total_cmp(&(dist[b] / top as f64)).then(a.cmp(&b)))
            .expect("a class has the top vote");
        Ok(best)
    }
}
