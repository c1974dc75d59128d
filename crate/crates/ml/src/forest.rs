use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_labels, check_row, FeatureMatrix};
use crate::tree::{ClassificationGrower, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Defaults to ⌈√n_features⌉.
    pub features_per_split: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 12,
            features_per_split: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Row indices of the bootstrap resample of tree `tree`.
pub fn bootstrap_rows(seed: u64, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = tree_rng(seed, tree);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn train_random_forest(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
) -> Result<RandomForestModel> {
    check_labels(x, y, n_classes)?;
    if params.trees == 0 {
        return Err(MlError::InvalidParams("forest needs at least one tree".into()));
    }
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (x.ncols() as f64).sqrt().ceil() as usize)
        .clamp(1, x.ncols());
    let grower = ClassificationGrower {
        x,
        y,
        n_classes,
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split.max(2),
        features_per_split,
    };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let rows: Vec<usize> = (0..x.nrows()).map(|_| rng.random_range(0..x.nrows())).collect();
            grower.grow(rows, &mut rng)
        })
        .collect();
    Ok(RandomForestModel {
        n_classes,
        n_features: x.ncols(),
        trees,
    })
}

impl RandomForestModel {
    /// Vote fractions: each tree votes for the arg-max of its leaf.
    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_row(self.n_features, row)?;
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[argmax(tree.leaf_value(row))] += 1.0;
        }
        let n = self.trees.len() as f64;
        Ok(votes.into_iter().map(|v| v / n).collect())
    }
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_forest_votes_one() {
        let x = FeatureMatrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let model = train_random_forest(&x, &y, 2, &ForestParams { trees: 15, ..Default::default() }).unwrap();
        assert_eq!(model.predict_scores(&[-5.0]).unwrap(), vec![1.0, 0.0]);
        assert!(model.predict_scores(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            train_random_forest(&x, &[1, 1], 2, &ForestParams::default()),
            Err(MlError::DegenerateModel)
        ));
    }
}
