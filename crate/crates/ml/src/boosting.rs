use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_labels, check_row, FeatureMatrix};
use crate::tree::{evaluate_rows, grow_boosting_tree, presort, BoostingTreeParams, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Complexity penalty per leaf.
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Row fraction drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 3,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

/// Additive logistic model for one positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryBooster {
    pub init: f64,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreesModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// One booster for class 1 when binary, otherwise one per class.
    pub boosters: Vec<BinaryBooster>,
}

pub fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

/// Mean logistic loss of margins against 0/1 targets.
pub fn logistic_loss(margins: &[f64], targets: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(targets)
        .map(|(&m, &t)| {
            // log(1 + e^{−s·m}) computed stably
            let z = if t { -m } else { m };
            z.max(0.0) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    total / margins.len().max(1) as f64
}

/// Fits one binary booster; also returns the training loss after every stage.
pub fn train_binary_booster(
    x: &FeatureMatrix,
    targets: &[bool],
    params: &BoostParams,
    stream: u64,
) -> Result<(BinaryBooster, Vec<f64>)> {
    if !(params.learning_rate > 0.0) || params.lambda < 0.0 || params.gamma < 0.0 {
        return Err(MlError::InvalidParams("rate must be positive, λ and γ non-negative".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(MlError::InvalidParams("subsample must lie in (0, 1]".into()));
    }
    let n = x.nrows();
    let positives = targets.iter().filter(|&&t| t).count();
    // Prior log-odds, clipped so single-class heads stay finite.
    let p = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let init = (p / (1.0 - p)).ln();
    let mut margins = vec![init; n];
    let sorted = presort(x);
    let tree_params = BoostingTreeParams {
        max_depth: params.max_depth,
        lambda: params.lambda,
        gamma: params.gamma,
        min_child_weight: params.min_child_weight,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let mut in_bag = vec![true; n];
    let mut trees = Vec::with_capacity(params.trees);
    let mut losses = Vec::with_capacity(params.trees);
    let (mut grad, mut hess) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..params.trees {
        for i in 0..n {
            let s = sigmoid(margins[i]);
            grad[i] = s - f64::from(u8::from(targets[i]));
            hess[i] = s * (1.0 - s);
        }
        if params.subsample < 1.0 {
            for b in in_bag.iter_mut() {
                *b = rng.random_bool(params.subsample);
            }
        }
        let tree = grow_boosting_tree(x, &sorted, &grad, &hess, &in_bag, tree_params);
        for (m, w) in margins.iter_mut().zip(evaluate_rows(&tree, x)) {
            *m += params.learning_rate * w;
        }
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(MlError::Training("non-finite boosting margin".into()));
        }
        losses.push(logistic_loss(&margins, targets));
        trees.push(tree);
    }
    Ok((BinaryBooster { init, trees }, losses))
}

pub fn train_gradient_boosted_trees(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &BoostParams,
) -> Result<BoostedTreesModel> {
    check_labels(x, y, n_classes)?;
    let heads: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let boosters = heads
        .par_iter()
        .map(|&c| {
            let targets: Vec<bool> = y.iter().map(|&l| l == c).collect();
            train_binary_booster(x, &targets, params, c as u64).map(|(b, _)| b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoostedTreesModel {
        n_classes,
        n_features: x.ncols(),
        learning_rate: params.learning_rate,
        boosters,
    })
}

impl BinaryBooster {
    pub fn margin(&self, row: &[f64], rate: f64) -> f64 {
        self.init + rate * self.trees.iter().map(|t| t.leaf_value(row)[0]).sum::<f64>()
    }
}

impl BoostedTreesModel {
    /// Class probabilities; one-vs-rest heads are normalized to sum to one.
    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_row(self.n_features, row)?;
        let probs: Vec<f64> = self
            .boosters
            .iter()
            .map(|b| sigmoid(b.margin(row, self.learning_rate)))
            .collect();
        if self.n_classes == 2 {
            return Ok(vec![1.0 - probs[0], probs[0]]);
        }
        let total: f64 = probs.iter().sum();
        Ok(probs.into_iter().map(|p| p / total).collect())
    }
}
