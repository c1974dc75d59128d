//! Seeded random search with stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::BoostParams;
use crate::error::{MlError, Result};
use crate::forest::ForestParams;
use crate::knn::KnnParams;
use crate::linear::LogisticParams;
use crate::matrix::FeatureMatrix;
use crate::metrics::ConfusionCounts;
use crate::model::{Classifier, ModelKind, ModelParams};

pub const CV_FOLDS: usize = 3;

/// Draws one configuration from the search space of `kind`. Neighbor counts
/// are capped at `min_train_rows`, the smallest training fold.
pub fn sample_params<R: Rng>(kind: ModelKind, rng: &mut R, seed: u64, min_train_rows: usize) -> ModelParams {
    match kind {
        ModelKind::Rf => ModelParams::Rf(ForestParams {
            trees: rng.random_range(50..=300),
            max_depth: rng.random_range(4..=16),
            seed,
            ..Default::default()
        }),
        ModelKind::Gbt => ModelParams::Gbt(BoostParams {
            trees: rng.random_range(50..=300),
            max_depth: rng.random_range(2..=6),
            learning_rate: rng.random_range(0.05..=0.5),
            seed,
            ..Default::default()
        }),
        ModelKind::Lr => ModelParams::Lr(LogisticParams {
            l2: 10f64.powf(rng.random_range(-4.0..=0.0)),
            ..Default::default()
        }),
        ModelKind::Knn => ModelParams::Knn(KnnParams {
            k: (2 * rng.random_range(0..=12) + 1).min(min_train_rows.max(1)),
        }),
    }
}

/// Fold id of every sample; each class is dealt round-robin after a shuffle.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

/// Mean macro-F1 (percent) over stratified folds.
pub fn cross_validate(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ModelParams,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let fold = stratified_folds(y, folds, seed);
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let model = Classifier::train(&x.select_rows(&train), &y_train, n_classes, params)?;
        let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let pred = test.iter().map(|&i| model.predict(&x.row(i))).collect::<Result<Vec<_>>>()?;
        total += ConfusionCounts::from_predictions(&truth, &pred, n_classes).macro_f1();
    }
    Ok(total / folds as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: ModelParams,
    pub cv_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: ModelParams,
    pub cv_macro_f1: f64,
    pub trials: Vec<Trial>,
}

/// Evaluates `budget` sampled configurations; the best mean CV macro-F1
/// wins, ties going to fewer trees or fewer neighbors, then to the earlier draw.
pub fn tune_hyperparameters(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    kind: ModelKind,
    budget: usize,
    seed: u64,
) -> Result<TuneResult> {
    if budget == 0 {
        return Err(MlError::InvalidParams("tuning budget must be at least 1".into()));
    }
    let fold = stratified_folds(y, CV_FOLDS, seed);
    let min_train_rows = (0..CV_FOLDS)
        .map(|f| fold.iter().filter(|&&g| g != f).count())
        .min()
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    for _ in 0..budget {
        let params = sample_params(kind, &mut rng, seed, min_train_rows);
        let cv_macro_f1 = cross_validate(x, y, n_classes, &params, CV_FOLDS, seed)?;
        trials.push(Trial { params, cv_macro_f1 });
    }
    let best = trials
        .iter()
        .reduce(|a, b| {
            let better = b.cv_macro_f1 > a.cv_macro_f1
                || (b.cv_macro_f1 == a.cv_macro_f1 && b.params.complexity() < a.params.complexity());
            if better { b } else { a }
        })
        .expect("budget ≥ 1")
        .clone();
    Ok(TuneResult {
        best: best.params,
        cv_macro_f1: best.cv_macro_f1,
        trials,
    })
}
