use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{train_gradient_boosted_trees, BoostParams, BoostedTreesModel};
use crate::error::{MlError, Result};
use crate::forest::{argmax, train_random_forest, ForestParams, RandomForestModel};
use crate::knn::{train_knn, KnnModel, KnnParams};
use crate::linear::{train_logistic_regression, LogisticModel, LogisticParams};
use crate::matrix::{check_row, FeatureMatrix};
use crate::metrics::{indicator_macro_f1, ClassScores, ConfusionCounts, precision_recall_f1};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Gbt,
    Lr,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rf, ModelKind::Gbt, ModelKind::Lr, ModelKind::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Lr => "lr",
            ModelKind::Knn => "knn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn default_params(self) -> ModelParams {
        match self {
            ModelKind::Rf => ModelParams::Rf(ForestParams::default()),
            ModelKind::Gbt => ModelParams::Gbt(BoostParams::default()),
            ModelKind::Lr => ModelParams::Lr(LogisticParams::default()),
            ModelKind::Knn => ModelParams::Knn(KnnParams::default()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Rf(ForestParams),
    Gbt(BoostParams),
    Lr(LogisticParams),
    Knn(KnnParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Rf(_) => ModelKind::Rf,
            ModelParams::Gbt(_) => ModelKind::Gbt,
            ModelParams::Lr(_) => ModelKind::Lr,
            ModelParams::Knn(_) => ModelKind::Knn,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelParams::Rf(p) => p.seed = seed,
            ModelParams::Gbt(p) => p.seed = seed,
            ModelParams::Lr(_) | ModelParams::Knn(_) => {}
        }
        self
    }

    /// Tree count or neighbor count; used to break ties towards simpler models.
    pub fn complexity(&self) -> usize {
        match self {
            ModelParams::Rf(p) => p.trees,
            ModelParams::Gbt(p) => p.trees,
            ModelParams::Lr(_) => 0,
            ModelParams::Knn(p) => p.k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Classifier {
    Rf(RandomForestModel),
    Gbt(BoostedTreesModel),
    Lr(LogisticModel),
    Knn(KnnModel),
    /// Head whose training labels were all one class.
    Constant {
        n_classes: usize,
        n_features: usize,
        class: usize,
    },
}

impl Classifier {
    pub fn train(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &ModelParams) -> Result<Self> {
        Ok(match params {
            ModelParams::Rf(p) => Classifier::Rf(train_random_forest(x, y, n_classes, p)?),
            ModelParams::Gbt(p) => Classifier::Gbt(train_gradient_boosted_trees(x, y, n_classes, p)?),
            ModelParams::Lr(p) => Classifier::Lr(train_logistic_regression(x, y, n_classes, p)?),
            ModelParams::Knn(p) => Classifier::Knn(train_knn(x, y, n_classes, p)?),
        })
    }

    /// Like [`Classifier::train`] but single-class labels give a constant head.
    fn train_head(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &ModelParams) -> Result<Self> {
        match Self::train(x, y, n_classes, params) {
            Err(MlError::DegenerateModel) => Ok(Classifier::Constant {
                n_classes,
                n_features: x.ncols(),
                class: y.first().copied().unwrap_or(0),
            }),
            other => other,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Rf(m) => m.n_features,
            Classifier::Gbt(m) => m.n_features,
            Classifier::Lr(m) => m.n_features(),
            Classifier::Knn(m) => m.n_features(),
            Classifier::Constant { n_features, .. } => *n_features,
        }
    }

    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        match self {
            Classifier::Rf(m) => m.predict_scores(row),
            Classifier::Gbt(m) => m.predict_scores(row),
            Classifier::Lr(m) => m.predict_scores(row),
            Classifier::Knn(m) => m.predict_scores(row),
            Classifier::Constant {
                n_classes,
                n_features,
                class,
            } => {
                check_row(*n_features, row)?;
                let mut s = vec![0.0; *n_classes];
                s[*class] = 1.0;
                Ok(s)
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        match self {
            Classifier::Knn(m) => m.predict(row),
            _ => self.predict_scores(row).map(|s| argmax(&s)),
        }
    }
}

/// Training labels: one class per sample, or a target set per sample.
#[derive(Clone, Copy, Debug)]
pub enum Labels<'a> {
    Single(&'a [usize]),
    Multi(&'a [Vec<usize>]),
}

/// A classifier with its feature schema, as persisted to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub params: ModelParams,
    pub targets: Vec<String>,
    /// One binary head per target when true, otherwise a single head.
    pub multi_label: bool,
    /// Columns of the source feature vector the model consumes, in order.
    pub feature_indices: Vec<usize>,
    pub source_features: usize,
    pub heads: Vec<Classifier>,
    #[serde(default)]
    pub config_hash: String,
}

impl TrainedModel {
    /// `x` holds the full source features; `feature_indices` picks the columns.
    pub fn fit(
        x: &FeatureMatrix,
        labels: Labels<'_>,
        targets: Vec<String>,
        feature_indices: Vec<usize>,
        params: &ModelParams,
    ) -> Result<Self> {
        let source_features = x.ncols();
        let xs = x.select_columns(&feature_indices)?;
        let (multi_label, heads) = match labels {
            Labels::Single(y) => (false, vec![Classifier::train(&xs, y, targets.len(), params)?]),
            Labels::Multi(sets) => {
                if sets.len() != xs.nrows() {
                    return Err(MlError::DimensionMismatch {
                        expected: xs.nrows(),
                        actual: sets.len(),
                    });
                }
                let heads = (0..targets.len())
                    .into_par_iter()
                    .map(|j| {
                        let y: Vec<usize> = sets.iter().map(|s| usize::from(s.contains(&j))).collect();
                        Classifier::train_head(&xs, &y, 2, params)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (true, heads)
            }
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            params: *params,
            targets,
            multi_label,
            feature_indices,
            source_features,
            heads,
            config_hash: String::new(),
        })
    }

    /// Picks the model's columns out of a full source feature vector.
    pub fn project(&self, full_row: &[f64]) -> Result<Vec<f64>> {
        check_row(self.source_features, full_row)?;
        Ok(self.feature_indices.iter().map(|&j| full_row[j]).collect())
    }

    /// Predicted target set for a row already restricted to `feature_indices`.
    pub fn predict_labels(&self, row: &[f64]) -> Result<Vec<usize>> {
        check_row(self.feature_indices.len(), row)?;
        if self.multi_label {
            let mut out = Vec::new();
            for (j, head) in self.heads.iter().enumerate() {
                if head.predict(row)? == 1 {
                    out.push(j);
                }
            }
            Ok(out)
        } else {
            Ok(vec![self.heads[0].predict(row)?])
        }
    }

    pub fn predict_full(&self, full_row: &[f64]) -> Result<Vec<usize>> {
        self.predict_labels(&self.project(full_row)?)
    }

    /// Scores the model on full source feature rows.
    pub fn evaluate(&self, x: &FeatureMatrix, truth: Labels<'_>) -> Result<Evaluation> {
        let predicted = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_full(&x.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(match truth {
            Labels::Single(y) => {
                let pred: Vec<usize> = predicted.iter().map(|p| p[0]).collect();
                let counts = ConfusionCounts::from_predictions(y, &pred, self.targets.len());
                let per_class = counts
                    .present_classes()
                    .into_iter()
                    .map(|c| (self.targets[c].clone(), precision_recall_f1(&counts, c)))
                    .collect();
                Evaluation {
                    samples: y.len(),
                    macro_f1: counts.macro_f1(),
                    per_class,
                    confusion: Some(counts),
                }
            }
            Labels::Multi(sets) => {
                let as_bits = |s: &[usize]| (0..self.targets.len()).map(|j| s.contains(&j)).collect::<Vec<bool>>();
                let t: Vec<Vec<bool>> = sets.iter().map(|s| as_bits(s)).collect();
                let p: Vec<Vec<bool>> = predicted.iter().map(|s| as_bits(s)).collect();
                Evaluation {
                    samples: sets.len(),
                    macro_f1: indicator_macro_f1(&t, &p),
                    per_class: Vec::new(),
                    confusion: None,
                }
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let probe: serde_json::Value = serde_json::from_str(&text)?;
        let version = probe.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_FORMAT_VERSION {
            return Err(MlError::UnsupportedVersion(version));
        }
        let model: Self = serde_json::from_value(probe)?;
        if model.feature_indices.iter().any(|&j| j >= model.source_features)
            || model.heads.iter().any(|h| h.n_features() != model.feature_indices.len())
        {
            return Err(MlError::InvalidParams("model file schema is inconsistent".into()));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    /// Percent.
    pub macro_f1: f64,
    pub per_class: Vec<(String, ClassScores)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionCounts>,
}
