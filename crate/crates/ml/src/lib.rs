//! Classifiers written from scratch for anomaly classification and origin
//! identification: random forests, second-order gradient-boosted trees,
//! logistic regression and k-nearest neighbors, plus macro-F1 metrics, mRMR
//! feature selection and random-search tuning.

pub mod boosting;
pub mod error;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod mrmr;
pub mod tree;
pub mod tuning;

pub use error::{MlError, Result};
pub use matrix::FeatureMatrix;
pub use model::{Classifier, Evaluation, Labels, ModelKind, ModelParams, TrainedModel};
