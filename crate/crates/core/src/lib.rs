//! Power-grid anomaly detection: AC network simulation under bad data,
//! sudden load changes and stealthy false data injection; WLS and
//! forecasting-aided (EKF) state estimation; χ² / LNR bad-data tests; the
//! WLS-vs-EKF anomaly detection index; and bus-only feature extraction for
//! downstream classifiers.

pub mod dataset;
pub mod detection;
pub mod ekf;
pub mod error;
pub mod grid;
pub mod sim;
pub mod wls;

pub use error::{Error, Result};

/// Fixed numeric formatting for every CSV artifact: nine significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}
