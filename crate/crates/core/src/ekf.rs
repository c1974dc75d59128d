//! Forecasting-aided state estimation: Holt's two-parameter smoothing gives
//! the linear transition model, an extended Kalman filter tracks the state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MeasurementPlan, NetworkModel, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    pub holt_alpha: f64,
    pub holt_beta: f64,
    /// Diagonal of the constant process noise covariance Q.
    pub process_noise: f64,
    /// Diagonal of the initial estimate covariance P̂₀.
    pub initial_covariance: f64,
    /// Largest tolerated condition number of the innovation covariance.
    pub max_condition: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            holt_alpha: 0.8,
            holt_beta: 0.5,
            process_noise: 1e-6,
            initial_covariance: 1e-2,
            max_condition: 1e12,
        }
    }
}

/// Holt smoothing parameters with the previous level and trend.
#[derive(Clone, Debug, PartialEq)]
pub struct HoltState {
    pub alpha: f64,
    pub beta: f64,
    pub level: DVector<f64>,
    pub trend: DVector<f64>,
}

impl HoltState {
    pub fn new(alpha: f64, beta: f64, level: DVector<f64>) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "Holt alpha must lie in (0, 1]");
        assert!((0.0..=1.0).contains(&beta), "Holt beta must lie in [0, 1]");
        let trend = DVector::zeros(level.len());
        Self {
            alpha,
            beta,
            level,
            trend,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HoltStep {
    pub transition: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub next: HoltState,
}

/// Transition matrix A and trend vector g such that A x̂ + g is Holt's
/// one-step forecast from the previous estimate and prediction.
pub fn holt_coefficients(holt: &HoltState, x_est_prev: &DVector<f64>, x_pred_prev: &DVector<f64>) -> HoltStep {
    let (alpha, beta) = (holt.alpha, holt.beta);
    let level = alpha * x_est_prev + (1.0 - alpha) * x_pred_prev;
    let trend = beta * (&level - &holt.level) + (1.0 - beta) * &holt.trend;
    let n = level.len();
    let transition = DMatrix::identity(n, n) * (alpha * (1.0 + beta));
    let offset = (1.0 + beta) * (1.0 - alpha) * x_pred_prev - beta * &holt.level + (1.0 - beta) * &holt.trend;
    HoltStep {
        transition,
        offset,
        next: HoltState {
            alpha,
            beta,
            level,
            trend,
        },
    }
}

#[derive(Clone, Debug)]
pub struct EkfBelief {
    pub estimate: StateVector,
    pub covariance: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub state: StateVector,
    pub covariance: DMatrix<f64>,
}

/// x̃ = A x̂ + g, P̃ = A P̂ Aᵀ + Q.
pub fn predict_state(belief: &EkfBelief, transition: &DMatrix<f64>, offset: &DVector<f64>) -> Result<Prediction> {
    let x = transition * belief.estimate.to_vector() + offset;
    let covariance = transition * &belief.covariance * transition.transpose() + &belief.process_noise;
    Ok(Prediction {
        state: StateVector::from_vector(belief.estimate.layout(), &x)?,
        covariance,
    })
}

/// Quantities produced by one filtering step.
#[derive(Clone, Debug)]
pub struct FaseStep {
    pub prediction: StateVector,
    pub predicted_covariance: DMatrix<f64>,
    /// h(x̃)
    pub predicted_measurements: DVector<f64>,
    /// ν = z − h(x̃)
    pub innovation: DVector<f64>,
    /// S = H P̃ Hᵀ + R
    pub innovation_covariance: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub normalized_innovations: DVector<f64>,
}

/// ν_i / √S_ii
pub fn normalized_innovations(innovation: &DVector<f64>, innovation_covariance: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        innovation.len(),
        innovation
            .iter()
            .enumerate()
            .map(|(i, v)| v / innovation_covariance[(i, i)].sqrt()),
    )
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Kalman measurement update at the predicted state.
pub fn filter_update(
    prediction: &Prediction,
    process_noise: &DMatrix<f64>,
    z: &DVector<f64>,
    plan: &MeasurementPlan,
    model: &NetworkModel,
    max_condition: f64,
) -> Result<(EkfBelief, FaseStep)> {
    if z.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            actual: z.len(),
        });
    }
    let p_pred = &prediction.covariance;
    let predicted_measurements = model.evaluate(&prediction.state, plan);
    let innovation = z - &predicted_measurements;
    let h = model.jacobian(&prediction.state, plan);
    let hp = &h * p_pred;
    let mut s = &hp * h.transpose();
    for (i, v) in plan.variances().into_iter().enumerate() {
        s[(i, i)] += v;
    }
    symmetrize(&mut s);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition = (hi / lo).powi(2);
    if !(condition <= max_condition) {
        return Err(Error::Numerical(format!(
            "innovation covariance ill-conditioned (estimate {condition:.3e})"
        )));
    }
    // K = P̃ Hᵀ S⁻¹ = (S⁻¹ H P̃)ᵀ
    let gain = chol.solve(&hp).transpose();
    let x = prediction.state.to_vector() + &gain * &innovation;
    let mut covariance = p_pred - &gain * &hp;
    symmetrize(&mut covariance);
    let normalized = normalized_innovations(&innovation, &s);
    let belief = EkfBelief {
        estimate: StateVector::from_vector(prediction.state.layout(), &x)?,
        covariance,
        process_noise: process_noise.clone(),
    };
    Ok((
        belief,
        FaseStep {
            prediction: prediction.state.clone(),
            predicted_covariance: p_pred.clone(),
            predicted_measurements,
            innovation,
            innovation_covariance: s,
            gain,
            normalized_innovations: normalized,
        },
    ))
}

/// Running forecasting-aided estimator: Holt forecast, EKF predict and filter.
#[derive(Clone, Debug)]
pub struct Fase {
    config: EkfConfig,
    belief: EkfBelief,
    holt: HoltState,
    last_prediction: DVector<f64>,
}

impl Fase {
    /// Starts from an initial estimate (typically a one-shot WLS) with
    /// P̂₀ = p₀ I, Holt level x̂₀ and zero trend.
    pub fn new(initial: StateVector, config: EkfConfig) -> Self {
        let n = initial.dim();
        let x0 = initial.to_vector();
        Self {
            belief: EkfBelief {
                estimate: initial,
                covariance: DMatrix::identity(n, n) * config.initial_covariance,
                process_noise: DMatrix::identity(n, n) * config.process_noise,
            },
            holt: HoltState::new(config.holt_alpha, config.holt_beta, x0.clone()),
            last_prediction: x0,
            config,
        }
    }

    pub fn belief(&self) -> &EkfBelief {
        &self.belief
    }

    pub fn config(&self) -> &EkfConfig {
        &self.config
    }

    /// Forecast for the next step without consuming a measurement.
    pub fn predict(&self) -> Result<(Prediction, HoltState)> {
        let step = holt_coefficients(&self.holt, &self.belief.estimate.to_vector(), &self.last_prediction);
        let prediction = predict_state(&self.belief, &step.transition, &step.offset)?;
        Ok((prediction, step.next))
    }

    pub fn step(&mut self, z: &DVector<f64>, plan: &MeasurementPlan, model: &NetworkModel) -> Result<FaseStep> {
        let (prediction, holt) = self.predict()?;
        let (belief, step) = filter_update(
            &prediction,
            &self.belief.process_noise,
            z,
            plan,
            model,
            self.config.max_condition,
        )?;
        self.last_prediction = prediction.state.to_vector();
        self.holt = holt;
        self.belief = belief;
        Ok(step)
    }
}
