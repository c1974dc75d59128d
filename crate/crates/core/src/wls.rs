//! Static state estimation by weighted least squares, with the χ² bad-data
//! test and largest-normalized-residual identification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::grid::{MeasurementPlan, NetworkModel, StateVector};

/// Detection probability for the χ² threshold.
pub const DEFAULT_CHI2_PROBABILITY: f64 = 0.99;
/// Normalized-residual threshold for bad-data suspicion.
pub const LNR_THRESHOLD: f64 = 3.0;
/// Residual variances below this mark critical (non-redundant) measurements.
pub const CRITICAL_VARIANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WlsConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for WlsConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WlsSolution {
    pub estimate: StateVector,
    /// r = z − h(x̂)
    pub residuals: DVector<f64>,
    /// J = Σ r_i² / σ_i²
    pub objective: f64,
    pub iterations: usize,
    /// H evaluated at x̂.
    pub jacobian: DMatrix<f64>,
    /// Ω = R − H G⁻¹ Hᵀ evaluated at x̂.
    pub residual_covariance: DMatrix<f64>,
    /// h(x̂)
    pub fitted: DVector<f64>,
}

impl WlsSolution {
    pub fn measurement_count(&self) -> usize {
        self.residuals.len()
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.residuals.len().saturating_sub(self.estimate.dim())
    }
}

fn weights(plan: &MeasurementPlan) -> Result<DVector<f64>> {
    plan.variances()
        .into_iter()
        .map(|v| {
            if v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(Error::Numerical("WLS needs strictly positive measurement variances".into()))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// Gain matrix G = Hᵀ R⁻¹ H.
fn gain(h: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut hw = h.clone();
    for (mut row, &wi) in hw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    h.transpose() * hw
}

/// Gauss–Newton WLS from `init`: Δx = G⁻¹ Hᵀ R⁻¹ r until ‖Δx‖∞ < tolerance.
pub fn estimate_wls(
    z: &DVector<f64>,
    plan: &MeasurementPlan,
    model: &NetworkModel,
    init: &StateVector,
    config: &WlsConfig,
) -> Result<WlsSolution> {
    if z.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            actual: z.len(),
        });
    }
    let layout = model.layout();
    if plan.len() < layout.dim() {
        return Err(Error::Observability(format!(
            "{} measurements for {} states",
            plan.len(),
            layout.dim()
        )));
    }
    let w = weights(plan)?;
    let mut x = init.to_vector();
    let mut last_step = f64::INFINITY;
    for iter in 1..=config.max_iterations {
        let state = StateVector::from_vector(layout, &x)?;
        let r = z - model.evaluate(&state, plan);
        let h = model.jacobian(&state, plan);
        let g = gain(&h, &w);
        let chol = g
            .cholesky()
            .ok_or_else(|| Error::Observability("singular WLS gain matrix".into()))?;
        let rhs = h.transpose() * r.component_mul(&w);
        let dx = chol.solve(&rhs);
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite WLS update".into()));
        }
        x += &dx;
        last_step = dx.amax();
        if last_step < config.tolerance {
            let estimate = StateVector::from_vector(layout, &x)?;
            return Ok(finish(z, plan, model, estimate, &w, iter));
        }
    }
    Err(Error::WlsNonConvergence {
        iterations: config.max_iterations,
        last_step,
        last_iterate: x.iter().copied().collect(),
    })
}

fn finish(
    z: &DVector<f64>,
    plan: &MeasurementPlan,
    model: &NetworkModel,
    estimate: StateVector,
    w: &DVector<f64>,
    iterations: usize,
) -> WlsSolution {
    let fitted = model.evaluate(&estimate, plan);
    let residuals = z - &fitted;
    let objective = residuals.iter().zip(w.iter()).map(|(r, wi)| r * r * wi).sum();
    let jacobian = model.jacobian(&estimate, plan);
    let residual_covariance = residual_covariance_of(&jacobian, plan, w);
    WlsSolution {
        estimate,
        residuals,
        objective,
        iterations,
        jacobian,
        residual_covariance,
        fitted,
    }
}

fn residual_covariance_of(h: &DMatrix<f64>, plan: &MeasurementPlan, w: &DVector<f64>) -> DMatrix<f64> {
    let g = gain(h, w);
    // G is positive definite whenever the estimate converged.
    let g_inv = g.clone().cholesky().map(|c| c.inverse()).unwrap_or_else(|| {
        g.clone()
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a symmetric matrix")
    });
    let mut omega = -(h * g_inv * h.transpose());
    for (i, v) in plan.variances().into_iter().enumerate() {
        omega[(i, i)] += v;
    }
    omega
}

/// Ω = R − H (Hᵀ R⁻¹ H)⁻¹ Hᵀ at the solution's estimate.
pub fn residual_covariance(solution: &WlsSolution, plan: &MeasurementPlan) -> Result<DMatrix<f64>> {
    let w = weights(plan)?;
    Ok(residual_covariance_of(&solution.jacobian, plan, &w))
}

/// Inverse CDF of the χ² distribution with `dof` degrees of freedom at
/// probability `p`.
pub fn chi_square_threshold(dof: usize, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Numerical("χ² threshold needs at least one degree of freedom".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numerical(format!("probability {p} outside (0, 1)")));
    }
    let a = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let ln_norm = a * std::f64::consts::LN_2 + ln_gamma(a);
    let pdf = |x: f64| ((a - 1.0) * x.ln() - x / 2.0 - ln_norm).exp();

    let (mut lo, mut hi) = (0.0, dof as f64 + 10.0);
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub flag: bool,
    pub objective: f64,
    pub threshold: f64,
}

/// Flags bad data when J ≥ χ²(m − n, p).
pub fn chi_square_test(solution: &WlsSolution, p: f64) -> Result<ChiSquareTest> {
    let threshold = chi_square_threshold(solution.degrees_of_freedom(), p)?;
    Ok(ChiSquareTest {
        flag: solution.objective >= threshold,
        objective: solution.objective,
        threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LnrResult {
    pub index: usize,
    pub value: f64,
    pub suspect: bool,
}

/// Normalized residuals |r_i| / √Ω_ii; critical measurements yield `None`.
pub fn normalized_residuals(solution: &WlsSolution) -> Vec<Option<f64>> {
    solution
        .residuals
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let var = solution.residual_covariance[(i, i)];
            (var >= CRITICAL_VARIANCE).then(|| r.abs() / var.sqrt())
        })
        .collect()
}

/// Largest normalized residual and whether it exceeds `tau`.
pub fn largest_normalized_residual(solution: &WlsSolution, tau: f64) -> Result<LnrResult> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in normalized_residuals(solution).into_iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (index, value) = best.ok_or(Error::IdentificationImpossible)?;
    Ok(LnrResult {
        index,
        value,
        suspect: value > tau,
    })
}
