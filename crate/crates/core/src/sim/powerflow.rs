use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    BusKind, Measurement, MeasurementKind, MeasurementPlan, NetworkModel, NetworkTopology,
    StateLayout, StateVector,
};

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITERATIONS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub state: StateVector,
    pub iterations: usize,
    pub mismatch: f64,
    /// Active and reactive injection delivered by the slack bus.
    pub slack_injection: (f64, f64),
}

/// Newton–Raphson AC power flow for one topology. Generator buses hold their
/// scheduled P and voltage setpoint (no reactive limits); the slack bus
/// absorbs the imbalance.
#[derive(Clone, Debug)]
pub struct PowerFlow {
    topology: NetworkTopology,
    model: NetworkModel,
    mismatch_plan: MeasurementPlan,
    /// Jacobian columns kept from the full state layout: all angles plus
    /// magnitudes of load buses.
    unknown_cols: Vec<usize>,
}

impl PowerFlow {
    pub fn new(topology: &NetworkTopology) -> Self {
        let model = NetworkModel::new(topology);
        let layout = model.layout();
        let slack = layout.slack;
        let mut rows = Vec::new();
        for (k, _) in topology.buses().iter().enumerate().filter(|(k, _)| *k != slack) {
            rows.push(Measurement {
                kind: MeasurementKind::Pinj,
                bus: k + 1,
                branch: None,
                sigma: 1.0,
            });
        }
        let pq: Vec<usize> = topology
            .buses()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Load)
            .map(|(k, _)| k)
            .collect();
        for &k in &pq {
            rows.push(Measurement {
                kind: MeasurementKind::Qinj,
                bus: k + 1,
                branch: None,
                sigma: 1.0,
            });
        }
        let mut unknown_cols: Vec<usize> = (0..layout.n_bus - 1).collect();
        unknown_cols.extend(pq.iter().map(|&k| layout.mag_col(k)));
        Self {
            topology: topology.clone(),
            model,
            mismatch_plan: MeasurementPlan::unchecked(rows),
            unknown_cols,
        }
    }

    pub fn layout(&self) -> StateLayout {
        self.model.layout()
    }

    /// Initial guess: flat angles, setpoint voltages at slack and generators.
    pub fn flat_start(&self) -> StateVector {
        let layout = self.layout();
        let mags = self
            .topology
            .buses()
            .iter()
            .map(|b| if b.kind == BusKind::Load { 1.0 } else { b.v_set })
            .collect();
        StateVector::from_parts(layout, vec![0.0; layout.n_bus - 1], mags).expect("layout sized")
    }

    /// Solves for per-bus loads `(P, Q)`; `start` defaults to a flat start.
    pub fn solve(&self, loads: &[(f64, f64)], start: Option<&StateVector>) -> Result<PowerFlowSolution> {
        let buses = self.topology.buses();
        if loads.len() != buses.len() {
            return Err(Error::DimensionMismatch {
                expected: buses.len(),
                actual: loads.len(),
            });
        }
        let spec = DVector::from_iterator(
            self.mismatch_plan.len(),
            self.mismatch_plan.measurements().iter().map(|m| {
                let k = m.bus - 1;
                let gen = if buses[k].kind == BusKind::Generator { buses[k].p_gen } else { 0.0 };
                match m.kind {
                    MeasurementKind::Pinj => gen - loads[k].0,
                    _ => -loads[k].1,
                }
            }),
        );

        let mut x = self.flat_start();
        if let Some(s) = start {
            // keep setpoint magnitudes, warm-start everything else
            let flat = x.clone();
            let mags = (0..buses.len())
                .map(|k| if buses[k].kind == BusKind::Load { s.v(k) } else { flat.v(k) })
                .collect();
            x = StateVector::from_parts(self.layout(), s.angles().to_vec(), mags)?;
        }

        let mut xv = x.to_vector();
        let mut mismatch = f64::INFINITY;
        for iter in 0..=PF_MAX_ITERATIONS {
            let state = StateVector::from_vector(self.layout(), &xv)?;
            let f = &spec - self.model.evaluate(&state, &self.mismatch_plan);
            mismatch = f.amax();
            if !mismatch.is_finite() {
                break;
            }
            if mismatch < PF_TOLERANCE {
                let slack_injection = self.model.injection(&state, self.layout().slack);
                return Ok(PowerFlowSolution {
                    state,
                    iterations: iter,
                    mismatch,
                    slack_injection,
                });
            }
            if iter == PF_MAX_ITERATIONS {
                break;
            }
            let full = self.model.jacobian(&state, &self.mismatch_plan);
            let jac = DMatrix::from_fn(full.nrows(), self.unknown_cols.len(), |r, c| {
                full[(r, self.unknown_cols[c])]
            });
            let dx = jac.lu().solve(&f).ok_or_else(|| {
                Error::Numerical("singular power-flow Jacobian".into())
            })?;
            for (c, &col) in self.unknown_cols.iter().enumerate() {
                xv[col] += dx[c];
            }
        }
        Err(Error::PowerFlowDivergence {
            iterations: PF_MAX_ITERATIONS,
            mismatch,
        })
    }
}

/// One-shot power flow at the given per-bus loads.
pub fn solve_power_flow(topology: &NetworkTopology, loads: &[(f64, f64)]) -> Result<PowerFlowSolution> {
    PowerFlow::new(topology).solve(loads, None)
}
