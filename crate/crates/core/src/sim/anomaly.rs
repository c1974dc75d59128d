use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MeasurementPlan, MeasurementRef, NetworkModel, NetworkTopology, StateRef, StateVector};

/// An adversary manipulates the states of at most this many buses.
pub const MAX_ATTACKED_BUSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    BadData,
    Slc,
    Fdia,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::BadData => "bad_data",
            AnomalyKind::Slc => "slc",
            AnomalyKind::Fdia => "fdia",
        }
    }
}

/// What an anomaly does, with per-target magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anomaly {
    /// Gross errors: each targeted reading is replaced by `clean·(1 + f)`, or
    /// by `clean + f·full_scale` when `full_scale` is set.
    BadData {
        measurements: Vec<MeasurementRef>,
        fractions: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        full_scale: Option<f64>,
    },
    /// Sudden load change: P and Q at each bus scaled by `1 − shed`.
    Slc { buses: Vec<usize>, shed: Vec<f64> },
    /// Stealthy false data injection shifting the listed states.
    Fdia { states: Vec<StateRef>, offsets: Vec<f64> },
}

/// An anomaly active on steps `onset..clear` (open-ended without `clear`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    #[serde(flatten)]
    pub anomaly: Anomaly,
    pub onset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear: Option<usize>,
}

impl AnomalySpec {
    pub fn kind(&self) -> AnomalyKind {
        match self.anomaly {
            Anomaly::BadData { .. } => AnomalyKind::BadData,
            Anomaly::Slc { .. } => AnomalyKind::Slc,
            Anomaly::Fdia { .. } => AnomalyKind::Fdia,
        }
    }

    pub fn is_active(&self, t: usize) -> bool {
        t >= self.onset && self.clear.is_none_or(|c| t < c)
    }

    pub fn overlaps(&self, other: &AnomalySpec) -> bool {
        let end = |s: &AnomalySpec| s.clear.unwrap_or(usize::MAX);
        self.onset < end(other) && other.onset < end(self)
    }

    /// Target names as written in trace labels.
    pub fn target_names(&self) -> Vec<String> {
        match &self.anomaly {
            Anomaly::BadData { measurements, .. } => measurements.iter().map(|m| m.to_string()).collect(),
            Anomaly::Slc { buses, .. } => buses.iter().map(|b| format!("bus{b}")).collect(),
            Anomaly::Fdia { states, .. } => states.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self, topology: &NetworkTopology, plan: &MeasurementPlan) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAnomaly(msg));
        if let Some(c) = self.clear {
            if c <= self.onset {
                return bad(format!("clear step {c} not after onset {}", self.onset));
            }
        }
        match &self.anomaly {
            Anomaly::BadData {
                measurements,
                fractions,
                full_scale,
            } => {
                check_lengths(measurements.len(), fractions.len())?;
                for m in measurements {
                    if plan.index_of(*m, topology).is_none() {
                        return bad(format!("measurement {m} is not in the plan"));
                    }
                }
                if fractions.iter().all(|f| *f == 0.0) {
                    return bad("all bad-data fractions are zero".into());
                }
                if full_scale.is_some_and(|s| !(s > 0.0)) {
                    return bad("full scale must be positive".into());
                }
            }
            Anomaly::Slc { buses, shed } => {
                check_lengths(buses.len(), shed.len())?;
                if shed.iter().all(|f| *f == 0.0) {
                    return bad("all shed fractions are zero".into());
                }
                for (&b, &f) in buses.iter().zip(shed) {
                    let bus = topology
                        .bus(b)
                        .ok_or_else(|| Error::InvalidAnomaly(format!("unknown bus {b}")))?;
                    if !(f > 0.0 && f <= 1.0) {
                        return bad(format!("shed fraction {f} at bus {b} outside (0, 1]"));
                    }
                    if bus.p_load == 0.0 && bus.q_load == 0.0 {
                        return bad(format!("bus {b} carries no load to shed"));
                    }
                }
                if buses.iter().collect::<BTreeSet<_>>().len() != buses.len() {
                    return bad("duplicate SLC bus".into());
                }
            }
            Anomaly::Fdia { states, offsets } => {
                check_lengths(states.len(), offsets.len())?;
                check_attack_targets(states, topology)?;
            }
        }
        Ok(())
    }
}

fn check_lengths(targets: usize, magnitudes: usize) -> Result<()> {
    if targets == 0 {
        return Err(Error::InvalidAnomaly("empty target list".into()));
    }
    if targets != magnitudes {
        return Err(Error::InvalidAnomaly(format!(
            "{targets} targets but {magnitudes} magnitudes"
        )));
    }
    Ok(())
}

fn check_attack_targets(states: &[StateRef], topology: &NetworkTopology) -> Result<()> {
    let slack = topology.slack_index() + 1;
    for s in states {
        if s.bus() == 0 || s.bus() > topology.bus_count() {
            return Err(Error::InvalidAnomaly(format!("unknown state {s}")));
        }
        if *s == StateRef::Angle(slack) {
            return Err(Error::InvalidAnomaly(format!("{s} is the slack reference angle, not a state")));
        }
    }
    let buses: BTreeSet<usize> = states.iter().map(|s| s.bus()).collect();
    if buses.len() > MAX_ATTACKED_BUSES {
        return Err(Error::InvalidAnomaly(format!(
            "attack touches {} buses (limit {MAX_ATTACKED_BUSES})",
            buses.len()
        )));
    }
    if states.iter().collect::<BTreeSet<_>>().len() != states.len() {
        return Err(Error::InvalidAnomaly("duplicate attacked state".into()));
    }
    Ok(())
}

/// Replaces the targeted readings of `observed` with corrupted clean values.
pub fn inject_bad_data(
    observed: &DVector<f64>,
    clean: &DVector<f64>,
    spec: &AnomalySpec,
    topology: &NetworkTopology,
    plan: &MeasurementPlan,
) -> Result<DVector<f64>> {
    let Anomaly::BadData {
        measurements,
        fractions,
        full_scale,
    } = &spec.anomaly
    else {
        return Err(Error::InvalidAnomaly("expected a bad-data spec".into()));
    };
    let mut out = observed.clone();
    for (m, &f) in measurements.iter().zip(fractions) {
        let i = plan
            .index_of(*m, topology)
            .ok_or_else(|| Error::InvalidAnomaly(format!("measurement {m} is not in the plan")))?;
        if i >= out.len() || i >= clean.len() {
            return Err(Error::InvalidAnomaly(format!("measurement index {i} out of range")));
        }
        out[i] = match full_scale {
            Some(scale) => clean[i] + f * scale,
            None => clean[i] * (1.0 + f),
        };
    }
    Ok(out)
}

/// Per-bus loads with the SLC shed applied when `t` is inside its window.
pub fn apply_sudden_load_change(loads: &[(f64, f64)], spec: &AnomalySpec, t: usize) -> Result<Vec<(f64, f64)>> {
    let Anomaly::Slc { buses, shed } = &spec.anomaly else {
        return Err(Error::InvalidAnomaly("expected an SLC spec".into()));
    };
    let mut out = loads.to_vec();
    if !spec.is_active(t) {
        return Ok(out);
    }
    for (&b, &f) in buses.iter().zip(shed) {
        let load = out
            .get_mut(b.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidAnomaly(format!("unknown bus {b}")))?;
        if load.0 == 0.0 && load.1 == 0.0 && f != 0.0 {
            return Err(Error::InvalidAnomaly(format!("bus {b} carries no load to shed")));
        }
        load.0 *= 1.0 - f;
        load.1 *= 1.0 - f;
    }
    Ok(out)
}

/// Stealthy attack vector a = h(x̂ + c) − h(x̂) and the attacked state x̂ + c.
pub fn build_stealth_attack(
    estimate: &StateVector,
    offsets: &[(StateRef, f64)],
    topology: &NetworkTopology,
    model: &NetworkModel,
    plan: &MeasurementPlan,
) -> Result<(DVector<f64>, StateVector)> {
    let states: Vec<StateRef> = offsets.iter().map(|(s, _)| *s).collect();
    check_attack_targets(&states, topology)?;
    let layout = estimate.layout();
    let mut x = estimate.to_vector();
    for &(s, c) in offsets {
        let col = layout
            .col(s)
            .ok_or_else(|| Error::InvalidAnomaly(format!("{s} is not a state")))?;
        x[col] += c;
    }
    let attacked = StateVector::from_vector(layout, &x)?;
    let a = model.evaluate(&attacked, plan) - model.evaluate(estimate, plan);
    Ok((a, attacked))
}

/// z + a
pub fn apply_attack(observed: &DVector<f64>, attack: &DVector<f64>) -> Result<DVector<f64>> {
    if observed.len() != attack.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            actual: attack.len(),
        });
    }
    Ok(observed + attack)
}
