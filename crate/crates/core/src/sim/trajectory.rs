use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anomaly::{apply_attack, apply_sudden_load_change, build_stealth_attack, inject_bad_data, Anomaly, AnomalySpec};
use super::noise::add_noise_with;
use super::powerflow::PowerFlow;
use crate::error::{Error, Result};
use crate::grid::{MeasurementPlan, NetworkModel, NetworkTopology, StateVector, DEFAULT_SIGMA};
use crate::wls::{estimate_wls, WlsConfig};

/// Default trace length in steps.
pub const DEFAULT_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileConfig {
    /// Every bus load scaled linearly from `start` to `end` over `steps`.
    Ramp { start: f64, end: f64, steps: usize },
    /// Explicit T × N multiplier table.
    Table { multipliers: Vec<Vec<f64>> },
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig::Ramp {
            start: 1.0,
            end: 0.95,
            steps: DEFAULT_STEPS,
        }
    }
}

/// Per-step, per-bus load multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub multipliers: Vec<Vec<f64>>,
    pub tag: String,
}

impl LoadProfile {
    pub fn ramp(n_bus: usize, steps: usize, start: f64, end: f64) -> Self {
        let multipliers = (0..steps)
            .map(|t| {
                let frac = if steps > 1 { t as f64 / (steps - 1) as f64 } else { 0.0 };
                vec![start + (end - start) * frac; n_bus]
            })
            .collect();
        Self {
            multipliers,
            tag: format!("ramp {start}->{end} over {steps}"),
        }
    }

    pub fn from_config(config: &ProfileConfig, n_bus: usize) -> Result<Self> {
        let profile = match config {
            ProfileConfig::Ramp { start, end, steps } => Self::ramp(n_bus, *steps, *start, *end),
            ProfileConfig::Table { multipliers } => Self {
                multipliers: multipliers.clone(),
                tag: "table".into(),
            },
        };
        profile.validate(n_bus)?;
        Ok(profile)
    }

    pub fn validate(&self, n_bus: usize) -> Result<()> {
        if self.multipliers.is_empty() {
            return Err(Error::InvalidAnomaly("load profile has no steps".into()));
        }
        for (t, row) in self.multipliers.iter().enumerate() {
            if row.len() != n_bus {
                return Err(Error::DimensionMismatch {
                    expected: n_bus,
                    actual: row.len(),
                });
            }
            if row.iter().any(|m| !(*m > 0.0)) {
                return Err(Error::InvalidAnomaly(format!("non-positive load multiplier at step {t}")));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.multipliers.len()
    }

    pub fn loads_at(&self, base: &[(f64, f64)], t: usize) -> Vec<(f64, f64)> {
        base.iter()
            .zip(&self.multipliers[t])
            .map(|(&(p, q), m)| (p * m, q * m))
            .collect()
    }
}

/// Everything needed to generate one labeled trace.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub topology_id: usize,
    pub topology: NetworkTopology,
    pub plan: MeasurementPlan,
    pub profile: LoadProfile,
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
    /// Accept anomalies with overlapping windows.
    pub allow_concurrent: bool,
}

impl Scenario {
    /// Scenario with the full metering plan at the default noise level.
    pub fn new(
        topology_id: usize,
        topology: NetworkTopology,
        profile: LoadProfile,
        anomalies: Vec<AnomalySpec>,
        seed: u64,
    ) -> Self {
        let plan = MeasurementPlan::full(&topology, DEFAULT_SIGMA);
        Self {
            topology_id,
            topology,
            plan,
            profile,
            anomalies,
            seed,
            allow_concurrent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate(&self.topology)?;
        self.profile.validate(self.topology.bus_count())?;
        for spec in &self.anomalies {
            spec.validate(&self.topology, &self.plan)?;
        }
        if !self.allow_concurrent {
            for (i, a) in self.anomalies.iter().enumerate() {
                for b in &self.anomalies[i + 1..] {
                    if a.overlaps(b) {
                        return Err(Error::InvalidAnomaly(format!(
                            "anomalies starting at steps {} and {} overlap; concurrency not enabled",
                            a.onset, b.onset
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<ScenarioTrace> {
        self.validate()?;
        let pf = PowerFlow::new(&self.topology);
        let model = NetworkModel::new(&self.topology);
        let base = self.topology.base_loads();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut steps = Vec::with_capacity(self.profile.steps());
        let mut warm: Option<StateVector> = None;

        for t in 0..self.profile.steps() {
            let mut loads = self.profile.loads_at(&base, t);
            for spec in self.anomalies.iter().filter(|s| matches!(s.anomaly, Anomaly::Slc { .. })) {
                loads = apply_sudden_load_change(&loads, spec, t).map_err(|e| e.at_step(t))?;
            }
            let solution = pf.solve(&loads, warm.as_ref()).map_err(|e| e.at_step(t))?;
            let true_state = solution.state;
            let clean = model.evaluate(&true_state, &self.plan);
            let mut observed = add_noise_with(&clean, &self.plan, &mut rng);

            let active: Vec<usize> = (0..self.anomalies.len())
                .filter(|&i| self.anomalies[i].is_active(t))
                .collect();
            for &i in &active {
                let spec = &self.anomalies[i];
                match &spec.anomaly {
                    Anomaly::BadData { .. } => {
                        observed = inject_bad_data(&observed, &clean, spec, &self.topology, &self.plan)
                            .map_err(|e| e.at_step(t))?;
                    }
                    Anomaly::Fdia { states, offsets } => {
                        // The adversary sees what the operator sees: the
                        // converged WLS estimate of the current snapshot.
                        let flat = StateVector::flat(model.layout());
                        let estimate = estimate_wls(&observed, &self.plan, &model, &flat, &WlsConfig::default())
                            .map_err(|e| e.at_step(t))?
                            .estimate;
                        let c: Vec<_> = states.iter().copied().zip(offsets.iter().copied()).collect();
                        let (a, _) = build_stealth_attack(&estimate, &c, &self.topology, &model, &self.plan)
                            .map_err(|e| e.at_step(t))?;
                        observed = apply_attack(&observed, &a)?;
                    }
                    Anomaly::Slc { .. } => {}
                }
            }
            warm = Some(true_state.clone());
            steps.push(TraceStep {
                t,
                true_state,
                clean,
                observed,
                active,
            });
        }
        Ok(ScenarioTrace {
            topology_id: self.topology_id,
            topology: self.topology.clone(),
            plan: self.plan.clone(),
            profile_tag: self.profile.tag.clone(),
            anomalies: self.anomalies.clone(),
            seed: self.seed,
            steps,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub true_state: StateVector,
    pub clean: DVector<f64>,
    pub observed: DVector<f64>,
    /// Indices into `ScenarioTrace::anomalies` active at this step.
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTrace {
    pub topology_id: usize,
    pub topology: NetworkTopology,
    pub plan: MeasurementPlan,
    pub profile_tag: String,
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
}

impl ScenarioTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `normal`, or the active kinds joined by `+`.
    pub fn label(&self, t: usize) -> String {
        step_label(&self.anomalies, &self.steps[t].active)
    }

    /// Targets of the active anomalies: `;` within one anomaly, `|` between.
    pub fn label_targets(&self, t: usize) -> String {
        self.steps[t]
            .active
            .iter()
            .map(|&i| self.anomalies[i].target_names().join(";"))
            .collect::<Vec<_>>()
            .join("|")
    }
}

pub(crate) fn step_label(anomalies: &[AnomalySpec], active: &[usize]) -> String {
    if active.is_empty() {
        return "normal".into();
    }
    active
        .iter()
        .map(|&i| anomalies[i].kind().as_str())
        .collect::<Vec<_>>()
        .join("+")
}

/// Generates a trace on the full default metering plan.
pub fn generate_trajectory(
    topology: &NetworkTopology,
    profile: &LoadProfile,
    specs: &[AnomalySpec],
    seed: u64,
) -> Result<ScenarioTrace> {
    Scenario::new(0, topology.clone(), profile.clone(), specs.to_vec(), seed).generate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ieee14;

    #[test]
    fn ramp_endpoints() {
        let p = LoadProfile::ramp(3, 100, 1.0, 0.95);
        assert_eq!(p.steps(), 100);
        assert_eq!(p.multipliers[0], vec![1.0; 3]);
        assert!((p.multipliers[99][2] - 0.95).abs() < 1e-15);
        assert!(LoadProfile::from_config(&ProfileConfig::Table { multipliers: vec![vec![1.0, -1.0]] }, 2).is_err());
    }

    #[test]
    fn empty_spec_list_is_all_normal_and_deterministic() {
        let t = ieee14();
        let profile = LoadProfile::ramp(14, 8, 1.0, 0.95);
        let a = generate_trajectory(&t, &profile, &[], 42).unwrap();
        assert!((0..a.len()).all(|k| a.label(k) == "normal"));
        let b = generate_trajectory(&t, &profile, &[], 42).unwrap();
        assert_eq!(a, b);
        let c = generate_trajectory(&t, &profile, &[], 43).unwrap();
        assert_ne!(a.steps[0].observed, c.steps[0].observed);
        assert_eq!(a.steps[0].clean, c.steps[0].clean);
    }

    #[test]
    fn overlapping_specs_need_opt_in() {
        let t = ieee14();
        let slc = AnomalySpec {
            anomaly: Anomaly::Slc {
                buses: vec![14],
                shed: vec![0.2],
            },
            onset: 2,
            clear: Some(5),
        };
        let bd = AnomalySpec {
            anomaly: Anomaly::BadData {
                measurements: vec!["Pinj14".parse().unwrap()],
                fractions: vec![0.5],
                full_scale: None,
            },
            onset: 1,
            clear: Some(3),
        };
        let mut s = Scenario::new(0, t, LoadProfile::ramp(14, 6, 1.0, 0.95), vec![slc, bd], 1);
        assert!(matches!(s.generate(), Err(Error::InvalidAnomaly(_))));
        s.allow_concurrent = true;
        let trace = s.generate().unwrap();
        assert_eq!(trace.label(2), "slc+bad_data");
        assert_eq!(trace.label_targets(2), "bus14|Pinj14");
        assert_eq!(trace.label(0), "normal");
    }
}
