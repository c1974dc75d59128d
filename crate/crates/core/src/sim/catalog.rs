//! Randomized and gridded scenario families used to build datasets.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anomaly::{Anomaly, AnomalySpec, MAX_ATTACKED_BUSES};
use super::seed::derive_seed;
use super::trajectory::{LoadProfile, Scenario, ScenarioTrace};
use crate::error::{Error, Result};
use crate::grid::{standard_topology, BusKind, NetworkTopology, StateLayout, StateRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogKind {
    SingleSlc,
    SingleFdia,
    MultiSlc,
    MultiFdia,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub kind: CatalogKind,
    pub count: usize,
    pub topologies: Vec<usize>,
    pub steps: usize,
    /// Inclusive onset range. The EKF needs some steps to settle first.
    pub onset: (usize, usize),
    pub shed: (f64, f64),
    /// Magnitude range of each state offset; signs are drawn at random.
    pub offset: (f64, f64),
    /// Range of the first load multiplier; each trace ramps down by up to 5%.
    pub ramp_start: (f64, f64),
    /// Number of targets for the multi-origin families.
    pub targets: (usize, usize),
    pub seed: u64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            kind: CatalogKind::SingleSlc,
            count: 100,
            topologies: vec![0, 1, 2, 3, 4],
            steps: 30,
            onset: (15, 20),
            shed: (0.3, 1.0),
            offset: (0.03, 0.1),
            ramp_start: (0.95, 1.05),
            targets: (2, 4),
            seed: 0,
        }
    }
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidAnomaly(format!("catalog: {msg}")));
        if self.topologies.is_empty() {
            return bad("no topologies");
        }
        if self.onset.0 < 1 || self.onset.0 > self.onset.1 || self.onset.1 >= self.steps {
            return bad("onset range must lie inside the trace, after step 0");
        }
        if !(self.shed.0 > 0.0 && self.shed.0 <= self.shed.1 && self.shed.1 <= 1.0) {
            return bad("shed range must lie in (0, 1]");
        }
        if !(self.offset.0 > 0.0 && self.offset.0 <= self.offset.1) {
            return bad("offset range must be positive");
        }
        if !(self.ramp_start.0 > 0.0 && self.ramp_start.0 <= self.ramp_start.1) {
            return bad("ramp start range must be positive");
        }
        if self.targets.0 < 1 || self.targets.0 > self.targets.1 || self.targets.1 > MAX_ATTACKED_BUSES {
            return bad("target count range must lie in 1..=4");
        }
        Ok(())
    }

    /// The `index`-th scenario. Depends only on the seed and the index.
    pub fn scenario(&self, index: usize) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, index as u64));
        let topology_id = self.topologies[rng.random_range(0..self.topologies.len())];
        let topology = standard_topology(topology_id)?;
        let start = rng.random_range(self.ramp_start.0..=self.ramp_start.1);
        let end = start * (1.0 - rng.random_range(0.0..=0.05));
        let profile = LoadProfile::ramp(topology.bus_count(), self.steps, start, end);
        let onset = rng.random_range(self.onset.0..=self.onset.1);

        let anomaly = match self.kind {
            CatalogKind::SingleSlc => self.slc(&topology, 1, &mut rng),
            CatalogKind::MultiSlc => {
                let k = rng.random_range(self.targets.0.max(2)..=self.targets.1);
                self.slc(&topology, k, &mut rng)
            }
            CatalogKind::SingleFdia => self.fdia(&topology, 1, &mut rng),
            CatalogKind::MultiFdia => {
                let k = rng.random_range(self.targets.0.max(2)..=self.targets.1);
                self.fdia(&topology, k, &mut rng)
            }
        }?;
        let spec = AnomalySpec {
            anomaly,
            onset,
            clear: None,
        };
        let seed = rng.random();
        Ok(Scenario::new(topology_id, topology, profile, vec![spec], seed))
    }

    fn slc(&self, topology: &NetworkTopology, k: usize, rng: &mut ChaCha8Rng) -> Result<Anomaly> {
        let loaded = load_buses(topology);
        if loaded.len() < k {
            return Err(Error::InvalidAnomaly(format!("only {} buses carry load", loaded.len())));
        }
        let mut buses: Vec<usize> = sample(rng, loaded.len(), k).into_iter().map(|i| loaded[i]).collect();
        buses.sort_unstable();
        let shed = buses.iter().map(|_| rng.random_range(self.shed.0..=self.shed.1)).collect();
        Ok(Anomaly::Slc { buses, shed })
    }

    fn fdia(&self, topology: &NetworkTopology, k: usize, rng: &mut ChaCha8Rng) -> Result<Anomaly> {
        let layout = StateLayout::new(topology.bus_count(), topology.slack_index());
        let mut cols: Vec<usize> = sample(rng, layout.dim(), k).into_vec();
        cols.sort_unstable();
        let states: Vec<StateRef> = cols.iter().map(|&c| layout.state_ref(c)).collect();
        let offsets = states
            .iter()
            .map(|_| {
                let v = rng.random_range(self.offset.0..=self.offset.1);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        Ok(Anomaly::Fdia { states, offsets })
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.validate()?;
        (0..self.count).map(|i| self.scenario(i)).collect()
    }
}

/// Buses with a nonzero load, which are the only valid SLC targets.
pub fn load_buses(topology: &NetworkTopology) -> Vec<usize> {
    topology
        .buses()
        .iter()
        .filter(|b| b.kind != BusKind::Slack && (b.p_load != 0.0 || b.q_load != 0.0))
        .map(|b| b.id)
        .collect()
}

/// Generates traces in parallel; output order follows the input order.
pub fn generate_all(scenarios: &[Scenario]) -> Result<Vec<ScenarioTrace>> {
    scenarios.par_iter().map(Scenario::generate).collect()
}

/// Single-bus SLC scenarios over buses × shed fractions × topologies.
pub fn slc_grid(
    buses: &[usize],
    fractions: &[f64],
    topologies: &[usize],
    profile: &LoadProfile,
    onset: usize,
    master_seed: u64,
) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for &topology_id in topologies {
        let topology = standard_topology(topology_id)?;
        for &bus in buses {
            for &shed in fractions {
                let spec = AnomalySpec {
                    anomaly: Anomaly::Slc {
                        buses: vec![bus],
                        shed: vec![shed],
                    },
                    onset,
                    clear: None,
                };
                let seed = derive_seed(master_seed, out.len() as u64);
                let scenario = Scenario::new(topology_id, topology.clone(), profile.clone(), vec![spec], seed);
                scenario.validate()?;
                out.push(scenario);
            }
        }
    }
    Ok(out)
}

/// Single-state FDIA scenarios over states × offsets × topologies.
pub fn fdia_grid(
    states: &[StateRef],
    offsets: &[f64],
    topologies: &[usize],
    profile: &LoadProfile,
    onset: usize,
    master_seed: u64,
) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for &topology_id in topologies {
        let topology = standard_topology(topology_id)?;
        for &state in states {
            for &offset in offsets {
                let spec = AnomalySpec {
                    anomaly: Anomaly::Fdia {
                        states: vec![state],
                        offsets: vec![offset],
                    },
                    onset,
                    clear: None,
                };
                let seed = derive_seed(master_seed, out.len() as u64);
                let scenario = Scenario::new(topology_id, topology.clone(), profile.clone(), vec![spec], seed);
                scenario.validate()?;
                out.push(scenario);
            }
        }
    }
    Ok(out)
}
