use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

/// A network bus. Loads, generation and shunts are in per-unit on the
/// system base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
    /// Scheduled active generation (generator buses; ignored at the slack).
    #[serde(default)]
    pub p_gen: f64,
    /// Voltage setpoint for slack and generator buses.
    #[serde(default = "unity")]
    pub v_set: f64,
}

fn unity() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    #[default]
    Connected,
    Disconnected,
}

/// Pi-model branch. `b` is the total line charging, split equally between
/// both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub status: BranchStatus,
    /// Parallel-circuit slot for branches sharing the same bus pair.
    #[serde(default = "first_circuit")]
    pub circuit: u8,
}

fn first_circuit() -> u8 {
    1
}

impl Branch {
    pub fn new(from: usize, to: usize, r: f64, x: f64, b: f64) -> Self {
        Self {
            from,
            to,
            r,
            x,
            b,
            status: BranchStatus::Connected,
            circuit: 1,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.status == BranchStatus::Connected
    }

    pub fn joins(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }

    fn pair(&self) -> (usize, usize) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

/// Validated network: contiguous 1-based bus ids, a single slack bus and a
/// connected branch graph spanning every bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct NetworkTopology {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawTopology {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

impl TryFrom<RawTopology> for NetworkTopology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        NetworkTopology::new(raw.buses, raw.branches)
    }
}

impl From<NetworkTopology> for RawTopology {
    fn from(t: NetworkTopology) -> Self {
        RawTopology {
            buses: t.buses,
            branches: t.branches,
        }
    }
}

impl NetworkTopology {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::InvalidNetwork("no buses".into()));
        }
        for (k, bus) in buses.iter().enumerate() {
            if bus.id != k + 1 {
                return Err(Error::InvalidNetwork(format!(
                    "bus ids must be contiguous from 1; found id {} at position {}",
                    bus.id,
                    k + 1
                )));
            }
        }
        let slack_count = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack_count != 1 {
            return Err(Error::InvalidNetwork(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }
        let n = buses.len();
        let mut slots = HashSet::new();
        for br in &branches {
            if br.from == br.to {
                return Err(Error::InvalidNetwork(format!("branch {}-{} is a self loop", br.from, br.to)));
            }
            if br.from == 0 || br.from > n || br.to == 0 || br.to > n {
                return Err(Error::InvalidNetwork(format!(
                    "branch {}-{} references an unknown bus",
                    br.from, br.to
                )));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "branch {}-{} has zero series impedance",
                    br.from, br.to
                )));
            }
            if !slots.insert((br.pair(), br.circuit)) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate branch {}-{} in circuit slot {}",
                    br.from, br.to, br.circuit
                )));
            }
        }
        let topology = Self { buses, branches };
        topology.check_connected()?;
        Ok(topology)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn connected_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.is_connected())
    }

    /// Zero-based index of the slack bus.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated topology has a slack bus")
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        id.checked_sub(1).and_then(|k| self.buses.get(k))
    }

    /// Returns a copy with replaced per-bus loads, keeping every other field.
    pub fn with_loads(&self, loads: &[(f64, f64)]) -> Result<Self> {
        if loads.len() != self.buses.len() {
            return Err(Error::DimensionMismatch {
                expected: self.buses.len(),
                actual: loads.len(),
            });
        }
        let mut out = self.clone();
        for (bus, &(p, q)) in out.buses.iter_mut().zip(loads) {
            bus.p_load = p;
            bus.q_load = q;
        }
        Ok(out)
    }

    pub fn base_loads(&self) -> Vec<(f64, f64)> {
        self.buses.iter().map(|b| (b.p_load, b.q_load)).collect()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (_, br) in self.connected_branches() {
            adj[br.from - 1].push(br.to - 1);
            adj[br.to - 1].push(br.from - 1);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &j in &adj[k] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            None => Ok(()),
            Some(k) => Err(Error::Observability(format!(
                "bus {} is islanded by the connected branch set",
                k + 1
            ))),
        }
    }
}

/// Series impedance and charging for a branch added by a topology change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewBranch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
}

/// Disconnects the branch joining `disconnect` and connects a new one.
///
/// Reconnecting a previously disconnected branch with identical parameters
/// restores its record instead of appending a duplicate, so disconnecting and
/// reconnecting the same line gives back the input topology.
pub fn apply_topology_change(
    topology: &NetworkTopology,
    disconnect: (usize, usize),
    connect: NewBranch,
) -> Result<NetworkTopology> {
    let mut branches = topology.branches.clone();
    let (a, b) = disconnect;
    let removed = branches
        .iter_mut()
        .find(|br| br.is_connected() && br.joins(a, b))
        .ok_or_else(|| Error::InvalidNetwork(format!("no connected branch {a}-{b} to disconnect")))?;
    removed.status = BranchStatus::Disconnected;

    let n = topology.bus_count();
    if connect.from == 0 || connect.from > n || connect.to == 0 || connect.to > n {
        return Err(Error::InvalidNetwork(format!(
            "new branch {}-{} references an unknown bus",
            connect.from, connect.to
        )));
    }
    let same_params = |br: &Branch| {
        br.from == connect.from
            && br.to == connect.to
            && br.r == connect.r
            && br.x == connect.x
            && br.b == connect.b
    };
    if let Some(existing) = branches.iter_mut().find(|br| !br.is_connected() && same_params(br)) {
        existing.status = BranchStatus::Connected;
    } else {
        let circuit = branches
            .iter()
            .filter(|br| br.joins(connect.from, connect.to))
            .map(|br| br.circuit)
            .max()
            .map_or(1, |c| c + 1);
        branches.push(Branch {
            circuit,
            ..Branch::new(connect.from, connect.to, connect.r, connect.x, connect.b)
        });
    }
    NetworkTopology::new(topology.buses.clone(), branches)
}

const IEEE14_JSON: &str = include_str!("../../data/ieee14.json");

/// The IEEE 14-bus test case (100 MVA base, transformer taps omitted).
pub fn ieee14() -> NetworkTopology {
    NetworkTopology::from_json(IEEE14_JSON).expect("bundled IEEE 14-bus case is valid")
}

/// Line swaps defining topologies 1..=4: (disconnected pair, connected pair).
pub const TOPOLOGY_CHANGES: [((usize, usize), (usize, usize)); 4] =
    [((5, 6), (1, 6)), ((6, 13), (6, 14)), ((4, 9), (4, 10)), ((2, 4), (3, 5))];

/// Topology `id` of the IEEE 14-bus family: 0 is the base case, 1..=4 apply
/// one line swap each. The connected line reuses the impedance of the line it
/// replaces.
pub fn standard_topology(id: usize) -> Result<NetworkTopology> {
    let base = ieee14();
    if id == 0 {
        return Ok(base);
    }
    let ((da, db), (ca, cb)) = *TOPOLOGY_CHANGES
        .get(id - 1)
        .ok_or_else(|| Error::InvalidNetwork(format!("unknown topology id {id}")))?;
    let old = base
        .branches()
        .iter()
        .find(|br| br.joins(da, db))
        .expect("topology change references a base-case line");
    apply_topology_change(
        &base,
        (da, db),
        NewBranch {
            from: ca,
            to: cb,
            r: old.r,
            x: old.x,
            b: old.b,
        },
    )
}

pub fn standard_topologies() -> Vec<NetworkTopology> {
    (0..=TOPOLOGY_CHANGES.len())
        .map(|id| standard_topology(id).expect("standard topologies are valid"))
        .collect()
}
