use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::topology::NetworkTopology;
use crate::error::{Error, Result};

/// Default measurement noise standard deviation (per-unit).
pub const DEFAULT_SIGMA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementKind {
    V,
    Pinj,
    Qinj,
    Pflow,
    Qflow,
}

impl MeasurementKind {
    pub fn is_flow(self) -> bool {
        matches!(self, MeasurementKind::Pflow | MeasurementKind::Qflow)
    }

    fn prefix(self) -> &'static str {
        match self {
            MeasurementKind::V => "V",
            MeasurementKind::Pinj => "Pinj",
            MeasurementKind::Qinj => "Qinj",
            MeasurementKind::Pflow => "Pflow",
            MeasurementKind::Qflow => "Qflow",
        }
    }
}

/// One meter. `bus` is the 1-based metered bus (the sending end for flows);
/// `branch` indexes `NetworkTopology::branches()` for flow meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub bus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<usize>,
    pub sigma: f64,
}

/// Human-readable meter address: `V3`, `Pinj14`, `Qflow4-2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeasurementRef {
    pub kind: MeasurementKind,
    pub bus: usize,
    pub to: Option<usize>,
}

impl fmt::Display for MeasurementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to {
            Some(to) => write!(f, "{}{}-{}", self.kind.prefix(), self.bus, to),
            None => write!(f, "{}{}", self.kind.prefix(), self.bus),
        }
    }
}

impl FromStr for MeasurementRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad measurement reference '{s}'"));
        let kinds = [
            MeasurementKind::Pflow,
            MeasurementKind::Qflow,
            MeasurementKind::Pinj,
            MeasurementKind::Qinj,
            MeasurementKind::V,
        ];
        let kind = kinds
            .into_iter()
            .find(|k| s.starts_with(k.prefix()))
            .ok_or_else(bad)?;
        let rest = &s[kind.prefix().len()..];
        if kind.is_flow() {
            let (a, b) = rest.split_once('-').ok_or_else(bad)?;
            Ok(Self {
                kind,
                bus: a.parse().map_err(|_| bad())?,
                to: Some(b.parse().map_err(|_| bad())?),
            })
        } else {
            Ok(Self {
                kind,
                bus: rest.parse().map_err(|_| bad())?,
                to: None,
            })
        }
    }
}

impl Serialize for MeasurementRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MeasurementRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered meter list; its order is the row order of z, R and H.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    measurements: Vec<Measurement>,
}

impl MeasurementPlan {
    pub fn new(measurements: Vec<Measurement>, topology: &NetworkTopology) -> Result<Self> {
        let plan = Self { measurements };
        plan.validate(topology)?;
        Ok(plan)
    }

    /// Plan without the redundancy check, for internal square systems such as
    /// the power-flow mismatch equations.
    pub(crate) fn unchecked(measurements: Vec<Measurement>) -> Self {
        Self { measurements }
    }

    /// V, P and Q injection at every bus, then P/Q flows at both ends of every
    /// connected branch.
    pub fn full(topology: &NetworkTopology, sigma: f64) -> Self {
        let n = topology.bus_count();
        let mut ms = Vec::with_capacity(3 * n + 4 * topology.branches().len());
        for kind in [MeasurementKind::V, MeasurementKind::Pinj, MeasurementKind::Qinj] {
            ms.extend((1..=n).map(|bus| Measurement {
                kind,
                bus,
                branch: None,
                sigma,
            }));
        }
        for (k, br) in topology.connected_branches() {
            for (bus, kind) in [
                (br.from, MeasurementKind::Pflow),
                (br.from, MeasurementKind::Qflow),
                (br.to, MeasurementKind::Pflow),
                (br.to, MeasurementKind::Qflow),
            ] {
                ms.push(Measurement {
                    kind,
                    bus,
                    branch: Some(k),
                    sigma,
                });
            }
        }
        Self { measurements: ms }
    }

    pub fn validate(&self, topology: &NetworkTopology) -> Result<()> {
        let n = topology.bus_count();
        for (i, m) in self.measurements.iter().enumerate() {
            if m.bus == 0 || m.bus > n {
                return Err(Error::InvalidNetwork(format!("measurement {i} references bus {}", m.bus)));
            }
            if !(m.sigma >= 0.0) {
                return Err(Error::InvalidNetwork(format!("measurement {i} has invalid sigma")));
            }
            match (m.kind.is_flow(), m.branch) {
                (true, Some(k)) => {
                    let br = topology.branches().get(k).ok_or_else(|| {
                        Error::InvalidNetwork(format!("measurement {i} references branch {k}"))
                    })?;
                    if !br.is_connected() {
                        return Err(Error::InvalidNetwork(format!(
                            "measurement {i} meters disconnected branch {}-{}",
                            br.from, br.to
                        )));
                    }
                    if br.from != m.bus && br.to != m.bus {
                        return Err(Error::InvalidNetwork(format!(
                            "measurement {i}: bus {} is not an end of branch {}-{}",
                            m.bus, br.from, br.to
                        )));
                    }
                }
                (true, None) => {
                    return Err(Error::InvalidNetwork(format!("flow measurement {i} has no branch")));
                }
                (false, _) => {}
            }
        }
        let dim = 2 * n - 1;
        if self.measurements.len() < dim {
            return Err(Error::Observability(format!(
                "{} measurements for {dim} states",
                self.measurements.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn variances(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.sigma * m.sigma).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.sigma).collect()
    }

    /// Replaces every sigma, e.g. for a noise-free reference plan.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            measurements: self
                .measurements
                .iter()
                .map(|m| Measurement { sigma, ..m.clone() })
                .collect(),
        }
    }

    pub fn reference(&self, i: usize, topology: &NetworkTopology) -> MeasurementRef {
        let m = &self.measurements[i];
        let to = m.branch.map(|k| {
            let br = &topology.branches()[k];
            if br.from == m.bus {
                br.to
            } else {
                br.from
            }
        });
        MeasurementRef {
            kind: m.kind,
            bus: m.bus,
            to,
        }
    }

    /// First row whose meter matches `r`.
    pub fn index_of(&self, r: MeasurementRef, topology: &NetworkTopology) -> Option<usize> {
        (0..self.len()).find(|&i| self.reference(i, topology) == r)
    }

    /// Row of a nodal (V / Pinj / Qinj) meter at 1-based `bus`.
    pub fn nodal_index(&self, kind: MeasurementKind, bus: usize) -> Option<usize> {
        debug_assert!(!kind.is_flow());
        self.measurements.iter().position(|m| m.kind == kind && m.bus == bus)
    }
}
