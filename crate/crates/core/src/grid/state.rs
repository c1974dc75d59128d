use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column layout of the state vector: `[θ of non-slack buses, V of all buses]`,
/// each block in bus order. Bus arguments are zero-based indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_bus: usize,
    pub slack: usize,
}

impl StateLayout {
    pub fn new(n_bus: usize, slack: usize) -> Self {
        assert!(slack < n_bus);
        Self { n_bus, slack }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_bus - 1
    }

    pub fn angle_col(&self, bus: usize) -> Option<usize> {
        match bus.cmp(&self.slack) {
            std::cmp::Ordering::Less => Some(bus),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(bus - 1),
        }
    }

    pub fn mag_col(&self, bus: usize) -> usize {
        self.n_bus - 1 + bus
    }

    pub fn state_ref(&self, col: usize) -> StateRef {
        let n_ang = self.n_bus - 1;
        if col < n_ang {
            let bus = if col < self.slack { col } else { col + 1 };
            StateRef::Angle(bus + 1)
        } else {
            StateRef::Magnitude(col - n_ang + 1)
        }
    }

    /// Column of a state reference, or `None` for the slack angle or an
    /// unknown bus.
    pub fn col(&self, state: StateRef) -> Option<usize> {
        match state {
            StateRef::Angle(id) if (1..=self.n_bus).contains(&id) => self.angle_col(id - 1),
            StateRef::Magnitude(id) if (1..=self.n_bus).contains(&id) => Some(self.mag_col(id - 1)),
            _ => None,
        }
    }
}

/// A single state variable addressed by 1-based bus id. Serialized as
/// `theta<id>` or `V<id>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateRef {
    Angle(usize),
    Magnitude(usize),
}

impl StateRef {
    pub fn bus(&self) -> usize {
        match *self {
            StateRef::Angle(b) | StateRef::Magnitude(b) => b,
        }
    }
}

impl fmt::Display for StateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateRef::Angle(b) => write!(f, "theta{b}"),
            StateRef::Magnitude(b) => write!(f, "V{b}"),
        }
    }
}

impl FromStr for StateRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad state reference '{s}'")))
        };
        if let Some(rest) = s.strip_prefix("theta") {
            Ok(StateRef::Angle(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix('V') {
            Ok(StateRef::Magnitude(parse(rest)?))
        } else {
            Err(Error::Parse(format!("bad state reference '{s}'")))
        }
    }
}

impl Serialize for StateRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Bus voltage magnitudes and phase angles; the slack angle is the zero
/// reference and not part of the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    layout: StateLayout,
    angles: Vec<f64>,
    magnitudes: Vec<f64>,
}

impl StateVector {
    pub fn flat(layout: StateLayout) -> Self {
        Self {
            layout,
            angles: vec![0.0; layout.n_bus - 1],
            magnitudes: vec![1.0; layout.n_bus],
        }
    }

    pub fn from_parts(layout: StateLayout, angles: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if angles.len() != layout.n_bus - 1 {
            return Err(Error::DimensionMismatch {
                expected: layout.n_bus - 1,
                actual: angles.len(),
            });
        }
        if magnitudes.len() != layout.n_bus {
            return Err(Error::DimensionMismatch {
                expected: layout.n_bus,
                actual: magnitudes.len(),
            });
        }
        Ok(Self {
            layout,
            angles,
            magnitudes,
        })
    }

    pub fn from_vector(layout: StateLayout, x: &DVector<f64>) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                actual: x.len(),
            });
        }
        let n_ang = layout.n_bus - 1;
        Ok(Self {
            layout,
            angles: x.rows(0, n_ang).iter().copied().collect(),
            magnitudes: x.rows(n_ang, layout.n_bus).iter().copied().collect(),
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.layout.dim(),
            self.angles.iter().chain(self.magnitudes.iter()).copied(),
        )
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Angle of zero-based bus `k` (zero at the slack).
    pub fn theta(&self, k: usize) -> f64 {
        self.layout.angle_col(k).map_or(0.0, |c| self.angles[c])
    }

    pub fn v(&self, k: usize) -> f64 {
        self.magnitudes[k]
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn get(&self, state: StateRef) -> Option<f64> {
        self.layout.col(state).map(|c| self.component(c))
    }

    pub fn component(&self, col: usize) -> f64 {
        let n_ang = self.layout.n_bus - 1;
        if col < n_ang {
            self.angles[col]
        } else {
            self.magnitudes[col - n_ang]
        }
    }
}
