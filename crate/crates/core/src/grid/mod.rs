//! AC network model: topology, admittance matrix, state layout, measurement
//! plans and the nonlinear measurement function with its Jacobian.

mod admittance;
mod measure;
mod plan;
mod state;
mod topology;

pub use admittance::{build_admittance, Admittance};
pub use measure::{evaluate_measurements, measurement_jacobian, NetworkModel};
pub use plan::{Measurement, MeasurementKind, MeasurementPlan, MeasurementRef, DEFAULT_SIGMA};
pub use state::{StateLayout, StateRef, StateVector};
pub use topology::{
    apply_topology_change, ieee14, standard_topologies, standard_topology, Branch, BranchStatus,
    Bus, BusKind, NetworkTopology, NewBranch, TOPOLOGY_CHANGES,
};
