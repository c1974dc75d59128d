//! Ground-truth trajectories, measurement noise and anomaly injection.

mod anomaly;
pub mod catalog;
mod io;
mod noise;
mod powerflow;
mod seed;
mod trajectory;

pub use anomaly::{
    apply_attack, apply_sudden_load_change, build_stealth_attack, inject_bad_data, Anomaly,
    AnomalyKind, AnomalySpec, MAX_ATTACKED_BUSES,
};
pub use io::{read_trace, write_trace, TraceSidecar};
pub use noise::{add_measurement_noise, add_noise_with};
pub use powerflow::{solve_power_flow, PowerFlow, PowerFlowSolution, PF_MAX_ITERATIONS, PF_TOLERANCE};
pub use seed::{derive_seed, splitmix64};
pub use trajectory::{
    generate_trajectory, LoadProfile, ProfileConfig, Scenario, ScenarioTrace, TraceStep,
};
