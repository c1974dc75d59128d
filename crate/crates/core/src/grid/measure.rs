use nalgebra::{DMatrix, DVector};

use super::admittance::Admittance;
use super::plan::{MeasurementKind, MeasurementPlan};
use super::state::{StateLayout, StateVector};
use super::topology::NetworkTopology;

#[derive(Clone, Copy, Debug)]
struct BranchParams {
    from: usize,
    to: usize,
    g: f64,
    b: f64,
    half_charging: f64,
}

/// Precomputed network data for evaluating h(x) and H(x) under one topology.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    layout: StateLayout,
    y: Admittance,
    branches: Vec<Option<BranchParams>>,
}

impl NetworkModel {
    pub fn new(topology: &NetworkTopology) -> Self {
        let branches = topology
            .branches()
            .iter()
            .map(|br| {
                br.is_connected().then(|| {
                    let den = br.r * br.r + br.x * br.x;
                    BranchParams {
                        from: br.from - 1,
                        to: br.to - 1,
                        g: br.r / den,
                        b: -br.x / den,
                        half_charging: br.b / 2.0,
                    }
                })
            })
            .collect();
        Self {
            layout: StateLayout::new(topology.bus_count(), topology.slack_index()),
            y: Admittance::new(topology),
            branches,
        }
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn admittance(&self) -> &Admittance {
        &self.y
    }

    /// Active and reactive injections at zero-based bus `i`.
    pub fn injection(&self, x: &StateVector, i: usize) -> (f64, f64) {
        let (g, b) = (&self.y.g, &self.y.b);
        let vi = x.v(i);
        let mut p = vi * vi * g[(i, i)];
        let mut q = -vi * vi * b[(i, i)];
        for &j in &self.y.neighbors[i] {
            let t = x.theta(i) - x.theta(j);
            let (s, c) = t.sin_cos();
            let vv = vi * x.v(j);
            p += vv * (g[(i, j)] * c + b[(i, j)] * s);
            q += vv * (g[(i, j)] * s - b[(i, j)] * c);
        }
        (p, q)
    }

    fn flow_ends(&self, branch: usize, metered: usize) -> (BranchParams, usize, usize) {
        let br = self.branches[branch].expect("plan validated against topology");
        if br.from == metered {
            (br, br.from, br.to)
        } else {
            (br, br.to, br.from)
        }
    }

    /// Active and reactive flow on `branch` leaving zero-based bus `metered`.
    pub fn flow(&self, x: &StateVector, branch: usize, metered: usize) -> (f64, f64) {
        let (br, i, j) = self.flow_ends(branch, metered);
        let (vi, vj) = (x.v(i), x.v(j));
        let (s, c) = (x.theta(i) - x.theta(j)).sin_cos();
        let p = vi * vi * br.g - vi * vj * (br.g * c + br.b * s);
        let q = -vi * vi * (br.b + br.half_charging) - vi * vj * (br.g * s - br.b * c);
        (p, q)
    }

    /// h(x) in plan order.
    pub fn evaluate(&self, x: &StateVector, plan: &MeasurementPlan) -> DVector<f64> {
        let n = self.layout.n_bus;
        let mut inj: Vec<Option<(f64, f64)>> = vec![None; n];
        let mut out = DVector::zeros(plan.len());
        for (row, m) in plan.measurements().iter().enumerate() {
            let k = m.bus - 1;
            out[row] = match m.kind {
                MeasurementKind::V => x.v(k),
                MeasurementKind::Pinj | MeasurementKind::Qinj => {
                    let (p, q) = *inj[k].get_or_insert_with(|| self.injection(x, k));
                    if m.kind == MeasurementKind::Pinj {
                        p
                    } else {
                        q
                    }
                }
                MeasurementKind::Pflow => self.flow(x, m.branch.unwrap(), k).0,
                MeasurementKind::Qflow => self.flow(x, m.branch.unwrap(), k).1,
            };
        }
        out
    }

    /// Analytic Jacobian of h at `x`; columns follow [`StateLayout`].
    pub fn jacobian(&self, x: &StateVector, plan: &MeasurementPlan) -> DMatrix<f64> {
        let layout = self.layout;
        let mut h = DMatrix::zeros(plan.len(), layout.dim());
        let (g, b) = (&self.y.g, &self.y.b);
        for (row, m) in plan.measurements().iter().enumerate() {
            let i = m.bus - 1;
            let mut set = |bus: usize, d_theta: f64, d_v: f64| {
                if let Some(c) = layout.angle_col(bus) {
                    h[(row, c)] += d_theta;
                }
                h[(row, layout.mag_col(bus))] += d_v;
            };
            match m.kind {
                MeasurementKind::V => set(i, 0.0, 1.0),
                MeasurementKind::Pinj | MeasurementKind::Qinj => {
                    let (p, q) = self.injection(x, i);
                    let vi = x.v(i);
                    let (gii, bii) = (g[(i, i)], b[(i, i)]);
                    if m.kind == MeasurementKind::Pinj {
                        set(i, -q - bii * vi * vi, p / vi + gii * vi);
                    } else {
                        set(i, p - gii * vi * vi, q / vi - bii * vi);
                    }
                    for &j in &self.y.neighbors[i] {
                        let (s, c) = (x.theta(i) - x.theta(j)).sin_cos();
                        let (gij, bij) = (g[(i, j)], b[(i, j)]);
                        let vj = x.v(j);
                        if m.kind == MeasurementKind::Pinj {
                            set(j, vi * vj * (gij * s - bij * c), vi * (gij * c + bij * s));
                        } else {
                            set(j, -vi * vj * (gij * c + bij * s), vi * (gij * s - bij * c));
                        }
                    }
                }
                MeasurementKind::Pflow | MeasurementKind::Qflow => {
                    let (br, i, j) = self.flow_ends(m.branch.unwrap(), i);
                    let (vi, vj) = (x.v(i), x.v(j));
                    let (s, c) = (x.theta(i) - x.theta(j)).sin_cos();
                    let (gs, bs) = (br.g, br.b);
                    if m.kind == MeasurementKind::Pflow {
                        let dt = vi * vj * (gs * s - bs * c);
                        set(i, dt, 2.0 * vi * gs - vj * (gs * c + bs * s));
                        set(j, -dt, -vi * (gs * c + bs * s));
                    } else {
                        let dt = -vi * vj * (gs * c + bs * s);
                        set(
                            i,
                            dt,
                            -2.0 * vi * (bs + br.half_charging) - vj * (gs * s - bs * c),
                        );
                        set(j, -dt, -vi * (gs * s - bs * c));
                    }
                }
            }
        }
        h
    }
}

/// h(x): noiseless measurement values in plan order.
pub fn evaluate_measurements(
    state: &StateVector,
    topology: &NetworkTopology,
    plan: &MeasurementPlan,
) -> DVector<f64> {
    NetworkModel::new(topology).evaluate(state, plan)
}

/// H(x) = ∂h/∂x, m × n.
pub fn measurement_jacobian(
    state: &StateVector,
    topology: &NetworkTopology,
    plan: &MeasurementPlan,
) -> DMatrix<f64> {
    NetworkModel::new(topology).jacobian(state, plan)
}
