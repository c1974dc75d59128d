use nalgebra::DMatrix;
use num_complex::Complex64;

use super::topology::NetworkTopology;

/// Bus admittance matrix of a (validated, hence connected) topology.
///
/// Diagonal: incident series admittances, half of each incident line's
/// charging and the bus shunt. Off-diagonal: minus the series admittance of
/// the connecting branches. Disconnected branches contribute nothing.
pub fn build_admittance(topology: &NetworkTopology) -> DMatrix<Complex64> {
    let n = topology.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (_, br) in topology.connected_branches() {
        let (i, j) = (br.from - 1, br.to - 1);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_charging = Complex64::new(0.0, br.b / 2.0);
        y[(i, i)] += ys + half_charging;
        y[(j, j)] += ys + half_charging;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    for (k, bus) in topology.buses().iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.shunt_g, bus.shunt_b);
    }
    y
}

/// Real and imaginary parts of the admittance matrix with per-row sparsity.
#[derive(Clone, Debug)]
pub struct Admittance {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Off-diagonal nonzero columns per row.
    pub neighbors: Vec<Vec<usize>>,
}

impl Admittance {
    pub fn new(topology: &NetworkTopology) -> Self {
        let y = build_admittance(topology);
        let n = y.nrows();
        let g = y.map(|c| c.re);
        let b = y.map(|c| c.im);
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && y[(i, j)].norm() > 0.0).collect())
            .collect();
        Self { g, b, neighbors }
    }
}
