use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::MeasurementPlan;

/// observed_i = clean_i + σ_i ε_i with ε_i standard normal drawn from `rng`.
pub fn add_noise_with<R: Rng + ?Sized>(clean: &DVector<f64>, plan: &MeasurementPlan, rng: &mut R) -> DVector<f64> {
    let mut out = clean.clone();
    for (v, m) in out.iter_mut().zip(plan.measurements()) {
        let e: f64 = StandardNormal.sample(rng);
        *v += m.sigma * e;
    }
    out
}

pub fn add_measurement_noise(clean: &DVector<f64>, plan: &MeasurementPlan, seed: u64) -> DVector<f64> {
    add_noise_with(clean, plan, &mut ChaCha8Rng::seed_from_u64(seed))
}
