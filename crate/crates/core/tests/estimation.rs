use gridad::grid::{standard_topologies, MeasurementPlan, NetworkModel, StateVector, DEFAULT_SIGMA};
use gridad::sim::{add_measurement_noise, solve_power_flow};
use gridad::wls::{
    chi_square_test, chi_square_threshold, estimate_wls, largest_normalized_residual, normalized_residuals,
    WlsConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// χ² CDF by composite Simpson integration of the density. With the
/// substitution x = u² the integrand 2u·f(u²) is smooth at zero for every
/// degree of freedom.
fn chi_square_cdf_by_quadrature(dof: usize, x: f64) -> f64 {
    let k = dof as f64 / 2.0;
    let ln_norm = k * std::f64::consts::LN_2 + ln_gamma(k);
    let integrand = |u: f64| {
        if u == 0.0 {
            return if dof == 1 { 2.0 * (-ln_norm).exp() } else { 0.0 };
        }
        let t = u * u;
        2.0 * u * ((k - 1.0) * t.ln() - t / 2.0 - ln_norm).exp()
    };
    let n = 200_000;
    let upper = x.sqrt();
    let h = upper / n as f64;
    let mut sum = integrand(0.0) + integrand(upper);
    for i in 1..n {
        sum += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn chi_square_inverse_matches_quadrature() {
    for dof in [1, 2, 3, 5, 10, 27, 95, 200] {
        for p in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let x = chi_square_threshold(dof, p).unwrap();
            let cdf = chi_square_cdf_by_quadrature(dof, x);
            let rel = (cdf - p).abs() / p;
            assert!(rel < 1e-6, "dof {dof}, p {p}: quadrature CDF {cdf}");
        }
    }
}

#[test]
fn chi_square_inverse_frozen_values() {
    // Reference quantiles from an independent statistics library.
    let cases = [
        (1, 0.99, 6.634_896_601_021_214),
        (2, 0.95, 5.991_464_547_107_979),
        (5, 0.99, 15.086_272_469_388_99),
        (27, 0.99, 46.962_942_124_751_44),
        (95, 0.99, 129.972_678_726_798_76),
        (95, 0.95, 118.751_611_753_367_36),
        (200, 0.999, 267.540_527_822_757_2),
    ];
    for (dof, p, expected) in cases {
        let x = chi_square_threshold(dof, p).unwrap();
        assert!((x - expected).abs() / expected < 1e-10, "dof {dof}, p {p}: {x}");
    }
}

struct Bench {
    model: NetworkModel,
    plan: MeasurementPlan,
    truth: StateVector,
}

fn bench(topology: usize) -> Bench {
    let t = &standard_topologies()[topology];
    let sol = solve_power_flow(t, &t.base_loads()).unwrap();
    Bench {
        model: NetworkModel::new(t),
        plan: MeasurementPlan::full(t, DEFAULT_SIGMA),
        truth: sol.state,
    }
}

#[test]
fn wls_objective_follows_chi_square_under_noise() {
    let b = bench(0);
    let clean = b.model.evaluate(&b.truth, &b.plan);
    let flat = StateVector::flat(b.model.layout());
    let trials = 400;
    let (mut sum_j, mut flags) = (0.0, 0);
    let mut err_sq = vec![0.0; b.truth.dim()];
    for seed in 0..trials {
        let z = add_measurement_noise(&clean, &b.plan, seed);
        let sol = estimate_wls(&z, &b.plan, &b.model, &flat, &WlsConfig::default()).unwrap();
        assert_eq!(sol.degrees_of_freedom(), 95);
        sum_j += sol.objective;
        flags += usize::from(chi_square_test(&sol, 0.99).unwrap().flag);
        let e = sol.estimate.to_vector() - b.truth.to_vector();
        for (acc, v) in err_sq.iter_mut().zip(e.iter()) {
            *acc += v * v;
        }
    }
    // E[J] = 95, sd(J) = √190 ≈ 13.8; the mean over 400 draws has sd ≈ 0.69.
    let mean_j = sum_j / trials as f64;
    assert!((mean_j - 95.0).abs() < 3.0, "mean J {mean_j}");
    let rate = flags as f64 / trials as f64;
    assert!(rate < 0.03, "false alarm rate {rate}");
    for (i, acc) in err_sq.iter().enumerate() {
        let rmse = (acc / trials as f64).sqrt();
        assert!(rmse < 0.01, "state {i}: rmse {rmse}");
    }
}

#[test]
fn lnr_identifies_gross_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hits = 0;
    let trials = 200;
    for trial in 0..trials {
        let b = bench(trial % 5);
        let clean = b.model.evaluate(&b.truth, &b.plan);
        let flat = StateVector::flat(b.model.layout());
        let mut z = add_measurement_noise(&clean, &b.plan, 1000 + trial as u64);
        let probe = estimate_wls(&z, &b.plan, &b.model, &flat, &WlsConfig::default()).unwrap();
        // Only redundant meters can be identified.
        let redundant: Vec<usize> = normalized_residuals(&probe)
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|_| i))
            .collect();
        let target = redundant[rng.random_range(0..redundant.len())];
        let size = rng.random_range(10.0..20.0) * DEFAULT_SIGMA;
        z[target] += if rng.random_bool(0.5) { size } else { -size };
        let sol = estimate_wls(&z, &b.plan, &b.model, &flat, &WlsConfig::default()).unwrap();
        let lnr = largest_normalized_residual(&sol, 3.0).unwrap();
        if lnr.suspect && lnr.index == target {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

#[test]
fn residual_covariance_is_a_projection_of_r() {
    // Ω R⁻¹ is idempotent with trace m − n.
    let b = bench(2);
    let z = b.model.evaluate(&b.truth, &b.plan);
    let sol = estimate_wls(&z, &b.plan, &b.model, &StateVector::flat(b.model.layout()), &WlsConfig::default()).unwrap();
    let r_inv = 1.0 / (DEFAULT_SIGMA * DEFAULT_SIGMA);
    let s = &sol.residual_covariance * r_inv;
    let err = (&s * &s - &s).amax();
    assert!(err < 1e-9, "{err}");
    assert!((s.trace() - 95.0).abs() < 1e-8);
}
