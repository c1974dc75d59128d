use gridad::grid::{standard_topology, MeasurementPlan, NetworkModel, StateRef, StateVector, DEFAULT_SIGMA};
use gridad::sim::{
    add_measurement_noise, build_stealth_attack, read_trace, write_trace, Anomaly, AnomalySpec, LoadProfile, Scenario,
};
use gridad::sim::{generate_trajectory, solve_power_flow};
use gridad::wls::{estimate_wls, WlsConfig};
use proptest::prelude::*;

#[test]
fn noise_has_zero_mean_and_plan_sigma() {
    let t = standard_topology(0).unwrap();
    let plan = MeasurementPlan::full(&t, DEFAULT_SIGMA);
    let clean = nalgebra::DVector::from_element(plan.len(), 1.0);
    let mut samples = Vec::new();
    for seed in 0..200 {
        let z = add_measurement_noise(&clean, &plan, seed);
        samples.extend(z.iter().map(|v| (v - 1.0) / DEFAULT_SIGMA));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let kurt = samples.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / n / (var * var);
    // n = 24 400: se(mean) ≈ 0.0064, se(var) ≈ 0.009, se(kurtosis) ≈ 0.031.
    assert!(mean.abs() < 0.03, "mean {mean}");
    assert!((var - 1.0).abs() < 0.04, "variance {var}");
    assert!((kurt - 3.0).abs() < 0.15, "kurtosis {kurt}");
}

fn stealth_case() -> impl Strategy<Value = (usize, Vec<(usize, bool, f64)>, u64)> {
    (
        0usize..5,
        prop::collection::vec((2usize..=14, any::<bool>(), 0.01f64..0.1), 1..=4),
        any::<u64>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stealth_attack_preserves_the_residual((topology, targets, seed) in stealth_case()) {
        let t = standard_topology(topology).unwrap();
        let model = NetworkModel::new(&t);
        let plan = MeasurementPlan::full(&t, DEFAULT_SIGMA);
        let truth = solve_power_flow(&t, &t.base_loads()).unwrap().state;
        let z = add_measurement_noise(&model.evaluate(&truth, &plan), &plan, seed);
        let flat = StateVector::flat(model.layout());
        let clean = estimate_wls(&z, &plan, &model, &flat, &WlsConfig::default()).unwrap();

        let mut offsets: Vec<(StateRef, f64)> = Vec::new();
        for (bus, angle, c) in targets {
            let s = if angle { StateRef::Angle(bus) } else { StateRef::Magnitude(bus) };
            if !offsets.iter().any(|(o, _)| *o == s) {
                offsets.push((s, c));
            }
        }
        let c_max = offsets.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        let (a, shifted) = build_stealth_attack(&clean.estimate, &offsets, &t, &model, &plan).unwrap();
        let attacked_z = &z + &a;

        // At the shifted state the attacked residual is the clean one.
        let residual = &attacked_z - model.evaluate(&shifted, &plan);
        prop_assert!((&residual - &clean.residuals).amax() < 1e-12);

        // The shifted state is feasible for the attacked problem, so the
        // re-estimated objective cannot exceed the clean one. Under the AC
        // model it is not the exact minimizer and J drops slightly.
        let attacked = estimate_wls(&attacked_z, &plan, &model, &flat, &WlsConfig::default()).unwrap();
        prop_assert!(attacked.objective <= clean.objective + 1e-8,
            "J {} vs {}", attacked.objective, clean.objective);
        prop_assert!(clean.objective - attacked.objective < 0.01 * clean.objective);
        let drift = (attacked.estimate.to_vector() - shifted.to_vector()).amax();
        prop_assert!(drift < 0.05 * c_max, "drift {drift} for c {c_max}");
    }
}

#[test]
fn traces_are_reproducible_from_their_seed() {
    let t = standard_topology(3).unwrap();
    let profile = LoadProfile::ramp(14, 12, 1.0, 0.97);
    let spec = AnomalySpec {
        anomaly: Anomaly::Fdia {
            states: vec![StateRef::Magnitude(9)],
            offsets: vec![0.04],
        },
        onset: 6,
        clear: None,
    };
    let a = generate_trajectory(&t, &profile, std::slice::from_ref(&spec), 99).unwrap();
    let b = generate_trajectory(&t, &profile, std::slice::from_ref(&spec), 99).unwrap();
    let c = generate_trajectory(&t, &profile, std::slice::from_ref(&spec), 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.steps[0].observed, c.steps[0].observed);
    // The attack leaves the physical state alone.
    let clean = generate_trajectory(&t, &profile, &[], 99).unwrap();
    for (x, y) in a.steps.iter().zip(&clean.steps) {
        assert_eq!(x.true_state, y.true_state);
    }
    assert_eq!(a.steps[5].observed, clean.steps[5].observed);
    assert_ne!(a.steps[6].observed, clean.steps[6].observed);
}

#[test]
fn trace_files_round_trip_and_reject_tampering() {
    let t = standard_topology(0).unwrap();
    let spec = AnomalySpec {
        anomaly: Anomaly::Slc {
            buses: vec![9, 14],
            shed: vec![0.5, 0.25],
        },
        onset: 3,
        clear: Some(6),
    };
    let scenario = Scenario::new(0, t, LoadProfile::ramp(14, 8, 1.0, 0.99), vec![spec], 4);
    let trace = scenario.generate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&trace, &path, "cafe").unwrap();
    let (back, sidecar) = read_trace(&path).unwrap();
    assert_eq!(sidecar.config_hash, "cafe");
    assert_eq!(back.steps.len(), trace.steps.len());
    for (x, y) in back.steps.iter().zip(&trace.steps) {
        assert_eq!(x.active, y.active);
        // Nine significant digits survive the text format.
        assert!((&x.observed - &y.observed).amax() < 1e-8);
    }
    assert_eq!(back.label(4), "slc");
    assert_eq!(back.label_targets(4), "bus9;bus14");

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\n4,slc", "\n4,normal", 1)).unwrap();
    let err = read_trace(&path).unwrap_err().to_string();
    assert!(err.contains("line"), "{err}");
}
