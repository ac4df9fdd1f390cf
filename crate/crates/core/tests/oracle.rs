use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use bloch_pulse::geometry::rotate;
use bloch_pulse::oracle::{
    direct_discrete_minimizer, directional_change, off_axis_check, scalar_cost, scaling_exponent,
    verify_fluence_minimum, verify_mixed_minimum, verify_rate_minimum, Criterion, Endpoints,
    PerturbationBasis, PerturbedPulse, DEFAULT_AMPLITUDE_FRACTION, DEFAULT_MODES, DEFAULT_SEED,
};
use bloch_pulse::pulses::{pulse_b1, pulse_b2, pulse_b3, pulse_ramped, pulse_sine, ScalarPulse};
use bloch_pulse::{UnitAxis, Vec3};

fn fourier(angle: f64) -> PerturbationBasis {
    PerturbationBasis::fourier(DEFAULT_MODES, DEFAULT_AMPLITUDE_FRACTION * angle)
}

fn vanishing(angle: f64) -> PerturbationBasis {
    PerturbationBasis::endpoint_vanishing(DEFAULT_MODES, DEFAULT_AMPLITUDE_FRACTION * angle)
}

#[test]
fn fluence_oracle_thousand_trials() {
    for theta in [FRAC_PI_4, FRAC_PI_2, 2.5] {
        let v = verify_fluence_minimum(theta, 0, &fourier(theta), 1000, DEFAULT_SEED).unwrap();
        assert!(v.passed());
        assert!(v.worst_violation <= 1e-9);
        assert!(v.min_perturbed_cost > v.base_cost);
        assert!((v.base_cost - theta * theta).abs() < 1e-10);
        assert_eq!(v.certificate.len(), 16);
        assert!(v.certificate.windows(2).all(|w| w[0].cost <= w[1].cost));
    }
}

#[test]
fn rate_and_mixed_oracles_thousand_trials() {
    let theta = FRAC_PI_2;
    let r = verify_rate_minimum(theta, 0, &vanishing(theta), 1000, DEFAULT_SEED).unwrap();
    assert!(r.passed() && r.worst_violation <= 1e-8);
    let m =
        verify_mixed_minimum(theta, 0, 1.0, 5.0, &vanishing(theta), 1000, DEFAULT_SEED).unwrap();
    assert!(m.passed() && m.worst_violation <= 1e-8);
}

#[test]
fn oracle_is_reproducible() {
    let a = verify_fluence_minimum(1.0, 0, &fourier(1.0), 200, 9).unwrap();
    let b = verify_fluence_minimum(1.0, 0, &fourier(1.0), 200, 9).unwrap();
    assert_eq!(a, b);
    let c = verify_fluence_minimum(1.0, 0, &fourier(1.0), 200, 10).unwrap();
    assert_ne!(a.certificate, c.certificate);
}

#[test]
fn single_mode_increment_is_its_energy() {
    // c √2 cos 2πt is orthonormal: Δ fluence = c²
    let basis = PerturbationBasis::fourier(2, 1.0);
    for c in [0.01, 0.3, 2.0] {
        let p = PerturbedPulse {
            base: pulse_b1(1.0, 0).unwrap(),
            basis: &basis,
            coefficients: vec![c, 0.0],
        };
        let d = scalar_cost(Criterion::Fluence, &p, 2000) - 1.0;
        assert!((d - c * c).abs() < 1e-10);
    }
}

#[test]
fn sine_over_b2_rate_ratio() {
    for theta in [FRAC_PI_4, FRAC_PI_2, 2.5] {
        let ratio = scalar_cost(Criterion::Rate, &pulse_sine(theta, 0).unwrap(), 2000)
            / scalar_cost(Criterion::Rate, &pulse_b2(theta, 0).unwrap(), 2000);
        let expected = PI.powi(4) / 96.0;
        assert!(((ratio - expected) / expected).abs() < 1e-4);
    }
}

#[test]
fn cost_increment_scales_quadratically() {
    let basis = vanishing(1.0);
    let dir = PerturbedPulse {
        base: pulse_b2(0.0, 0).unwrap(),
        basis: &basis,
        coefficients: vec![0.3, -0.2, 0.1, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    };
    let eps = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let b2 = pulse_b2(FRAC_PI_2, 0).unwrap();
    let (deltas, slope) = scaling_exponent(Criterion::Rate, &b2, &dir, &eps);
    assert!(deltas.iter().all(|d| *d > 0.0));
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");

    let b3 = pulse_b3(FRAC_PI_2, 0, 5.0).unwrap();
    let mixed = Criterion::Mixed { a: 1.0, omega: 5.0 };
    let (_, slope) = scaling_exponent(mixed, &b3, &dir, &eps);
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");

    // off-optimum, the increment is linear
    let sine = pulse_sine(FRAC_PI_2, 0).unwrap();
    let (_, slope) = scaling_exponent(Criterion::Rate, &sine, &dir, &eps);
    assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn moving_away_from_optimum_costs_more() {
    let theta = FRAC_PI_2;
    let b2 = pulse_b2(theta, 0).unwrap();
    let sine = pulse_sine(theta, 0).unwrap();
    for eps in [-0.1, 0.01, 0.1, 0.5] {
        assert!(directional_change(Criterion::Rate, &b2, &sine, eps) > 0.0);
    }
    // from the sine pulse, heading toward B2 lowers the rate cost
    assert!(directional_change(Criterion::Rate, &sine, &b2, 0.1) < 0.0);

    let mixed = Criterion::Mixed { a: 1.0, omega: 5.0 };
    let b3 = pulse_b3(theta, 0, 5.0).unwrap();
    for other in [b2, sine, pulse_ramped(theta, 0, 0.2).unwrap()] {
        assert!(directional_change(mixed, &b3, &other, 0.1) > 0.0);
    }
    let b1 = pulse_b1(theta, 0).unwrap();
    assert!(directional_change(Criterion::Fluence, &b1, &b2, 0.1) > 0.0);
}

#[test]
fn branches_have_separate_minima() {
    let theta = 1.0;
    for n in [0, 1] {
        let angle = theta + 2.0 * PI * n as f64;
        let v = verify_fluence_minimum(theta, n, &fourier(angle), 300, DEFAULT_SEED).unwrap();
        assert!(v.passed());
        assert!((v.base_cost - angle * angle).abs() < 1e-9);
    }
}

#[test]
fn off_axis_perturbations_do_not_help() {
    let theta = FRAC_PI_2;
    let s_f = rotate(Vec3::Z, UnitAxis::Y, theta);
    let basis = PerturbationBasis::fourier(DEFAULT_MODES, 0.05);
    let check = off_axis_check(
        Criterion::Fluence,
        pulse_b1(theta, 0).unwrap(),
        Vec3::Z,
        s_f,
        &basis,
        20,
        DEFAULT_SEED,
        400,
    )
    .unwrap();
    assert_eq!(check.n_trials, 20);
    assert!(check.worst_violation <= 1e-9);
    assert!(check.max_arrival_error > 0.0);

    let basis = PerturbationBasis::endpoint_vanishing(DEFAULT_MODES, 0.05);
    let check = off_axis_check(
        Criterion::Rate,
        pulse_b2(theta, 0).unwrap(),
        Vec3::Z,
        s_f,
        &basis,
        20,
        DEFAULT_SEED,
        400,
    )
    .unwrap();
    assert!(check.worst_violation <= 1e-8);
}

#[test]
fn qp_fluence_minimizer_is_flat() {
    for (theta, n) in [(0.1, 0), (FRAC_PI_2, 0), (2.5, -1), (1.0, 2)] {
        let angle = theta + 2.0 * PI * n as f64;
        for m in [3, 16, 64] {
            let d = direct_discrete_minimizer(Criterion::Fluence, theta, n, Endpoints::Free, m)
                .unwrap();
            assert!(d.values.iter().all(|v| (v - angle).abs() <= 1e-10));
            assert!((d.cost - angle * angle).abs() < 1e-10);
        }
    }
}

fn qp_errors<P: ScalarPulse>(criterion: Criterion, exact: &P, theta: f64) -> Vec<f64> {
    [9, 17, 33]
        .iter()
        .map(|&m| {
            direct_discrete_minimizer(criterion, theta, 0, Endpoints::Vanishing, m)
                .unwrap()
                .max_error(exact)
        })
        .collect()
}

#[test]
fn qp_rate_and_mixed_converge_at_second_order() {
    let theta = FRAC_PI_2;
    let e = qp_errors(Criterion::Rate, &pulse_b2(theta, 0).unwrap(), theta);
    for w in e.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "rate errors {e:?}");
    }
    let mixed = Criterion::Mixed { a: 1.0, omega: 5.0 };
    let e = qp_errors(mixed, &pulse_b3(theta, 0, 5.0).unwrap(), theta);
    for w in e.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "mixed errors {e:?}");
    }
}
