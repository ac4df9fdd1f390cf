use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use bloch_pulse::costs::{
    self, field_magnitude_integral, fluence, geometric_cost, mixed_cost, path_length, rate_cost,
};
use bloch_pulse::dynamics::{invert_bloch, propagate};
use bloch_pulse::geometry::rotate;
use bloch_pulse::pulses::{
    pulse_b1, pulse_b2, pulse_b3, pulse_constant_norm, pulse_ramped, pulse_sine, synthesize,
    ControlSchedule, Family, FnField, Profile, PulseSpec,
};
use bloch_pulse::{UnitAxis, Vec3};

const THETAS: [f64; 4] = [0.1, FRAC_PI_4, FRAC_PI_2, 2.5];

fn sched(p: Profile) -> ControlSchedule {
    ControlSchedule::from_field(p.along(UnitAxis::Y), 2000).unwrap()
}

/// Midpoint sum on a fine grid; independent of the Simpson rule under test.
fn midpoint<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    (0..n).map(|i| f((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
}

#[test]
fn frozen_fluence_and_rate_values() {
    // Brute-force midpoint sums with 2e5 cells give these to ~1e-9.
    let theta = FRAC_PI_2;
    let b2 = |t: f64| 6.0 * theta * t * (1.0 - t);
    let b2_rate = |t: f64| 6.0 * theta * (1.0 - 2.0 * t);
    let oracle_fluence = midpoint(|t| b2(t).powi(2), 200_000);
    let oracle_rate = midpoint(|t| b2_rate(t).powi(2), 200_000);
    assert!((oracle_fluence - 1.2 * theta * theta).abs() < 1e-9);
    assert!((oracle_rate - 12.0 * theta * theta).abs() < 1e-8);

    let s = sched(pulse_b2(theta, 0).unwrap());
    assert!((fluence(&s) - oracle_fluence).abs() < 1e-8);
    assert!((rate_cost(&s).value - oracle_rate).abs() < 1e-7);

    let sine = sched(pulse_sine(theta, 0).unwrap());
    let sine_rate = |t: f64| 0.5 * PI * PI * theta * (PI * t).cos();
    let oracle_sine = midpoint(|t| sine_rate(t).powi(2), 200_000);
    assert!((rate_cost(&sine).value - oracle_sine).abs() < 1e-7);
}

#[test]
fn fluence_decomposes_into_mean_and_fluctuation() {
    for theta in THETAS {
        for n in [0, 1] {
            let a = theta + 2.0 * PI * n as f64;
            for p in [
                pulse_b2(theta, n).unwrap(),
                pulse_b3(theta, n, 5.0).unwrap(),
                pulse_sine(theta, n).unwrap(),
            ] {
                let s = sched(p);
                let delta_sq: Vec<f64> = s.values().iter().map(|b| (b.y - a).powi(2)).collect();
                let fluct = bloch_pulse::quadrature::simpson(&delta_sq, s.step());
                assert!((fluence(&s) - (a * a + fluct)).abs() <= 1e-8);
            }
            let b1 = fluence(&sched(pulse_b1(theta, n).unwrap()));
            let b2 = fluence(&sched(pulse_b2(theta, n).unwrap()));
            assert!((b2 - b1 - 0.2 * a * a).abs() < 1e-10);
        }
    }
}

#[test]
fn cost_orderings_between_families() {
    for theta in THETAS {
        for n in [0, 1] {
            let b1 = sched(pulse_b1(theta, n).unwrap());
            let b2 = sched(pulse_b2(theta, n).unwrap());
            let b3 = sched(pulse_b3(theta, n, 5.0).unwrap());
            assert!(fluence(&b1) <= fluence(&b3) && fluence(&b3) <= fluence(&b2));
            for omega in [0.5, 5.0, 50.0] {
                let b3w = sched(pulse_b3(theta, n, omega).unwrap());
                assert!(rate_cost(&b2).value <= rate_cost(&b3w).value);
            }
        }
    }
}

#[test]
fn b3_minimizes_mixed_cost_among_competitors() {
    for theta in THETAS {
        for (a, omega) in [(1.0, 5.0), (0.5, 1.0), (2.0, 20.0)] {
            let own = mixed_cost(&sched(pulse_b3(theta, 0, omega).unwrap()), a, omega).unwrap();
            for rival in [
                pulse_b2(theta, 0).unwrap(),
                pulse_sine(theta, 0).unwrap(),
                pulse_ramped(theta, 0, 0.1).unwrap(),
                pulse_ramped(theta, 0, 0.3).unwrap(),
                pulse_b3(theta, 0, omega * 2.0).unwrap(),
            ] {
                let other = mixed_cost(&sched(rival), a, omega).unwrap();
                assert!(own <= other, "θ={theta} {rival:?}: {own} > {other}");
            }
        }
    }
}

#[test]
fn b3_beats_b1_and_b2_at_reference_weights() {
    let (a, omega, theta) = (1.0, 5.0, FRAC_PI_2);
    let b3 = mixed_cost(&sched(pulse_b3(theta, 0, omega).unwrap()), a, omega).unwrap();
    let b2 = mixed_cost(&sched(pulse_b2(theta, 0).unwrap()), a, omega).unwrap();
    assert!(b3 < b2);
    // B1's open-interval value is only a lower bound because of its jumps
    let b1 = sched(pulse_b1(theta, 0).unwrap());
    assert!(rate_cost(&b1).endpoint_jump);
}

#[test]
fn geometric_and_time_domain_costs_agree() {
    for theta in THETAS {
        for n in [-1, 0, 1] {
            for p in [
                pulse_b1(theta, n).unwrap(),
                pulse_b2(theta, n).unwrap(),
                pulse_b3(theta, n, 0.5).unwrap(),
                pulse_b3(theta, n, 5.0).unwrap(),
                pulse_b3(theta, n, 50.0).unwrap(),
                pulse_sine(theta, n).unwrap(),
            ] {
                let g = geometric_cost(&p, 1.0, 5.0).unwrap();
                let m = mixed_cost(&sched(p), 1.0, 5.0).unwrap();
                assert!(((g - m) / m).abs() <= 1e-6, "{p:?}: {g} vs {m}");
            }
        }
    }
}

#[test]
fn geometric_cost_rejects_sign_changes() {
    let wobble = bloch_pulse::oracle::PerturbedPulse {
        base: pulse_b1(0.2, 0).unwrap(),
        basis: &bloch_pulse::oracle::PerturbationBasis::fourier(2, 1.0),
        coefficients: vec![1.0, 0.0],
    };
    assert!(geometric_cost(&wobble, 1.0, 5.0).is_err());
}

#[test]
fn path_lengths_of_b1() {
    let l = |n: i64, grid: usize| {
        let s_f = rotate(Vec3::Z, UnitAxis::Y, FRAC_PI_2);
        let (spec, _) = PulseSpec::for_states(Family::B1, Vec3::Z, s_f).unwrap();
        let syn = synthesize(&spec.with_branch(n), Vec3::Z, s_f, grid).unwrap();
        path_length(&propagate(Vec3::Z, &syn.schedule).trajectory)
    };
    assert!((l(0, 2000) - FRAC_PI_2).abs() < 1e-6);
    // chord sum falls short of the arc by ~ arc·(Δφ)²/24
    assert!((l(1, 2000) - (FRAC_PI_2 + 2.0 * PI)).abs() < 1e-5);
    assert!((l(1, 20000) - (FRAC_PI_2 + 2.0 * PI)).abs() < 1e-7);
}

#[test]
fn geodesic_bound_with_equality_for_perpendicular_fields() {
    for theta in THETAS {
        let s_f = rotate(Vec3::Z, UnitAxis::Y, theta);
        for family in [Family::B1, Family::B2, Family::B3, Family::CN] {
            let (spec, _) = PulseSpec::for_states(family, Vec3::Z, s_f).unwrap();
            let syn = synthesize(&spec, Vec3::Z, s_f, 2000).unwrap();
            let traj = propagate(Vec3::Z, &syn.schedule).trajectory;
            let len = path_length(&traj);
            let bound = field_magnitude_integral(&syn.schedule);
            assert!(len <= bound + 1e-12);
            if family != Family::CN {
                assert!(
                    bound - len <= 1e-6,
                    "{family} θ={theta}: slack {}",
                    bound - len
                );
            } else {
                assert!(bound - len > 0.0);
            }
        }
    }
}

#[test]
fn tilted_field_has_slack() {
    let tilt = (Vec3::Y + Vec3::Z) / 2f64.sqrt() * 2.0;
    let s = ControlSchedule::from_field(FnField(move |_| tilt), 2000).unwrap();
    let traj = propagate(Vec3::Z, &s).trajectory;
    let slack = field_magnitude_integral(&s) - path_length(&traj);
    // |b| = 2 at 45° to s: path 2 sin 45°
    assert!((slack - (2.0 - 2f64.sqrt())).abs() < 1e-6);

    // longitudinal top-up via inversion with f = −1
    let b1 = sched(pulse_b1(FRAC_PI_2, 0).unwrap());
    let traj = propagate(Vec3::Z, &b1).trajectory;
    let tilted = invert_bloch(&traj, |_| -1.0).unwrap();
    let slack = field_magnitude_integral(&tilted) - path_length(&traj);
    assert!(slack >= 0.1);
}

#[test]
fn constant_norm_costs() {
    for theta in THETAS {
        for mu in [0.5, 1.0] {
            let s_f = rotate(Vec3::Z, UnitAxis::Y, theta);
            let p = pulse_constant_norm(Vec3::Z, s_f, 0, mu, 2000).unwrap();
            let s = ControlSchedule::from_field(p, 2000).unwrap();
            let extra = fluence(&s) - fluence(&sched(pulse_b1(theta, 0).unwrap()));
            assert!((extra - mu * mu * theta * theta).abs() <= 1e-8);
        }
    }
}

#[test]
fn cost_report_fields() {
    let s_f = rotate(Vec3::Z, UnitAxis::Y, 1.0);
    let (spec, _) = PulseSpec::for_states(Family::B2, Vec3::Z, s_f).unwrap();
    let syn = synthesize(&spec.with_branch(-1), Vec3::Z, s_f, 2000).unwrap();
    let r = costs::cost_report(&syn.schedule, &syn.trajectory, Some(spec.axis), 1.0, 5.0).unwrap();
    let angle = 1.0 - 2.0 * PI;
    assert!((r.accumulated_angle - angle).abs() < 1e-10);
    assert!((r.mean_magnitude - angle.abs()).abs() < 1e-10);
    assert!((r.fluence - 1.2 * angle * angle).abs() < 1e-9);
    assert!(!r.endpoint_jump);
    assert!(r.path_length <= r.mean_magnitude);
}
