//! Cost functionals and path quantities of a control schedule.
//!
//! `fluence` and `rate_cost` are the bare integrals `∫ |b|²` and `∫ |ḃ|²`
//! without the `1/2a` or `1/2Ω²` prefactors; `mixed_cost` carries its
//! `1/2a` prefactor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{UnitAxis, Vec3};
use crate::pulses::{ControlSchedule, ScalarPulse, Trajectory};
use crate::quadrature::{gauss_legendre, simpson};

/// `|b(0)|` or `|b(1)|` above this is treated as a switch-on/off jump.
const JUMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCost {
    /// `∫ |ḃ|²` over the open interval `(0, 1)`.
    pub value: f64,
    /// The field is switched on or off discontinuously, so the cost on the
    /// closed interval has an additional (unbounded) contribution.
    pub endpoint_jump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub fluence: f64,
    pub rate_cost: f64,
    pub endpoint_jump: bool,
    pub mixed_cost: f64,
    pub path_length: f64,
    /// `Φ(1)`: `∫ b·ŝ⊥` when an axis is known, `∫ |b|` otherwise.
    pub accumulated_angle: f64,
    /// `∫ |b|`.
    pub mean_magnitude: f64,
}

fn integrate<F: Fn(Vec3) -> f64>(values: &[Vec3], h: f64, f: F) -> f64 {
    let v: Vec<f64> = values.iter().map(|b| f(*b)).collect();
    simpson(&v, h)
}

/// `∫₀¹ |b|² dt` by composite Simpson.
pub fn fluence(schedule: &ControlSchedule) -> f64 {
    integrate(schedule.values(), schedule.step(), Vec3::norm_squared)
}

/// `∫₀¹ |ḃ|² dt`, using exact derivatives when the schedule has a closed-form
/// source.
pub fn rate_cost(schedule: &ControlSchedule) -> RateCost {
    let rates = schedule.rates();
    let values = schedule.values();
    let scale = values.iter().map(|b| b.norm()).fold(1.0, f64::max);
    let endpoint_jump =
        values[0].norm() > JUMP_TOL * scale || values[values.len() - 1].norm() > JUMP_TOL * scale;
    RateCost {
        value: integrate(&rates, schedule.step(), Vec3::norm_squared),
        endpoint_jump,
    }
}

fn check_weights(a: f64, omega: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    if omega.is_nan() || omega <= 0.0 {
        return Err(Error::Domain(format!("omega = {omega} must be positive")));
    }
    Ok(())
}

/// `∫ (1/2a)(|b|² + ω⁻² |ḃ|²) dt`. `ω = ∞` drops the rate term.
pub fn mixed_cost(schedule: &ControlSchedule, a: f64, omega: f64) -> Result<f64> {
    check_weights(a, omega)?;
    let rate = if omega.is_infinite() {
        0.0
    } else {
        rate_cost(schedule).value / (omega * omega)
    };
    Ok((fluence(schedule) + rate) / (2.0 * a))
}

/// The mixed cost of an along-axis pulse written in terms of the
/// accumulated angle:
///
/// ```text
/// S = (1/2a) ∫₀^Φ(1) b(φ) (1 + (db/dφ / ω)²) dφ
/// ```
///
/// The φ-integral is done on its own grid, inverting `φ(t)` by safeguarded
/// Newton iteration. A cosine substitution absorbs the `φ^(−1/2)` endpoint
/// behaviour of profiles that vanish at the ends.
///
/// `b` must keep one sign on `(0, 1)` so that `φ(t)` is invertible;
/// negative pulses are mirrored, which leaves `S` unchanged.
pub fn geometric_cost<P: ScalarPulse + ?Sized>(pulse: &P, a: f64, omega: f64) -> Result<f64> {
    check_weights(a, omega)?;
    let sign = pulse.accumulated(1.0).signum();
    if sign == 0.0 {
        return Ok(0.0);
    }
    let probe = 512;
    for i in 1..probe {
        let t = i as f64 / probe as f64;
        if sign * pulse.value(t) <= 0.0 {
            return Err(Error::Domain(format!(
                "accumulated angle is not monotone (b({t}) = {})",
                pulse.value(t)
            )));
        }
    }
    let total = sign * pulse.accumulated(1.0);
    let inv_omega2 = if omega.is_infinite() {
        0.0
    } else {
        1.0 / (omega * omega)
    };

    let integrand = |v: f64| {
        let (sin, cos) = (PI * v).sin_cos();
        let phi = 0.5 * total * (1.0 - cos);
        let dphi_dv = 0.5 * total * PI * sin;
        let t = invert_accumulated(pulse, sign, phi);
        let b = sign * pulse.value(t);
        let db_dphi = pulse.rate(t) / pulse.value(t);
        b * (1.0 + db_dphi * db_dphi * inv_omega2) * dphi_dv
    };
    Ok(gauss_legendre(integrand, 0.0, 1.0, 400) / (2.0 * a))
}

/// `t` with `sign · Φ(t) = phi`, for a pulse with `sign · b > 0`.
fn invert_accumulated<P: ScalarPulse + ?Sized>(p: &P, sign: f64, phi: f64) -> f64 {
    let total = sign * p.accumulated(1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t = (phi / total).clamp(0.0, 1.0);
    for _ in 0..100 {
        let g = sign * p.accumulated(t) - phi;
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = sign * p.value(t);
        let mut next = if slope > 0.0 { t - g / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-16 {
            return next;
        }
        t = next;
    }
    t
}

/// Polyline length `Σ |Δs|` of the sampled trajectory.
pub fn path_length(trajectory: &Trajectory) -> f64 {
    trajectory
        .states()
        .windows(2)
        .map(|w| w[0].distance(w[1]))
        .sum()
}

/// `∫ |b| dt`, the bound on the path length.
pub fn field_magnitude_integral(schedule: &ControlSchedule) -> f64 {
    integrate(schedule.values(), schedule.step(), Vec3::norm)
}

pub fn cost_report(
    schedule: &ControlSchedule,
    trajectory: &Trajectory,
    axis: Option<UnitAxis>,
    a: f64,
    omega: f64,
) -> Result<CostReport> {
    let rate = rate_cost(schedule);
    let mean_magnitude = field_magnitude_integral(schedule);
    let accumulated_angle = match axis {
        Some(ax) => integrate(schedule.values(), schedule.step(), |b| b.dot(ax.vector())),
        None => mean_magnitude,
    };
    Ok(CostReport {
        fluence: fluence(schedule),
        rate_cost: rate.value,
        endpoint_jump: rate.endpoint_jump,
        mixed_cost: mixed_cost(schedule, a, omega)?,
        path_length: path_length(trajectory),
        accumulated_angle,
        mean_magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{pulse_b1, pulse_b2, pulse_b3, pulse_sine, FnField, Profile};
    use std::f64::consts::FRAC_PI_2;

    fn sched(p: Profile) -> ControlSchedule {
        ControlSchedule::from_field(p.along(UnitAxis::Y), 2000).unwrap()
    }

    #[test]
    fn fluence_reference_values() {
        let b1 = sched(pulse_b1(FRAC_PI_2, 0).unwrap());
        assert!((fluence(&b1) - FRAC_PI_2 * FRAC_PI_2).abs() < 1e-12);
        let theta = 1.1;
        let b2 = sched(pulse_b2(theta, 0).unwrap());
        assert!((fluence(&b2) - 1.2 * theta * theta).abs() < 1e-12);
        let zero = ControlSchedule::from_field(FnField(|_| Vec3::ZERO), 10).unwrap();
        assert_eq!(fluence(&zero), 0.0);
    }

    #[test]
    fn rate_cost_reference_values() {
        let theta = 0.9;
        let b2 = rate_cost(&sched(pulse_b2(theta, 0).unwrap()));
        assert!((b2.value - 12.0 * theta * theta).abs() < 1e-11);
        assert!(!b2.endpoint_jump);
        let b1 = rate_cost(&sched(pulse_b1(theta, 0).unwrap()));
        assert_eq!(b1.value, 0.0);
        assert!(b1.endpoint_jump);
        let sine = rate_cost(&sched(pulse_sine(theta, 0).unwrap()));
        assert!((sine.value - PI.powi(4) * theta * theta / 8.0).abs() < 1e-10);
    }

    #[test]
    fn rate_cost_without_source_uses_finite_differences() {
        let theta = 0.9;
        let s = sched(pulse_b2(theta, 0).unwrap()).detached();
        assert!((rate_cost(&s).value - 12.0 * theta * theta).abs() < 1e-8);
    }

    #[test]
    fn mixed_cost_limits_and_errors() {
        let s = sched(pulse_b2(1.0, 0).unwrap());
        let inf = mixed_cost(&s, 2.0, f64::INFINITY).unwrap();
        assert!((inf - fluence(&s) / 4.0).abs() < 1e-15);
        assert!(mixed_cost(&s, 0.0, 1.0).is_err());
        assert!(mixed_cost(&s, 1.0, -1.0).is_err());
        let zero = ControlSchedule::from_field(FnField(|_| Vec3::ZERO), 10).unwrap();
        assert_eq!(mixed_cost(&zero, 1.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn geometric_cost_of_b1() {
        let theta = 1.3;
        let g = geometric_cost(&pulse_b1(theta, 0).unwrap(), 2.0, 5.0).unwrap();
        assert!((g - theta * theta / 4.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_cost_matches_time_domain_for_b2_b3() {
        for p in [
            pulse_b2(FRAC_PI_2, 0).unwrap(),
            pulse_b3(FRAC_PI_2, 0, 5.0).unwrap(),
            pulse_b3(2.5, 1, 0.5).unwrap(),
            pulse_b2(0.4, -1).unwrap(),
        ] {
            let g = geometric_cost(&p, 1.3, 5.0).unwrap();
            let m = mixed_cost(&sched(p), 1.3, 5.0).unwrap();
            assert!(((g - m) / m).abs() < 1e-6, "{p:?}: {g} vs {m}");
        }
    }

    #[test]
    fn path_length_of_stationary_trajectory() {
        let traj = Trajectory::sample(|_| Vec3::Z, 20).unwrap();
        assert_eq!(path_length(&traj), 0.0);
    }
}
