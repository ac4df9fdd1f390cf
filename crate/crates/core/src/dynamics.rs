//! Bloch-equation propagation and the Euler–Lagrange system of the
//! minimum-fluence problem.

use crate::error::{Error, Result};
use crate::geometry::{cross, BlochVector, Vec3, DEGENERACY_TOL, UNIT_TOL};
use crate::pulses::{ControlSchedule, Trajectory};
use crate::quadrature;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PropagateOptions {
    /// Renormalize `s` after every step. Off by default so that norm drift
    /// stays visible as a diagnostic.
    pub renormalize: bool,
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub trajectory: Trajectory,
    pub final_state: BlochVector,
    /// `|s(1) − target|`, when a target was given.
    pub final_error: Option<f64>,
    /// Largest `| |s(t)| − |s(0)| |` over the grid.
    pub norm_drift: f64,
}

/// Integrates `ṡ = b × s` with classical RK4 on the schedule grid.
pub fn propagate(s0: BlochVector, schedule: &ControlSchedule) -> PropagationResult {
    propagate_with(s0, schedule, None, PropagateOptions::default())
}

/// [`propagate`] and report the distance of `s(1)` to `target`.
pub fn propagate_to(
    s0: BlochVector,
    schedule: &ControlSchedule,
    target: BlochVector,
) -> PropagationResult {
    propagate_with(s0, schedule, Some(target), PropagateOptions::default())
}

pub fn propagate_with(
    s0: BlochVector,
    schedule: &ControlSchedule,
    target: Option<BlochVector>,
    options: PropagateOptions,
) -> PropagationResult {
    let states = rk4_rotation(s0, schedule, options.renormalize);
    let norm0 = s0.norm();
    let norm_drift = states
        .iter()
        .map(|s| (s.norm() - norm0).abs())
        .fold(0.0, f64::max);
    let final_state = *states.last().expect("schedule has at least 3 samples");
    PropagationResult {
        trajectory: Trajectory::from_states(states).expect("schedule has at least 3 samples"),
        final_state,
        final_error: target.map(|t| final_state.distance(t)),
        norm_drift,
    }
}

fn rk4_rotation(s0: Vec3, schedule: &ControlSchedule, renormalize: bool) -> Vec<Vec3> {
    let h = schedule.step();
    let values = schedule.values();
    let norm0 = s0.norm();
    let mut s = s0;
    let mut out = Vec::with_capacity(values.len());
    out.push(s);
    for i in 0..schedule.intervals() {
        let b0 = values[i];
        let bm = schedule.midpoint(i);
        let b1 = values[i + 1];
        let k1 = cross(b0, s);
        let k2 = cross(bm, s + k1 * (0.5 * h));
        let k3 = cross(bm, s + k2 * (0.5 * h));
        let k4 = cross(b1, s + k3 * h);
        s += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if renormalize {
            if let Some(u) = s.normalize() {
                s = u * norm0;
            }
        }
        out.push(s);
    }
    out
}

/// State and multiplier of the Euler–Lagrange system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElState {
    pub s: BlochVector,
    pub lam: Vec3,
}

impl ElState {
    pub fn new(s: BlochVector, lam: Vec3) -> Self {
        ElState { s, lam }
    }

    /// `ν = λ · s`.
    pub fn nu(&self) -> f64 {
        self.lam.dot(self.s)
    }

    /// Optimal control `b = a s × λ`.
    pub fn control(&self, a: f64) -> Vec3 {
        cross(self.s, self.lam) * a
    }
}

#[derive(Debug, Clone)]
pub struct ElTrajectory {
    pub states: Vec<ElState>,
    /// Fluence weight, when the trajectory obeys the constraint `b = a s × λ`.
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedDrift {
    pub s_squared: f64,
    pub lam_squared: f64,
    pub nu: f64,
}

impl ConservedDrift {
    pub fn max(&self) -> f64 {
        self.s_squared.max(self.lam_squared).max(self.nu)
    }
}

impl ElTrajectory {
    pub fn intervals(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.intervals() as f64
    }

    /// Largest excursion of `s²`, `λ²` and `ν` from their initial values.
    pub fn conserved_drift(&self) -> ConservedDrift {
        let first = self.states[0];
        let drift = |f: &dyn Fn(&ElState) -> f64| {
            let f0 = f(&first);
            self.states
                .iter()
                .map(|e| (f(e) - f0).abs())
                .fold(0.0, f64::max)
        };
        ConservedDrift {
            s_squared: drift(&|e| e.s.norm_squared()),
            lam_squared: drift(&|e| e.lam.norm_squared()),
            nu: drift(&|e| e.nu()),
        }
    }

    pub fn final_state(&self) -> ElState {
        self.states[self.states.len() - 1]
    }
}

fn require_unit(v: Vec3) -> Result<()> {
    if v.is_finite() && (v.norm() - 1.0).abs() <= UNIT_TOL {
        Ok(())
    } else {
        Err(Error::NotUnit { norm: v.norm() })
    }
}

/// Integrates the reduced Euler–Lagrange system
///
/// ```text
/// d/d(at) (s, λ) = [[−cos θ, 1], [−1, cos θ]] (s, λ)
/// ```
///
/// with RK4 on `n` uniform steps over `t ∈ [0, 1]`. `cos θ = λ·s` is fixed at
/// its initial value since it is conserved.
pub fn propagate_el(state0: ElState, a: f64, n: usize) -> Result<ElTrajectory> {
    require_unit(state0.s)?;
    require_unit(state0.lam)?;
    if !a.is_finite() {
        return Err(Error::Domain(format!("a = {a} must be finite")));
    }
    if n < 2 {
        return Err(Error::InvalidSchedule(format!("need N ≥ 2 steps, got {n}")));
    }
    let cos = state0.nu();
    let rhs = |e: ElState| ElState::new(e.lam - e.s * cos, e.lam * cos - e.s);
    let axpy = |e: ElState, k: ElState, h: f64| ElState::new(e.s + k.s * h, e.lam + k.lam * h);

    let h = a / n as f64;
    let mut e = state0;
    let mut states = Vec::with_capacity(n + 1);
    states.push(e);
    for _ in 0..n {
        let k1 = rhs(e);
        let k2 = rhs(axpy(e, k1, 0.5 * h));
        let k3 = rhs(axpy(e, k2, 0.5 * h));
        let k4 = rhs(axpy(e, k3, h));
        e = ElState::new(
            e.s + (k1.s + (k2.s + k3.s) * 2.0 + k4.s) * (h / 6.0),
            e.lam + (k1.lam + (k2.lam + k3.lam) * 2.0 + k4.lam) * (h / 6.0),
        );
        states.push(e);
    }
    Ok(ElTrajectory { states, a: Some(a) })
}

/// Coefficient matrix of the closed-form solution, including the `1/sin θ`
/// factor: `(s, λ)(t) = M(t) (s(0), λ(0))`.
pub fn el_coefficients(theta: f64, a: f64, t: f64) -> [[f64; 2]; 2] {
    let sin = theta.sin();
    let x = a * t * sin;
    [
        [(theta - x).sin() / sin, x.sin() / sin],
        [-x.sin() / sin, (theta + x).sin() / sin],
    ]
}

/// Closed-form solution of the reduced Euler–Lagrange system at time `t`.
pub fn closed_form_el(s0: BlochVector, lam0: Vec3, a: f64, t: f64) -> Result<ElState> {
    require_unit(s0)?;
    require_unit(lam0)?;
    let sin = cross(s0, lam0).norm();
    if sin <= DEGENERACY_TOL {
        return Err(Error::Degenerate(
            "closed form needs s(0) and λ(0) not (anti)parallel".into(),
        ));
    }
    let theta = sin.atan2(s0.dot(lam0));
    let m = el_coefficients(theta, a, t);
    Ok(ElState::new(
        s0 * m[0][0] + lam0 * m[0][1],
        s0 * m[1][0] + lam0 * m[1][1],
    ))
}

/// `s` and `λ` both propagated under a given schedule (`ṡ = b × s`,
/// `λ̇ = b × λ`), without imposing `b = a s × λ`.
pub fn costate_trajectory(s0: BlochVector, lam0: Vec3, schedule: &ControlSchedule) -> ElTrajectory {
    let s = rk4_rotation(s0, schedule, false);
    let lam = rk4_rotation(lam0, schedule, false);
    ElTrajectory {
        states: s
            .into_iter()
            .zip(lam)
            .map(|(s, lam)| ElState::new(s, lam))
            .collect(),
        a: None,
    }
}

/// Reconstructs the field from a trajectory: `b = s × ṡ / |s|² − f(t) s`,
/// with `ṡ` from second-order finite differences.
///
/// Accuracy is `O(1/N²)`; use `N ≥ 100` in practice.
pub fn invert_bloch<F: Fn(f64) -> f64>(trajectory: &Trajectory, f: F) -> Result<ControlSchedule> {
    let states = trajectory.states();
    if let Some(i) = states.iter().position(|s| s.norm_squared() <= 1e-24) {
        return Err(Error::Degenerate(format!(
            "|s| vanishes at t = {}",
            trajectory.time(i)
        )));
    }
    let sdot = quadrature::first_derivative(states, trajectory.step());
    let values = states
        .iter()
        .zip(&sdot)
        .enumerate()
        .map(|(i, (s, ds))| cross(*s, *ds) / s.norm_squared() - *s * f(trajectory.time(i)))
        .collect();
    ControlSchedule::from_values(values)
}

/// How well a schedule satisfies the rate-criterion control equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeResidual {
    /// `max |b̈ + Ω² s × λ|` over interior grid points.
    pub equation: f64,
    /// `max |d³b/dt³ − b × b̈|` over interior grid points.
    pub third_order: f64,
    /// `max |b̈| − min |b̈|` over interior grid points.
    pub accel_norm_spread: f64,
    pub accel_norm_mean: f64,
}

/// Residuals of `b̈ = −Ω² s × λ` and of its derivative `d³b/dt³ = b × b̈`
/// along `el`, which must share the schedule's grid.
///
/// Derivatives are exact when the schedule carries a closed-form source and
/// finite-difference otherwise.
pub fn control_ode_residual(
    schedule: &ControlSchedule,
    el: &ElTrajectory,
    omega: f64,
) -> Result<OdeResidual> {
    if el.states.len() != schedule.values().len() {
        return Err(Error::InvalidSchedule(format!(
            "trajectory has {} samples, schedule {}",
            el.states.len(),
            schedule.values().len()
        )));
    }
    let b = schedule.values();
    let acc = schedule.accels();
    let jerk = schedule.jerks();
    let n = b.len();
    let omega2 = omega * omega;

    let mut equation: f64 = 0.0;
    let mut third: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut sum = 0.0;
    for i in 1..n - 1 {
        let e = el.states[i];
        equation = equation.max((acc[i] + cross(e.s, e.lam) * omega2).norm());
        third = third.max((jerk[i] - cross(b[i], acc[i])).norm());
        let m = acc[i].norm();
        lo = lo.min(m);
        hi = hi.max(m);
        sum += m;
    }
    Ok(OdeResidual {
        equation,
        third_order: third,
        accel_norm_spread: hi - lo,
        accel_norm_mean: sum / (n - 2) as f64,
    })
}

/// `Ω` for which B2 on branch `n` solves `b̈ = −Ω² s × λ` with `λ(0) = s_f`:
/// `Ω² = 12(θ + 2πn)/sin θ`.
pub fn rate_weight_for_b2(theta: f64, branch_n: i64) -> Result<f64> {
    let sin = theta.sin();
    if sin.abs() <= DEGENERACY_TOL {
        return Err(Error::Degenerate("sin θ = 0".into()));
    }
    let omega2 = 12.0 * crate::pulses::effective_angle(theta, branch_n) / sin;
    if omega2 <= 0.0 {
        return Err(Error::Domain(format!(
            "branch {branch_n} gives a negative Ω² = {omega2}"
        )));
    }
    Ok(omega2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotate, UnitAxis};
    use crate::pulses::{pulse_b1, FnField};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_field_leaves_state_unchanged() {
        let s0 = Vec3::new(0.6, 0.0, 0.8);
        let sched = ControlSchedule::from_field(FnField(|_| Vec3::ZERO), 50).unwrap();
        let res = propagate(s0, &sched);
        assert!(res.trajectory.states().iter().all(|s| *s == s0));
        assert_eq!(res.norm_drift, 0.0);
    }

    #[test]
    fn quarter_turn_matches_rodrigues() {
        let sched =
            ControlSchedule::from_field(pulse_b1(FRAC_PI_2, 0).unwrap().along(UnitAxis::Y), 2000)
                .unwrap();
        let res = propagate_to(Vec3::Z, &sched, Vec3::X);
        let oracle = rotate(Vec3::Z, UnitAxis::Y, FRAC_PI_2);
        assert!(res.final_state.distance(oracle) < 1e-8);
        assert!(res.final_error.unwrap() < 1e-8);
    }

    #[test]
    fn renormalize_option_pins_norm() {
        let sched =
            ControlSchedule::from_field(pulse_b1(3.0, 2).unwrap().along(UnitAxis::Y), 10).unwrap();
        let loose = propagate(Vec3::Z, &sched);
        let tight = propagate_with(
            Vec3::Z,
            &sched,
            None,
            PropagateOptions { renormalize: true },
        );
        assert!(loose.norm_drift > 1e-6);
        assert!(tight.norm_drift < 1e-15);
    }

    #[test]
    fn el_aligned_multiplier_is_stationary() {
        let s = Vec3::new(0.0, 0.6, 0.8);
        let traj = propagate_el(ElState::new(s, s), 2.0, 100).unwrap();
        for e in &traj.states {
            assert!(e.s.distance(s) < 1e-15);
            assert!(e.control(2.0).norm() < 1e-15);
        }
    }

    #[test]
    fn el_rejects_non_unit() {
        let err = propagate_el(ElState::new(Vec3::Z * 0.5, Vec3::X), 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::NotUnit { .. }));
        assert!(closed_form_el(Vec3::Z, Vec3::Z, 1.0, 0.3).is_err());
    }

    #[test]
    fn closed_form_el_identity_at_zero() {
        let lam = Vec3::new(0.6, 0.0, 0.8);
        let e = closed_form_el(Vec3::Z, lam, 1.7, 0.0).unwrap();
        assert!(e.s.distance(Vec3::Z) < 1e-15 && e.lam.distance(lam) < 1e-15);
    }

    #[test]
    fn invert_stationary_trajectory_gives_zero_field() {
        let traj = Trajectory::sample(|_| Vec3::Z, 100).unwrap();
        let sched = invert_bloch(&traj, |_| 0.0).unwrap();
        assert!(sched.values().iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn invert_rejects_vanishing_state() {
        let traj = Trajectory::sample(|t| Vec3::Z * (t - 0.5), 100).unwrap();
        assert!(matches!(
            invert_bloch(&traj, |_| 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn constant_field_has_trivial_third_order_residual() {
        let sched =
            ControlSchedule::from_field(FnField(|_| Vec3::new(0.3, -1.0, 2.0)), 100).unwrap();
        let el = costate_trajectory(Vec3::Z, Vec3::X, &sched);
        let r = control_ode_residual(&sched, &el, 0.0).unwrap();
        assert!(r.third_order < 1e-9);
        assert!(r.accel_norm_spread < 1e-9);
    }
}
