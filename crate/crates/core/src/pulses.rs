//! Analytic optimal control fields and their trajectories.
//!
//! Every optimal field found for the three criteria points along the fixed
//! axis `ŝ⊥ = normalize(s_i × s_f)` with a scalar profile `b(t)` satisfying
//! `∫₀¹ b dt = θ + 2πn`. The trajectory then depends only on the accumulated
//! angle `Φ(t) = ∫₀ᵗ b`, see [`trajectory_closed_form`].
//!
//! | family | profile | minimizes |
//! |--------|---------|-----------|
//! | B1 | `θ + 2πn` | `∫ b²` |
//! | B2 | `6(θ + 2πn) t(1 − t)` | `∫ ḃ²` with `b(0) = b(1) = 0` |
//! | B3 | cosh profile, weight `ω` | `∫ b² + ω⁻² ḃ²` |
//! | CN | constant magnitude `θ√(1 + μ²)`, rotating direction | (rate criterion, non-unique) |

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, cross, rotate, BlochVector, ControlVector, UnitAxis, Vec3, DEGENERACY_TOL,
};
use crate::quadrature;

/// Default number of grid intervals for sampled schedules.
pub const DEFAULT_GRID: usize = 2000;

/// Below this ω the cosh profile is evaluated from its power series.
const COSH_SERIES_MAX_OMEGA: f64 = 2.0;
const COSH_SERIES_TERMS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    B1,
    B2,
    B3,
    CN,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::B1 => "b1",
            Family::B2 => "b2",
            Family::B3 => "b3",
            Family::CN => "cn",
            Family::Custom => "custom",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b1" => Ok(Family::B1),
            "b2" => Ok(Family::B2),
            "b3" => Ok(Family::B3),
            "cn" => Ok(Family::CN),
            "custom" => Ok(Family::Custom),
            other => Err(Error::Domain(format!("unknown pulse family `{other}`"))),
        }
    }
}

/// Declarative description of a control field.
///
/// Parameters that a family does not use are kept as given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub family: Family,
    /// Angle between initial and final state, in `[0, π]`.
    pub theta: f64,
    pub axis: UnitAxis,
    /// Winding branch; negative values rotate the other way.
    pub branch_n: i64,
    /// Fluence weight.
    pub a: f64,
    /// Rate weight of the mixed criterion.
    pub omega: f64,
    /// Shape parameter of the constant-norm family.
    pub mu: f64,
}

impl PulseSpec {
    /// Spec for the rotation `s_i → s_f`, with `n = 0`, `a = 1`, `ω = 5`, `μ = 1`.
    ///
    /// The boolean is true when the axis is the fallback for (near-)parallel
    /// or antipodal states.
    pub fn for_states(family: Family, s_i: BlochVector, s_f: BlochVector) -> Result<(Self, bool)> {
        let theta = geometry::angle_between(s_i, s_f)?;
        let (axis, fallback) = geometry::perpendicular_axis_checked(s_i, s_f);
        Ok((
            PulseSpec {
                family,
                theta,
                axis,
                branch_n: 0,
                a: 1.0,
                omega: 5.0,
                mu: 1.0,
            },
            fallback,
        ))
    }

    pub fn with_branch(mut self, n: i64) -> Self {
        self.branch_n = n;
        self
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn effective_angle(&self) -> f64 {
        effective_angle(self.theta, self.branch_n)
    }

    /// Scalar profile of the axis families; `None` for CN and Custom.
    pub fn profile(&self) -> Result<Option<Profile>> {
        Ok(match self.family {
            Family::B1 => Some(pulse_b1(self.theta, self.branch_n)?),
            Family::B2 => Some(pulse_b2(self.theta, self.branch_n)?),
            Family::B3 => Some(pulse_b3(self.theta, self.branch_n, self.omega)?),
            Family::CN | Family::Custom => None,
        })
    }
}

/// Total rotation angle on winding branch `n`: `θ + 2πn`.
pub fn effective_angle(theta: f64, branch_n: i64) -> f64 {
    theta + 2.0 * PI * branch_n as f64
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && (0.0..=PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta = {theta} outside [0, π]")))
    }
}

/// A time-dependent control field on `[0, 1]`.
///
/// Derivatives are optional; consumers fall back to finite differences on a
/// grid when a field does not provide them.
pub trait ControlField: Send + Sync {
    fn field(&self, t: f64) -> ControlVector;

    fn field_rate(&self, _t: f64) -> Option<Vec3> {
        None
    }

    fn field_accel(&self, _t: f64) -> Option<Vec3> {
        None
    }

    fn field_jerk(&self, _t: f64) -> Option<Vec3> {
        None
    }
}

/// Adapts a closure into a [`ControlField`] without analytic derivatives.
pub struct FnField<F>(pub F);

impl<F> ControlField for FnField<F>
where
    F: Fn(f64) -> Vec3 + Send + Sync,
{
    fn field(&self, t: f64) -> Vec3 {
        (self.0)(t)
    }
}

/// A scalar pulse `b(t)` applied along a fixed axis, with exact derivative
/// and antiderivative.
pub trait ScalarPulse: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn rate(&self, t: f64) -> f64;
    /// `Φ(t) = ∫₀ᵗ b`.
    fn accumulated(&self, t: f64) -> f64;
}

impl ScalarPulse for Profile {
    fn value(&self, t: f64) -> f64 {
        Profile::value(self, t)
    }

    fn rate(&self, t: f64) -> f64 {
        Profile::rate(self, t)
    }

    fn accumulated(&self, t: f64) -> f64 {
        Profile::accumulated(self, t)
    }
}

/// Scalar pulse shapes. `angle` is the total rotation `θ + 2πn`, so every
/// profile integrates to `angle` over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// B1: `b ≡ angle`.
    Constant { angle: f64 },
    /// B2: `6 angle t(1 − t)`.
    Parabolic { angle: f64 },
    /// B3: `angle (1 − cosh(ω(t − ½))/cosh(ω/2)) / (1 − tanh(ω/2)/(ω/2))`.
    Cosh { angle: f64, omega: f64 },
    /// `(π angle / 2) sin(πt)`, the intuitive smooth pulse.
    Sine { angle: f64 },
    /// Trapezoid with linear ramps of width `ramp` at both ends.
    Ramped { angle: f64, ramp: f64 },
}

/// Minimum-fluence profile.
pub fn pulse_b1(theta: f64, branch_n: i64) -> Result<Profile> {
    check_theta(theta)?;
    Ok(Profile::Constant {
        angle: effective_angle(theta, branch_n),
    })
}

/// Minimum-rate profile with vanishing endpoints.
pub fn pulse_b2(theta: f64, branch_n: i64) -> Result<Profile> {
    check_theta(theta)?;
    Ok(Profile::Parabolic {
        angle: effective_angle(theta, branch_n),
    })
}

/// Mixed-criterion profile; `omega` must be positive and finite.
pub fn pulse_b3(theta: f64, branch_n: i64, omega: f64) -> Result<Profile> {
    check_theta(theta)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Domain(format!("omega = {omega} must be positive")));
    }
    Ok(Profile::Cosh {
        angle: effective_angle(theta, branch_n),
        omega,
    })
}

pub fn pulse_sine(theta: f64, branch_n: i64) -> Result<Profile> {
    check_theta(theta)?;
    Ok(Profile::Sine {
        angle: effective_angle(theta, branch_n),
    })
}

/// B1 with its jumps replaced by linear ramps, rescaled to keep the area.
pub fn pulse_ramped(theta: f64, branch_n: i64, ramp: f64) -> Result<Profile> {
    check_theta(theta)?;
    if !(ramp > 0.0 && ramp <= 0.5) {
        return Err(Error::Domain(format!("ramp = {ramp} outside (0, 0.5]")));
    }
    Ok(Profile::Ramped {
        angle: effective_angle(theta, branch_n),
        ramp,
    })
}

impl Profile {
    pub fn angle(&self) -> f64 {
        match *self {
            Profile::Constant { angle }
            | Profile::Parabolic { angle }
            | Profile::Cosh { angle, .. }
            | Profile::Sine { angle }
            | Profile::Ramped { angle, .. } => angle,
        }
    }

    /// The same shape scaled to a different total angle.
    pub fn with_angle(&self, angle: f64) -> Profile {
        match *self {
            Profile::Constant { .. } => Profile::Constant { angle },
            Profile::Parabolic { .. } => Profile::Parabolic { angle },
            Profile::Cosh { omega, .. } => Profile::Cosh { angle, omega },
            Profile::Sine { .. } => Profile::Sine { angle },
            Profile::Ramped { ramp, .. } => Profile::Ramped { angle, ramp },
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { angle } => angle,
            Profile::Parabolic { angle } => 6.0 * angle * t * (1.0 - t),
            Profile::Cosh { angle, omega } => CoshTerms::new(omega).value(t) * angle,
            Profile::Sine { angle } => 0.5 * PI * angle * (PI * t).sin(),
            Profile::Ramped { angle, ramp } => {
                let height = angle / (1.0 - ramp);
                height * (t / ramp).min((1.0 - t) / ramp).clamp(0.0, 1.0)
            }
        }
    }

    /// `db/dt`. For B1 this is the value on the open interval.
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { .. } => 0.0,
            Profile::Parabolic { angle } => 6.0 * angle * (1.0 - 2.0 * t),
            Profile::Cosh { angle, omega } => CoshTerms::new(omega).rate(t) * angle,
            Profile::Sine { angle } => 0.5 * PI * PI * angle * (PI * t).cos(),
            Profile::Ramped { angle, ramp } => {
                let slope = angle / ((1.0 - ramp) * ramp);
                if t < ramp {
                    slope
                } else if t > 1.0 - ramp {
                    -slope
                } else {
                    0.0
                }
            }
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { .. } | Profile::Ramped { .. } => 0.0,
            Profile::Parabolic { angle } => -12.0 * angle,
            Profile::Cosh { angle, omega } => CoshTerms::new(omega).accel(t) * angle,
            Profile::Sine { angle } => -0.5 * PI.powi(3) * angle * (PI * t).sin(),
        }
    }

    pub fn jerk(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { .. } | Profile::Parabolic { .. } | Profile::Ramped { .. } => 0.0,
            Profile::Cosh { angle, omega } => CoshTerms::new(omega).jerk(t) * angle,
            Profile::Sine { angle } => -0.5 * PI.powi(4) * angle * (PI * t).cos(),
        }
    }

    /// Accumulated angle `Φ(t) = ∫₀ᵗ b`.
    pub fn accumulated(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { angle } => angle * t,
            Profile::Parabolic { angle } => angle * t * t * (3.0 - 2.0 * t),
            Profile::Cosh { angle, omega } => CoshTerms::new(omega).accumulated(t) * angle,
            Profile::Sine { angle } => 0.5 * angle * (1.0 - (PI * t).cos()),
            Profile::Ramped { angle, ramp } => {
                let height = angle / (1.0 - ramp);
                if t <= ramp {
                    0.5 * height * t * t / ramp
                } else if t >= 1.0 - ramp {
                    let rest = 1.0 - t;
                    angle - 0.5 * height * rest * rest / ramp
                } else {
                    height * (t - 0.5 * ramp)
                }
            }
        }
    }

    /// True when `b(0) = b(1) = 0`.
    pub fn vanishes_at_ends(&self) -> bool {
        !matches!(self, Profile::Constant { .. }) || self.angle() == 0.0
    }

    pub fn along(self, axis: UnitAxis) -> AxisPulse {
        AxisPulse {
            profile: self,
            axis,
        }
    }
}

/// Unit-angle cosh profile (total area 1), evaluated stably for all ω.
struct CoshTerms {
    omega: f64,
}

impl CoshTerms {
    fn new(omega: f64) -> Self {
        CoshTerms { omega }
    }

    fn series(&self) -> bool {
        self.omega <= COSH_SERIES_MAX_OMEGA
    }

    /// Series denominator `Σ w^(k−1) 4^(−k) (1/(2k)! − 1/(2k+1)!)`, `w = ω²`.
    ///
    /// Both the profile and its normalization carry a common factor
    /// `ω²/cosh(ω/2)`, which is divided out so the small-ω limit is exact.
    fn series_den(&self) -> f64 {
        let w = self.omega * self.omega;
        let mut sum = 0.0;
        let mut wk = 1.0;
        let mut quarter = 0.25;
        let mut fact = 2.0; // (2k)!
        for k in 1..=COSH_SERIES_TERMS {
            sum += wk * quarter * (1.0 / fact - 1.0 / (fact * (2 * k + 1) as f64));
            wk *= w;
            quarter *= 0.25;
            fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
        }
        sum
    }

    /// Sum over k ≥ `k0` of `w^(k−1) u^(2k−p) / (2k−p)!`.
    fn series_odd_even(&self, u: f64, p: usize, k0: usize) -> f64 {
        let w = self.omega * self.omega;
        let mut sum = 0.0;
        for k in k0..=COSH_SERIES_TERMS {
            let e = 2 * k - p;
            let mut fact = 1.0;
            for j in 2..=e {
                fact *= j as f64;
            }
            sum += w.powi(k as i32 - 1) * u.powi(e as i32) / fact;
        }
        sum
    }

    fn amp(&self) -> f64 {
        let x = 0.5 * self.omega;
        1.0 / (1.0 - x.tanh() / x)
    }

    /// `cosh(y)/cosh(ω/2)` without overflow.
    fn cosh_ratio(&self, y: f64) -> f64 {
        let x = 0.5 * self.omega;
        let ay = y.abs();
        (ay - x).exp() * (1.0 + (-2.0 * ay).exp()) / (1.0 + (-2.0 * x).exp())
    }

    /// `sinh(y)/cosh(ω/2)` without overflow.
    fn sinh_ratio(&self, y: f64) -> f64 {
        let x = 0.5 * self.omega;
        let ay = y.abs();
        y.signum() * (ay - x).exp() * (1.0 - (-2.0 * ay).exp()) / (1.0 + (-2.0 * x).exp())
    }

    fn value(&self, t: f64) -> f64 {
        let u = t - 0.5;
        if self.series() {
            let w = self.omega * self.omega;
            let mut num = 0.0;
            let mut wk = 1.0;
            let mut quarter = 0.25;
            let mut u2k = u * u;
            let mut fact = 2.0;
            for k in 1..=COSH_SERIES_TERMS {
                num += wk * (quarter - u2k) / fact;
                wk *= w;
                quarter *= 0.25;
                u2k *= u * u;
                fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
            }
            num / self.series_den()
        } else {
            self.amp() * (1.0 - self.cosh_ratio(self.omega * u))
        }
    }

    fn rate(&self, t: f64) -> f64 {
        let u = t - 0.5;
        if self.series() {
            -self.series_odd_even(u, 1, 1) / self.series_den()
        } else {
            -self.amp() * self.omega * self.sinh_ratio(self.omega * u)
        }
    }

    fn accel(&self, t: f64) -> f64 {
        let u = t - 0.5;
        if self.series() {
            -self.series_odd_even(u, 2, 1) / self.series_den()
        } else {
            -self.amp() * self.omega.powi(2) * self.cosh_ratio(self.omega * u)
        }
    }

    fn jerk(&self, t: f64) -> f64 {
        let u = t - 0.5;
        if self.series() {
            -self.series_odd_even(u, 3, 2) / self.series_den()
        } else {
            -self.amp() * self.omega.powi(3) * self.sinh_ratio(self.omega * u)
        }
    }

    fn accumulated(&self, t: f64) -> f64 {
        let u = t - 0.5;
        if self.series() {
            let w = self.omega * self.omega;
            let mut num = 0.0;
            let mut wk = 1.0;
            let mut quarter = 0.25;
            let mut fact = 2.0;
            for k in 1..=COSH_SERIES_TERMS {
                let odd = 2 * k + 1;
                let tail = (u.powi(odd as i32) + 0.5f64.powi(odd as i32)) / odd as f64;
                num += wk * (quarter * t - tail) / fact;
                wk *= w;
                quarter *= 0.25;
                fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
            }
            num / self.series_den()
        } else {
            let x = 0.5 * self.omega;
            self.amp() * (t - (self.sinh_ratio(self.omega * u) + x.tanh()) / self.omega)
        }
    }
}

/// A scalar profile applied along a fixed axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPulse {
    pub profile: Profile,
    pub axis: UnitAxis,
}

impl ControlField for AxisPulse {
    fn field(&self, t: f64) -> Vec3 {
        self.axis.vector() * self.profile.value(t)
    }

    fn field_rate(&self, t: f64) -> Option<Vec3> {
        Some(self.axis.vector() * self.profile.rate(t))
    }

    fn field_accel(&self, t: f64) -> Option<Vec3> {
        Some(self.axis.vector() * self.profile.accel(t))
    }

    fn field_jerk(&self, t: f64) -> Option<Vec3> {
        Some(self.axis.vector() * self.profile.jerk(t))
    }
}

/// Constant-magnitude field obtained from a tilted trajectory
/// `s(t) = cos φ s₀(t) + sin φ ŝ⊥` with `φ(t) = angle μ t(1 − t)`, where `s₀` is
/// the B1 trajectory. The base field `s × ṡ` is topped up along `s` by
/// `f = +√(B² − angle² cos²φ − φ̇²)`, `B² = angle²(1 + μ²)`, which leaves the
/// trajectory unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantNormPulse {
    s_i: BlochVector,
    axis: UnitAxis,
    angle: f64,
    mu: f64,
}

/// Radicand values above `-RADICAND_SLACK · B²` are rounding, not failure.
const RADICAND_SLACK: f64 = 1e-12;

/// Builds the constant-norm pulse and checks the radicand on the `grid_n`
/// grid and on a 10× finer pre-scan.
pub fn pulse_constant_norm(
    s_i: BlochVector,
    s_f: BlochVector,
    branch_n: i64,
    mu: f64,
    grid_n: usize,
) -> Result<ConstantNormPulse> {
    let theta = geometry::angle_between(s_i, s_f)?;
    if !mu.is_finite() {
        return Err(Error::Domain(format!("mu = {mu} must be finite")));
    }
    let pulse = ConstantNormPulse {
        s_i,
        axis: geometry::perpendicular_axis(s_i, s_f),
        angle: effective_angle(theta, branch_n),
        mu,
    };
    let fine = grid_n.max(2) * 10;
    for i in 0..=fine {
        let t = i as f64 / fine as f64;
        let r = pulse.radicand(t);
        if r < -RADICAND_SLACK * pulse.magnitude_squared().max(1.0) {
            return Err(Error::NegativeRadicand { t, value: r });
        }
    }
    Ok(pulse)
}

impl ConstantNormPulse {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn axis(&self) -> UnitAxis {
        self.axis
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.angle * self.mu * t * (1.0 - t)
    }

    pub fn phi_rate(&self, t: f64) -> f64 {
        self.angle * self.mu * (1.0 - 2.0 * t)
    }

    /// `B² = angle²(1 + μ²)`.
    pub fn magnitude_squared(&self) -> f64 {
        self.angle * self.angle * (1.0 + self.mu * self.mu)
    }

    /// Right-handed moving triad `{s₀, s_τ, ŝ⊥}`.
    pub fn triad(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let perp = self.axis.vector();
        let s0 = rotate(self.s_i, self.axis, self.angle * t);
        (s0, cross(perp, s0), perp)
    }

    pub fn state(&self, t: f64) -> BlochVector {
        let (s0, _, perp) = self.triad(t);
        let (sin, cos) = self.phi(t).sin_cos();
        s0 * cos + perp * sin
    }

    /// Field perpendicular to `s` that produces the tilted trajectory.
    pub fn base_field(&self, t: f64) -> Vec3 {
        let (s0, tau, perp) = self.triad(t);
        let (sin, cos) = self.phi(t).sin_cos();
        perp * (self.angle * cos * cos) - tau * self.phi_rate(t) - s0 * (self.angle * sin * cos)
    }

    pub fn radicand(&self, t: f64) -> f64 {
        let cos = self.phi(t).cos();
        let rate = self.phi_rate(t);
        self.magnitude_squared() - self.angle * self.angle * cos * cos - rate * rate
    }

    /// Longitudinal top-up `f(t)`, `+` branch.
    pub fn top_up(&self, t: f64) -> f64 {
        self.radicand(t).max(0.0).sqrt()
    }
}

impl ControlField for ConstantNormPulse {
    fn field(&self, t: f64) -> Vec3 {
        self.base_field(t) + self.state(t) * self.top_up(t)
    }
}

/// Closed-form field of any family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseField {
    Axis(AxisPulse),
    ConstantNorm(ConstantNormPulse),
}

impl ControlField for PulseField {
    fn field(&self, t: f64) -> Vec3 {
        match self {
            PulseField::Axis(p) => p.field(t),
            PulseField::ConstantNorm(p) => p.field(t),
        }
    }

    fn field_rate(&self, t: f64) -> Option<Vec3> {
        match self {
            PulseField::Axis(p) => p.field_rate(t),
            PulseField::ConstantNorm(p) => p.field_rate(t),
        }
    }

    fn field_accel(&self, t: f64) -> Option<Vec3> {
        match self {
            PulseField::Axis(p) => p.field_accel(t),
            PulseField::ConstantNorm(p) => p.field_accel(t),
        }
    }

    fn field_jerk(&self, t: f64) -> Option<Vec3> {
        match self {
            PulseField::Axis(p) => p.field_jerk(t),
            PulseField::ConstantNorm(p) => p.field_jerk(t),
        }
    }
}

/// Control field sampled on the uniform grid `t_i = i/N`, `N ≥ 2`.
///
/// Schedules built from a closed-form field keep it, so integrators can
/// evaluate the field between grid points and costs can use exact
/// derivatives.
#[derive(Clone)]
pub struct ControlSchedule {
    values: Vec<Vec3>,
    source: Option<Arc<dyn ControlField>>,
}

impl fmt::Debug for ControlSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSchedule")
            .field("intervals", &self.intervals())
            .field("analytic", &self.source.is_some())
            .finish()
    }
}

impl ControlSchedule {
    /// Samples `field` on `n` intervals; odd `n` is bumped to the next even
    /// number so Simpson's rule applies.
    pub fn from_field<F: ControlField + 'static>(field: F, n: usize) -> Result<Self> {
        Self::from_shared(Arc::new(field), n)
    }

    pub fn from_shared(field: Arc<dyn ControlField>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need N ≥ 2 intervals, got {n}"
            )));
        }
        let n = n + n % 2;
        let values: Vec<Vec3> = (0..=n).map(|i| field.field(i as f64 / n as f64)).collect();
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "non-finite field at t = {}",
                bad as f64 / n as f64
            )));
        }
        Ok(ControlSchedule {
            values,
            source: Some(field),
        })
    }

    /// Schedule from bare grid values `b(i/N)`, `i = 0..=N`.
    pub fn from_values(values: Vec<Vec3>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 3 samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite field sample".into()));
        }
        Ok(ControlSchedule {
            values,
            source: None,
        })
    }

    /// Schedule from `(t, b)` pairs; times must form the grid `i/N` to 1e−9.
    pub fn from_samples(samples: &[(f64, Vec3)]) -> Result<Self> {
        let n = samples.len().saturating_sub(1);
        for (i, (t, _)) in samples.iter().enumerate() {
            let expected = i as f64 / n.max(1) as f64;
            if !t.is_finite() || (t - expected).abs() > 1e-9 {
                return Err(Error::InvalidSchedule(format!(
                    "sample {i} at t = {t}, expected uniform grid value {expected}"
                )));
            }
        }
        Self::from_values(samples.iter().map(|(_, b)| *b).collect())
    }

    /// Number of grid intervals `N`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.intervals() as f64
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, b)| (self.time(i), *b))
    }

    pub fn source(&self) -> Option<&dyn ControlField> {
        self.source.as_deref()
    }

    pub fn is_analytic(&self) -> bool {
        self.source.is_some()
    }

    /// Drops the closed-form source, keeping only the samples.
    pub fn detached(&self) -> ControlSchedule {
        ControlSchedule {
            values: self.values.clone(),
            source: None,
        }
    }

    /// Field at the midpoint of interval `i`: exact when a source is present,
    /// cubic interpolation otherwise.
    pub fn midpoint(&self, i: usize) -> Vec3 {
        match &self.source {
            Some(f) => f.field((i as f64 + 0.5) / self.intervals() as f64),
            None => quadrature::midpoint_cubic(&self.values, i),
        }
    }

    fn analytic_or<F, G>(&self, exact: F, fallback: G) -> Vec<Vec3>
    where
        F: Fn(&dyn ControlField, f64) -> Option<Vec3>,
        G: FnOnce() -> Vec<Vec3>,
    {
        if let Some(src) = self.source() {
            let exact: Option<Vec<Vec3>> = (0..=self.intervals())
                .map(|i| exact(src, self.time(i)))
                .collect();
            if let Some(v) = exact {
                return v;
            }
        }
        fallback()
    }

    /// `db/dt` on the grid.
    pub fn rates(&self) -> Vec<Vec3> {
        self.analytic_or(
            |f, t| f.field_rate(t),
            || quadrature::first_derivative(&self.values, self.step()),
        )
    }

    /// `d²b/dt²` on the grid.
    pub fn accels(&self) -> Vec<Vec3> {
        self.analytic_or(
            |f, t| f.field_accel(t),
            || quadrature::second_derivative(&self.values, self.step()),
        )
    }

    /// `d³b/dt³` on the grid; the numerical fallback differentiates `accels`.
    pub fn jerks(&self) -> Vec<Vec3> {
        self.analytic_or(
            |f, t| f.field_jerk(t),
            || quadrature::first_derivative(&self.accels(), self.step()),
        )
    }
}

/// States `s(i/N)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<BlochVector>,
}

impl Trajectory {
    pub fn from_states(states: Vec<BlochVector>) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 3 states, got {}",
                states.len()
            )));
        }
        Ok(Trajectory { states })
    }

    /// Samples `state(t)` on `n` intervals.
    pub fn sample<F: Fn(f64) -> BlochVector>(state: F, n: usize) -> Result<Self> {
        Self::from_states((0..=n).map(|i| state(i as f64 / n as f64)).collect())
    }

    pub fn intervals(&self) -> usize {
        self.states.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.intervals() as f64
    }

    pub fn states(&self) -> &[BlochVector] {
        &self.states
    }

    pub fn initial_state(&self) -> BlochVector {
        self.states[0]
    }

    pub fn final_state(&self) -> BlochVector {
        self.states[self.states.len() - 1]
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, BlochVector)> + '_ {
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| (self.time(i), *s))
    }

    /// Largest `| |s| − 1 |` over the samples.
    pub fn max_norm_deviation(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `s(t) = [sin(θ − Φ(t)) s_i + sin Φ(t) s_f] / sin θ` for a field along ŝ⊥
/// with accumulated angle `Φ`.
///
/// Fails when `s_i` and `s_f` are parallel or antipodal; use
/// [`trajectory_by_rotation`] with an explicit axis there.
pub fn trajectory_closed_form<F: Fn(f64) -> f64>(
    s_i: BlochVector,
    s_f: BlochVector,
    accumulated: F,
    n: usize,
) -> Result<Trajectory> {
    let theta = geometry::angle_between(s_i, s_f)?;
    let sin_theta = cross(s_i, s_f).norm();
    if sin_theta <= DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "closed-form trajectory needs sin θ ≠ 0 (θ = {theta})"
        )));
    }
    Trajectory::sample(
        |t| {
            let phi = accumulated(t);
            (s_i * (theta - phi).sin() + s_f * phi.sin()) / sin_theta
        },
        n,
    )
}

/// `s(t) = rotate(s_i, axis, Φ(t))`; valid for any geometry.
pub fn trajectory_by_rotation<F: Fn(f64) -> f64>(
    s_i: BlochVector,
    axis: UnitAxis,
    accumulated: F,
    n: usize,
) -> Result<Trajectory> {
    Trajectory::sample(|t| rotate(s_i, axis, accumulated(t)), n)
}

/// A synthesized pulse: field, its samples, and the closed-form trajectory.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub spec: PulseSpec,
    pub field: PulseField,
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
    pub warnings: Vec<String>,
}

/// Builds the pulse described by `spec` for `s_i → s_f` on `grid_n` intervals.
///
/// `spec.theta` and `spec.axis` are recomputed from the states. Parallel or
/// antipodal states use the fallback axis and a rotation-built trajectory,
/// and say so in `warnings`.
pub fn synthesize(
    spec: &PulseSpec,
    s_i: BlochVector,
    s_f: BlochVector,
    grid_n: usize,
) -> Result<Synthesis> {
    let (fresh, fallback) = PulseSpec::for_states(spec.family, s_i, s_f)?;
    let spec = PulseSpec {
        theta: fresh.theta,
        axis: fresh.axis,
        ..*spec
    };
    let mut warnings = Vec::new();
    if fallback {
        warnings.push(format!(
            "initial and final states are {}; rotation axis is not unique, using fallback axis ({:.6}, {:.6}, {:.6})",
            if s_i.dot(s_f) < 0.0 { "antipodal" } else { "parallel" },
            spec.axis.vector().x,
            spec.axis.vector().y,
            spec.axis.vector().z
        ));
    }
    let grid_n = grid_n + grid_n % 2;

    let (field, trajectory) = match spec.family {
        Family::B1 | Family::B2 | Family::B3 => {
            let profile = spec.profile()?.expect("axis family has a profile");
            let trajectory = if fallback {
                trajectory_by_rotation(s_i, spec.axis, |t| profile.accumulated(t), grid_n)?
            } else {
                trajectory_closed_form(s_i, s_f, |t| profile.accumulated(t), grid_n)?
            };
            (PulseField::Axis(profile.along(spec.axis)), trajectory)
        }
        Family::CN => {
            let pulse = pulse_constant_norm(s_i, s_f, spec.branch_n, spec.mu, grid_n)?;
            let trajectory = Trajectory::sample(|t| pulse.state(t), grid_n)?;
            (PulseField::ConstantNorm(pulse), trajectory)
        }
        Family::Custom => {
            return Err(Error::Domain(
                "custom schedules are loaded from samples, not synthesized".into(),
            ))
        }
    };
    let schedule = ControlSchedule::from_field(field, grid_n)?;
    Ok(Synthesis {
        spec,
        field,
        schedule,
        trajectory,
        warnings,
    })
}
