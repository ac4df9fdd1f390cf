//! Brute-force checks that the analytic pulses minimize their criteria.
//!
//! Two independent routes are provided:
//!
//! * random perturbation search: the analytic pulse is perturbed by random
//!   combinations of zero-mean basis functions (which keep `∫ b` and hence
//!   arrival fixed) and must never lose to a perturbed competitor;
//! * [`direct_discrete_minimizer`]: the discretized quadratic cost is
//!   minimized exactly under the linear arrival constraint, without any
//!   knowledge of the analytic solution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::geometry::{cross, BlochVector, Vec3};
use crate::par;
use crate::pulses::{self, ControlField, ControlSchedule, Profile, ScalarPulse, DEFAULT_GRID};
use crate::quadrature::simpson;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MODES: usize = 12;
/// Default amplitude as a fraction of `|θ + 2πn|`.
pub const DEFAULT_AMPLITUDE_FRACTION: f64 = 0.3;
pub const FLUENCE_TOLERANCE: f64 = 1e-9;
pub const RATE_TOLERANCE: f64 = 1e-8;
pub const MIXED_TOLERANCE: f64 = 1e-8;
/// Weight of the terminal penalty `|s(1) − s_f|²` in off-axis checks.
pub const TERMINAL_PENALTY: f64 = 1e6;
pub const OFF_AXIS_TRIALS: usize = 20;
/// Trials kept in a verdict's certificate (lowest costs first).
pub const CERTIFICATE_LEN: usize = 16;
pub const MAX_QP_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Criterion {
    /// `∫ |b|²`.
    Fluence,
    /// `∫ |ḃ|²`.
    Rate,
    /// `(1/2a) ∫ |b|² + ω⁻² |ḃ|²`.
    Mixed { a: f64, omega: f64 },
}

impl Criterion {
    /// Cost from the integrals `∫ b²` and `∫ ḃ²`.
    pub fn combine(&self, fluence: f64, rate: f64) -> f64 {
        match *self {
            Criterion::Fluence => fluence,
            Criterion::Rate => rate,
            Criterion::Mixed { a, omega } => (fluence + rate / (omega * omega)) / (2.0 * a),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Criterion::Mixed { a, omega } = *self {
            if !(a.is_finite() && a > 0.0 && omega.is_finite() && omega > 0.0) {
                return Err(Error::Domain(format!(
                    "mixed criterion needs a, ω > 0 (a = {a}, ω = {omega})"
                )));
            }
        }
        Ok(())
    }

    /// The endpoint class the criterion is posed on.
    pub fn default_endpoints(&self) -> Endpoints {
        match self {
            Criterion::Fluence => Endpoints::Free,
            Criterion::Rate | Criterion::Mixed { .. } => Endpoints::Vanishing,
        }
    }
}

/// Cost of an along-axis scalar pulse, by Simpson quadrature on `grid_n`
/// intervals with exact derivatives.
pub fn scalar_cost<P: ScalarPulse + ?Sized>(criterion: Criterion, pulse: &P, grid_n: usize) -> f64 {
    let n = grid_n.max(2) + grid_n % 2;
    let h = 1.0 / n as f64;
    let b2: Vec<f64> = (0..=n).map(|i| pulse.value(i as f64 * h).powi(2)).collect();
    let r2: Vec<f64> = (0..=n).map(|i| pulse.rate(i as f64 * h).powi(2)).collect();
    criterion.combine(simpson(&b2, h), simpson(&r2, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `√2 cos(2πkt)`, `√2 sin(2πkt)`: orthonormal and zero-mean.
    Fourier,
    /// `sin(kπt) − c_k sin(πt)`, `k ≥ 2`, with `c_k` restoring zero mean; all
    /// modes vanish at `t = 0` and `t = 1`.
    EndpointVanishing,
}

/// Zero-mean perturbation modes `δ_j(t)` with `∫₀¹ δ_j = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBasis {
    pub kind: BasisKind,
    pub modes: usize,
    /// Coefficients are drawn uniformly from `[−amplitude_scale, amplitude_scale]`.
    pub amplitude_scale: f64,
}

impl PerturbationBasis {
    pub fn fourier(modes: usize, amplitude_scale: f64) -> Self {
        PerturbationBasis {
            kind: BasisKind::Fourier,
            modes,
            amplitude_scale,
        }
    }

    pub fn endpoint_vanishing(modes: usize, amplitude_scale: f64) -> Self {
        PerturbationBasis {
            kind: BasisKind::EndpointVanishing,
            modes,
            amplitude_scale,
        }
    }

    /// 12 modes of the kind suited to `criterion`, amplitude `0.3 |angle|`.
    pub fn default_for(criterion: Criterion, angle: f64) -> Self {
        let amp = DEFAULT_AMPLITUDE_FRACTION * angle.abs();
        match criterion.default_endpoints() {
            Endpoints::Free => Self::fourier(DEFAULT_MODES, amp),
            Endpoints::Vanishing => Self::endpoint_vanishing(DEFAULT_MODES, amp),
        }
    }

    pub fn vanishes_at_ends(&self) -> bool {
        self.kind == BasisKind::EndpointVanishing
    }

    fn sine_correction(k: usize) -> f64 {
        // mean of sin(kπt) over mean of sin(πt)
        let mean_k = (1.0 - (k as f64 * PI).cos()) / (k as f64 * PI);
        mean_k / (2.0 / PI)
    }

    /// `δ_j(t)`.
    pub fn value(&self, j: usize, t: f64) -> f64 {
        match self.kind {
            BasisKind::Fourier => {
                let w = 2.0 * PI * (j / 2 + 1) as f64;
                if j.is_multiple_of(2) {
                    2f64.sqrt() * (w * t).cos()
                } else {
                    2f64.sqrt() * (w * t).sin()
                }
            }
            BasisKind::EndpointVanishing => {
                let k = j + 2;
                (k as f64 * PI * t).sin() - Self::sine_correction(k) * (PI * t).sin()
            }
        }
    }

    /// `δ_j'(t)`.
    pub fn rate(&self, j: usize, t: f64) -> f64 {
        match self.kind {
            BasisKind::Fourier => {
                let w = 2.0 * PI * (j / 2 + 1) as f64;
                if j.is_multiple_of(2) {
                    -2f64.sqrt() * w * (w * t).sin()
                } else {
                    2f64.sqrt() * w * (w * t).cos()
                }
            }
            BasisKind::EndpointVanishing => {
                let k = j + 2;
                let w = k as f64 * PI;
                w * (w * t).cos() - Self::sine_correction(k) * PI * (PI * t).cos()
            }
        }
    }

    /// `∫₀ᵗ δ_j`.
    pub fn accumulated(&self, j: usize, t: f64) -> f64 {
        match self.kind {
            BasisKind::Fourier => {
                let w = 2.0 * PI * (j / 2 + 1) as f64;
                if j.is_multiple_of(2) {
                    2f64.sqrt() * (w * t).sin() / w
                } else {
                    2f64.sqrt() * (1.0 - (w * t).cos()) / w
                }
            }
            BasisKind::EndpointVanishing => {
                let k = j + 2;
                let w = k as f64 * PI;
                (1.0 - (w * t).cos()) / w - Self::sine_correction(k) * (1.0 - (PI * t).cos()) / PI
            }
        }
    }

    /// Draws one coefficient vector.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.modes)
            .map(|_| {
                if self.amplitude_scale > 0.0 {
                    rng.random_range(-self.amplitude_scale..=self.amplitude_scale)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// `base(t) + Σ c_j δ_j(t)`.
#[derive(Debug, Clone)]
pub struct PerturbedPulse<'a> {
    pub base: Profile,
    pub basis: &'a PerturbationBasis,
    pub coefficients: Vec<f64>,
}

impl ScalarPulse for PerturbedPulse<'_> {
    fn value(&self, t: f64) -> f64 {
        self.base.value(t)
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| c * self.basis.value(j, t))
                .sum::<f64>()
    }

    fn rate(&self, t: f64) -> f64 {
        self.base.rate(t)
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| c * self.basis.rate(j, t))
                .sum::<f64>()
    }

    fn accumulated(&self, t: f64) -> f64 {
        self.base.accumulated(t)
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| c * self.basis.accumulated(j, t))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub coefficients: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffAxisCheck {
    pub n_trials: usize,
    pub min_perturbed_cost: f64,
    pub worst_violation: f64,
    pub max_arrival_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub criterion: Criterion,
    pub basis: PerturbationBasis,
    pub seed: u64,
    pub base_cost: f64,
    pub min_perturbed_cost: f64,
    pub n_trials: usize,
    /// `max(base_cost − perturbed_cost)` over the trials.
    pub worst_violation: f64,
    pub tolerance: f64,
    /// Lowest-cost trials, at most [`CERTIFICATE_LEN`].
    pub certificate: Vec<Trial>,
    pub off_axis: Option<OffAxisCheck>,
}

impl OracleVerdict {
    /// True when no sampled competitor beat the base pulse by more than the
    /// tolerance, off-axis trials included.
    pub fn passed(&self) -> bool {
        self.worst_violation <= self.tolerance
            && self
                .off_axis
                .as_ref()
                .is_none_or(|o| o.worst_violation <= self.tolerance)
    }
}

/// Mode tables on the quadrature grid.
struct ModeTable {
    h: f64,
    base_value: Vec<f64>,
    base_rate: Vec<f64>,
    value: Vec<Vec<f64>>,
    rate: Vec<Vec<f64>>,
}

impl ModeTable {
    fn new(base: &Profile, basis: &PerturbationBasis, grid_n: usize) -> Self {
        let n = grid_n.max(2) + grid_n % 2;
        let h = 1.0 / n as f64;
        let ts: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        ModeTable {
            h,
            base_value: ts.iter().map(|&t| base.value(t)).collect(),
            base_rate: ts.iter().map(|&t| base.rate(t)).collect(),
            value: (0..basis.modes)
                .map(|j| ts.iter().map(|&t| basis.value(j, t)).collect())
                .collect(),
            rate: (0..basis.modes)
                .map(|j| ts.iter().map(|&t| basis.rate(j, t)).collect())
                .collect(),
        }
    }

    fn cost(&self, criterion: Criterion, coefficients: &[f64]) -> f64 {
        let mut b = self.base_value.clone();
        let mut r = self.base_rate.clone();
        for (j, &c) in coefficients.iter().enumerate() {
            if c != 0.0 {
                for (bi, mi) in b.iter_mut().zip(&self.value[j]) {
                    *bi += c * mi;
                }
                for (ri, mi) in r.iter_mut().zip(&self.rate[j]) {
                    *ri += c * mi;
                }
            }
        }
        b.iter_mut().for_each(|v| *v *= *v);
        r.iter_mut().for_each(|v| *v *= *v);
        criterion.combine(simpson(&b, self.h), simpson(&r, self.h))
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Random perturbation search around `base`. Trials run in parallel; each
/// trial draws from its own stream of `seed`, so the verdict does not
/// depend on scheduling.
pub fn verify_minimum(
    criterion: Criterion,
    base: Profile,
    basis: &PerturbationBasis,
    n_trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<OracleVerdict> {
    criterion.validate()?;
    if n_trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    if criterion.default_endpoints() == Endpoints::Vanishing && !basis.vanishes_at_ends() {
        return Err(Error::Domain(
            "criterion with vanishing endpoints needs an endpoint-vanishing basis".into(),
        ));
    }
    let table = ModeTable::new(&base, basis, DEFAULT_GRID);
    let base_cost = table.cost(criterion, &[]);
    let trials: Vec<Trial> = par::map_indexed(n_trials, |i| {
        let coefficients = basis.sample(&mut trial_rng(seed, i));
        let cost = table.cost(criterion, &coefficients);
        Trial { coefficients, cost }
    });

    let min_perturbed_cost = trials.iter().map(|t| t.cost).fold(f64::INFINITY, f64::min);
    let worst_violation = trials
        .iter()
        .map(|t| base_cost - t.cost)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials[a].cost.total_cmp(&trials[b].cost).then(a.cmp(&b)));
    let certificate = order
        .into_iter()
        .take(CERTIFICATE_LEN)
        .map(|i| trials[i].clone())
        .collect();

    Ok(OracleVerdict {
        criterion,
        basis: *basis,
        seed,
        base_cost,
        min_perturbed_cost,
        n_trials,
        worst_violation,
        tolerance,
        certificate,
        off_axis: None,
    })
}

fn check_open_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < PI {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta = {theta} outside (0, π)")))
    }
}

/// B1 against zero-mean perturbations under `∫ b²`; tolerance 1e−9.
pub fn verify_fluence_minimum(
    theta: f64,
    branch_n: i64,
    basis: &PerturbationBasis,
    n_trials: usize,
    seed: u64,
) -> Result<OracleVerdict> {
    check_open_theta(theta)?;
    let base = pulses::pulse_b1(theta, branch_n)?;
    verify_minimum(
        Criterion::Fluence,
        base,
        basis,
        n_trials,
        seed,
        FLUENCE_TOLERANCE,
    )
}

/// B2 against endpoint-vanishing zero-mean perturbations under `∫ ḃ²`;
/// tolerance 1e−8.
pub fn verify_rate_minimum(
    theta: f64,
    branch_n: i64,
    basis: &PerturbationBasis,
    n_trials: usize,
    seed: u64,
) -> Result<OracleVerdict> {
    check_open_theta(theta)?;
    let base = pulses::pulse_b2(theta, branch_n)?;
    verify_minimum(Criterion::Rate, base, basis, n_trials, seed, RATE_TOLERANCE)
}

/// B3 against endpoint-vanishing zero-mean perturbations under the mixed
/// criterion; tolerance 1e−8.
pub fn verify_mixed_minimum(
    theta: f64,
    branch_n: i64,
    a: f64,
    omega: f64,
    basis: &PerturbationBasis,
    n_trials: usize,
    seed: u64,
) -> Result<OracleVerdict> {
    check_open_theta(theta)?;
    let base = pulses::pulse_b3(theta, branch_n, omega)?;
    verify_minimum(
        Criterion::Mixed { a, omega },
        base,
        basis,
        n_trials,
        seed,
        MIXED_TOLERANCE,
    )
}

/// Field `base(t) ŝ⊥ + Σ c_j δ_j(t) u + Σ d_j δ_j(t) v` with `{u, v, ŝ⊥}`
/// orthonormal.
struct OffAxisField {
    base: Profile,
    axis: Vec3,
    u: Vec3,
    v: Vec3,
    basis: PerturbationBasis,
    cu: Vec<f64>,
    cv: Vec<f64>,
}

impl OffAxisField {
    fn combine<F: Fn(usize) -> f64>(&self, mode: F) -> (f64, f64) {
        let mut du = 0.0;
        let mut dv = 0.0;
        for j in 0..self.basis.modes {
            let m = mode(j);
            du += self.cu[j] * m;
            dv += self.cv[j] * m;
        }
        (du, dv)
    }
}

impl ControlField for OffAxisField {
    fn field(&self, t: f64) -> Vec3 {
        let (du, dv) = self.combine(|j| self.basis.value(j, t));
        self.axis * self.base.value(t) + self.u * du + self.v * dv
    }

    fn field_rate(&self, t: f64) -> Option<Vec3> {
        let (du, dv) = self.combine(|j| self.basis.rate(j, t));
        Some(self.axis * self.base.rate(t) + self.u * du + self.v * dv)
    }
}

/// Spot check of the reduction to on-axis fields: perturbations in the two
/// directions perpendicular to `ŝ⊥`, scored by the criterion plus
/// [`TERMINAL_PENALTY`]` · |s(1) − s_f|²` after propagation.
#[allow(clippy::too_many_arguments)]
pub fn off_axis_check(
    criterion: Criterion,
    base: Profile,
    s_i: BlochVector,
    s_f: BlochVector,
    basis: &PerturbationBasis,
    n_trials: usize,
    seed: u64,
    grid_n: usize,
) -> Result<OffAxisCheck> {
    criterion.validate()?;
    let axis = crate::geometry::perpendicular_axis(s_i, s_f);
    let u = s_i.normalize().ok_or(Error::NotUnit { norm: 0.0 })?;
    let v = cross(axis.vector(), u);
    let score = |cu: Vec<f64>, cv: Vec<f64>| -> Result<(f64, f64)> {
        let field = OffAxisField {
            base,
            axis: axis.vector(),
            u,
            v,
            basis: *basis,
            cu,
            cv,
        };
        let schedule = ControlSchedule::from_field(field, grid_n)?;
        let arrival = dynamics::propagate_to(s_i, &schedule, s_f)
            .final_error
            .unwrap_or(0.0);
        let cost = criterion.combine(costs::fluence(&schedule), costs::rate_cost(&schedule).value);
        Ok((cost + TERMINAL_PENALTY * arrival * arrival, arrival))
    };
    let (base_cost, _) = score(vec![0.0; basis.modes], vec![0.0; basis.modes])?;
    let results: Vec<Result<(f64, f64)>> = par::map_indexed(n_trials, |i| {
        let mut rng = trial_rng(seed ^ 0x6f66_665f_6178_6973, i);
        let cu = basis.sample(&mut rng);
        let cv = basis.sample(&mut rng);
        score(cu, cv)
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;
    Ok(OffAxisCheck {
        n_trials,
        min_perturbed_cost: results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        worst_violation: results
            .iter()
            .map(|r| base_cost - r.0)
            .fold(f64::NEG_INFINITY, f64::max),
        max_arrival_error: results.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// `criterion(base + ε δ) − criterion(base)` for amplitudes `eps`, and the
/// least-squares slope of `log(Δcost)` against `log ε`. A strict local
/// minimum gives slope 2.
pub fn scaling_exponent<P: ScalarPulse + ?Sized>(
    criterion: Criterion,
    base: &Profile,
    direction: &P,
    eps: &[f64],
) -> (Vec<f64>, f64) {
    let base_cost = scalar_cost(criterion, base, DEFAULT_GRID);
    let deltas: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let p = Combination {
                base,
                direction,
                eps: e,
            };
            scalar_cost(criterion, &p, DEFAULT_GRID) - base_cost
        })
        .collect();
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = deltas.iter().map(|d| d.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (deltas, sxy / sxx)
}

/// `base + eps · direction`.
struct Combination<'a, P: ?Sized> {
    base: &'a Profile,
    direction: &'a P,
    eps: f64,
}

impl<P: ScalarPulse + ?Sized> ScalarPulse for Combination<'_, P> {
    fn value(&self, t: f64) -> f64 {
        self.base.value(t) + self.eps * self.direction.value(t)
    }

    fn rate(&self, t: f64) -> f64 {
        self.base.rate(t) + self.eps * self.direction.rate(t)
    }

    fn accumulated(&self, t: f64) -> f64 {
        self.base.accumulated(t) + self.eps * self.direction.accumulated(t)
    }
}

/// `other − base` as a perturbation direction; zero-mean when both
/// integrate to the same angle.
pub struct Difference<'a> {
    pub base: &'a Profile,
    pub other: &'a Profile,
}

impl ScalarPulse for Difference<'_> {
    fn value(&self, t: f64) -> f64 {
        self.other.value(t) - self.base.value(t)
    }

    fn rate(&self, t: f64) -> f64 {
        self.other.rate(t) - self.base.rate(t)
    }

    fn accumulated(&self, t: f64) -> f64 {
        self.other.accumulated(t) - self.base.accumulated(t)
    }
}

/// Cost change when moving from `base` a fraction `eps` of the way to
/// `other`.
pub fn directional_change(criterion: Criterion, base: &Profile, other: &Profile, eps: f64) -> f64 {
    let dir = Difference { base, other };
    let moved = Combination {
        base,
        direction: &dir,
        eps,
    };
    scalar_cost(criterion, &moved, DEFAULT_GRID) - scalar_cost(criterion, base, DEFAULT_GRID)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoints {
    Free,
    /// `b(0) = b(1) = 0`.
    Vanishing,
}

/// Optimal pulse values on the grid `t_j = j/(m − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePulse {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub cost: f64,
}

impl DiscretePulse {
    /// `max_j |values_j − b(t_j)|`.
    pub fn max_error<P: ScalarPulse + ?Sized>(&self, pulse: &P) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(t, v)| (v - pulse.value(*t)).abs())
            .fold(0.0, f64::max)
    }
}

/// Minimizes the discretized criterion over `m` pulse values subject to the
/// trapezoid arrival constraint `Σ w_j b_j = θ + 2πn` (and `b_0 = b_{m−1} = 0`
/// for [`Endpoints::Vanishing`]), by solving the KKT system of the
/// equality-constrained quadratic program.
///
/// Fluence is discretized with trapezoid weights, the rate term with forward
/// differences `Σ (b_{j+1} − b_j)²/h`.
pub fn direct_discrete_minimizer(
    criterion: Criterion,
    theta: f64,
    branch_n: i64,
    endpoints: Endpoints,
    grid_m: usize,
) -> Result<DiscretePulse> {
    criterion.validate()?;
    if !(3..=MAX_QP_GRID).contains(&grid_m) {
        return Err(Error::Domain(format!(
            "grid_m = {grid_m} outside [3, {MAX_QP_GRID}]"
        )));
    }
    let m = grid_m;
    let h = 1.0 / (m - 1) as f64;
    let angle = pulses::effective_angle(theta, branch_n);

    let weights: Vec<f64> = (0..m)
        .map(|j| if j == 0 || j == m - 1 { 0.5 * h } else { h })
        .collect();
    let mut q_fluence = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        q_fluence[(j, j)] = weights[j];
    }
    let mut q_rate = DMatrix::<f64>::zeros(m, m);
    for j in 0..m - 1 {
        let k = 1.0 / h;
        q_rate[(j, j)] += k;
        q_rate[(j + 1, j + 1)] += k;
        q_rate[(j, j + 1)] -= k;
        q_rate[(j + 1, j)] -= k;
    }
    let q = match criterion {
        Criterion::Fluence => q_fluence,
        Criterion::Rate => q_rate,
        Criterion::Mixed { a, omega } => (q_fluence + q_rate / (omega * omega)) / (2.0 * a),
    };

    let mut rows: Vec<(Vec<f64>, f64)> = vec![(weights.clone(), angle)];
    if endpoints == Endpoints::Vanishing {
        let mut first = vec![0.0; m];
        first[0] = 1.0;
        let mut last = vec![0.0; m];
        last[m - 1] = 1.0;
        rows.push((first, 0.0));
        rows.push((last, 0.0));
    }
    let c = rows.len();
    let dim = m + c;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    kkt.view_mut((0, 0), (m, m)).copy_from(&(q.clone() * 2.0));
    for (r, (row, value)) in rows.iter().enumerate() {
        for j in 0..m {
            kkt[(m + r, j)] = row[j];
            kkt[(j, m + r)] = row[j];
        }
        rhs[m + r] = *value;
    }
    let solution = kkt.clone().lu().solve(&rhs).ok_or(Error::Singular)?;
    let residual = (&kkt * &solution - &rhs).amax();
    if !residual.is_finite() || residual > 1e-8 * (1.0 + angle.abs()) {
        return Err(Error::Singular);
    }
    let values: Vec<f64> = solution.rows(0, m).iter().copied().collect();
    let x = DVector::from_column_slice(&values);
    let cost = (x.transpose() * &q * &x)[(0, 0)];
    Ok(DiscretePulse {
        times: (0..m).map(|j| j as f64 * h).collect(),
        values,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn basis_modes_have_zero_mean() {
        for basis in [
            PerturbationBasis::fourier(12, 1.0),
            PerturbationBasis::endpoint_vanishing(12, 1.0),
        ] {
            for j in 0..basis.modes {
                assert!(basis.accumulated(j, 1.0).abs() < 1e-15, "{basis:?} j={j}");
                assert!(basis.accumulated(j, 0.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn endpoint_modes_vanish_at_ends() {
        let basis = PerturbationBasis::endpoint_vanishing(12, 1.0);
        for j in 0..12 {
            assert!(basis.value(j, 0.0).abs() < 1e-15);
            assert!(basis.value(j, 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_amplitude_reproduces_base() {
        let basis = PerturbationBasis::fourier(12, 0.0);
        let v = verify_fluence_minimum(1.0, 0, &basis, 10, 7).unwrap();
        assert_eq!(v.min_perturbed_cost, v.base_cost);
        assert_eq!(v.worst_violation, 0.0);
    }

    #[test]
    fn rate_oracle_rejects_free_basis() {
        let basis = PerturbationBasis::fourier(12, 0.1);
        assert!(verify_rate_minimum(1.0, 0, &basis, 10, 1).is_err());
    }

    #[test]
    fn fluence_oracle_rejects_degenerate_theta() {
        let basis = PerturbationBasis::fourier(12, 0.1);
        assert!(verify_fluence_minimum(0.0, 0, &basis, 10, 1).is_err());
        assert!(verify_fluence_minimum(PI, 0, &basis, 10, 1).is_err());
    }

    #[test]
    fn qp_rejects_oversized_grid() {
        assert!(
            direct_discrete_minimizer(Criterion::Rate, 1.0, 0, Endpoints::Vanishing, 65).is_err()
        );
    }

    #[test]
    fn qp_fluence_is_flat() {
        let d = direct_discrete_minimizer(Criterion::Fluence, FRAC_PI_2, 1, Endpoints::Free, 40)
            .unwrap();
        let angle = FRAC_PI_2 + 2.0 * PI;
        assert!(d.values.iter().all(|v| (v - angle).abs() < 1e-10));
    }
}
