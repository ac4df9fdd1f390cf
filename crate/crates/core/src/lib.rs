//! Optimal control fields that rotate a Bloch vector between two prescribed
//! states in unit time.
//!
//! Three criteria are covered: minimum fluence (constant field, [`Profile::Constant`]),
//! minimum rate of change (parabolic field, [`Profile::Parabolic`]) and their
//! weighted mix (cosh field, [`Profile::Cosh`]). A constant-magnitude family
//! ([`ConstantNormPulse`]) shows that the rate criterion alone does not select a
//! unique field. Every field can be propagated through the Bloch equation
//! ([`dynamics::propagate`]) and checked against a brute-force perturbation
//! search ([`oracle`]).
//!
//! Time is rescaled to `t ∈ [0, 1]` and fields are in units where the Bloch
//! equation reads `ṡ = b × s`.

pub mod costs;
pub mod dynamics;
mod error;
pub mod geometry;
pub mod oracle;
pub mod par;
pub mod pulses;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{BlochVector, ControlVector, UnitAxis, Vec3};
pub use pulses::{
    ConstantNormPulse, ControlField, ControlSchedule, Family, Profile, PulseField, PulseSpec,
    ScalarPulse, Synthesis, Trajectory,
};
