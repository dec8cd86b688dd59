//! Discretization engine: rational transfer functions, the bilinear map, the
//! difference-equation runtime and the PI / swing-equation recursions built
//! on it.

mod block;
mod inertia;
mod perturb;
mod pi;
mod tf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{DiscreteBlock, Stability};
pub use inertia::{inertia_step, InertiaEmulator, InertiaParams, TrapezoidalInertia, WPath};
pub use perturb::SumPerturbation;
pub use pi::{
    pi_tustin_step, trapezoidal_pi_step, PiParams, PiRegulator, Saturation, TrapezoidalState,
};
pub use tf::{tustin_discretize, tustin_eval, RationalTf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("improper transfer function: numerator degree {num_degree} > denominator degree {den_degree}")]
    ImproperTf { num_degree: usize, den_degree: usize },
    #[error("denominator polynomial is identically zero")]
    ZeroDenominator,
    #[error("bilinear map produced a degenerate denominator")]
    DegenerateDenominator,
    #[error("non-finite coefficient after normalization")]
    NonFiniteCoefficient,
    #[error("sampling period must be positive and finite, got {0}")]
    InvalidSamplePeriod(f64),
    #[error("K = {k} does not equal 2/ts = {expected}")]
    InconsistentK { k: f64, expected: f64 },
    #[error("invalid inertia parameters H = {h}, D = {d}")]
    InvalidInertia { h: f64, d: f64 },
    #[error("invalid PI gains kp = {kp}, ki = {ki}")]
    InvalidGain { kp: f64, ki: f64 },
    #[error("pole computation did not converge")]
    RootFindingFailed,
}

/// Which discrete form every controller block uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretizer {
    #[default]
    Tustin,
    Trapezoidal,
}
