//! Numerical laboratory for finite-time blow-up of the inviscid
//! primitive-equations trace system with temperature.
//!
//! The system evolved on `Z ∈ [0, 1]` is
//!
//! ```text
//! a_t = a² − (∂⁻¹a) a_Z − ∂⁻¹c − ∫₀¹ (2a² − ∂⁻¹c) dZ
//! c_t = 2ac − (∂⁻¹a) c_Z + σ c_ZZ,          σ ∈ {0, 1}
//! ```
//!
//! with `∫₀¹ a = 0` and, for `σ = 1`, `c(0) = c(1) = 0`. Solutions are tracked
//! both in the physical frame ([`trace`]) and in the dynamically rescaled frame
//! around the profile `φ(z) = e^{-z}` ([`selfsim`]).

pub mod diagnostics;
pub mod fit;
pub mod format;
pub mod grid;
pub mod initial;
pub mod monitor;
pub mod params;
pub mod selfsim;
pub mod trace;
pub mod verdict;

pub use grid::{Field, Grid};

use serde::{Deserialize, Serialize};

/// Vertical diffusivity of the temperature trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigma {
    /// `σ = 0`: temperature is transported.
    NonDiffusive,
    /// `σ = 1`: advection-diffusion with Dirichlet ends.
    Diffusive,
}

impl Sigma {
    pub fn from_int(v: i64) -> Option<Self> {
        match v {
            0 => Some(Self::NonDiffusive),
            1 => Some(Self::Diffusive),
            _ => None,
        }
    }

    pub fn as_int(self) -> i32 {
        match self {
            Self::NonDiffusive => 0,
            Self::Diffusive => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_int() as f64
    }
}
