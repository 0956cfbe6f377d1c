//! Initial data of the form `a₀ = (1/λ₀) φ(Z/ν₀) + ã₀`, balanced to zero mean,
//! and the re-decomposition of shifted data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{derivative, integral, DerivOrder, Field, Grid, GridError};
use crate::selfsim::profile;
use crate::trace::{TraceError, TraceState};
use crate::Sigma;

/// Upper bound on `λ₀` (the existential `λ₀*` of the theorems is taken as 1).
pub const LAMBDA0_STAR: f64 = 1.0;
/// `max|ã₀|`, in self-similar units, at which the balance stops being a
/// perturbation.
pub const BALANCE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitialError {
    #[error("invalid initial-data spec: {0}")]
    InvalidSpec(String),
    #[error("balancing perturbation too large: max|atil0| = {max:e} >= {limit}")]
    InfeasibleBalance { max: f64, limit: f64 },
    #[error("degenerate trace: 1/lambda + atil(0) = {0:e} is not positive")]
    DegenerateTrace(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationFamily {
    None,
    TailBalance,
    PolynomialBump,
}

impl PerturbationFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "tail_balance" => Some(Self::TailBalance),
            "polynomial_bump" => Some(Self::PolynomialBump),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::TailBalance => "tail_balance",
            Self::PolynomialBump => "polynomial_bump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub lambda0: f64,
    pub nu0: f64,
    pub sigma: Sigma,
    /// Amplitude of the family member, in self-similar units.
    pub kappa: f64,
    pub family: PerturbationFamily,
    pub seed: u64,
    /// Amplitude of `c̃₀(z) = c_kappa z² e^{-z}` (times `1 − νz` for σ = 1).
    pub c_kappa: f64,
}

/// `[1/(2 log(1/λ₀)), 3/(2 log(1/λ₀))]`.
pub fn nu0_range(lambda0: f64) -> (f64, f64) {
    let l = (1.0 / lambda0).ln();
    (0.5 / l, 1.5 / l)
}

impl InitialDataSpec {
    /// Smallest admissible `ν₀`, no perturbation, no temperature.
    pub fn canonical(lambda0: f64, sigma: Sigma) -> Self {
        Self {
            lambda0,
            nu0: nu0_range(lambda0).0,
            sigma,
            kappa: 0.0,
            family: PerturbationFamily::None,
            seed: 0,
            c_kappa: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), InitialError> {
        let bad = |m: String| Err(InitialError::InvalidSpec(m));
        if !(self.lambda0 > 0.0 && self.lambda0 < LAMBDA0_STAR / 2.0) {
            return bad(format!("lambda0 = {} outside (0, {})", self.lambda0, LAMBDA0_STAR / 2.0));
        }
        let (lo, hi) = nu0_range(self.lambda0);
        // one ulp of slack so the range ends themselves are accepted
        let slack = 4.0 * f64::EPSILON;
        if !(self.nu0 >= lo * (1.0 - slack) && self.nu0 <= hi * (1.0 + slack)) {
            return bad(format!("nu0 = {} outside [{lo}, {hi}]", self.nu0));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be >= 0", self.kappa));
        }
        if !self.c_kappa.is_finite() {
            return bad("c_kappa must be finite".into());
        }
        Ok(())
    }
}

/// `ψ(z) = 1 − (1+z) e^{-z}`.
pub fn tail_shape(z: f64) -> f64 {
    -(-z).exp_m1() - z * (-z).exp()
}

/// Root `s₀ > 1` of `s e^{-s} = λ₀` (the lower branch of Lambert W).
pub fn initial_self_similar_time(lambda0: f64) -> f64 {
    assert!(lambda0 > 0.0 && lambda0 < (-1.0f64).exp(), "lambda0 = {lambda0}");
    let target = lambda0.ln();
    // g(s) = ln s − s − ln λ₀ is decreasing for s > 1
    let mut s = 1.0 - target;
    for _ in 0..100 {
        let g = s.ln() - s - target;
        let step = g / (1.0 / s - 1.0);
        s -= step;
        if step.abs() <= 1e-15 * s {
            break;
        }
    }
    s
}

/// Family member `p(z)` with `p(0) = p'(0) = 0`, before rebalancing.
fn family_member(spec: &InitialDataSpec, zs: &[f64], us: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.family {
        PerturbationFamily::None => vec![0.0; zs.len()],
        PerturbationFamily::PolynomialBump => {
            let r1: f64 = rng.gen_range(0.0..0.5);
            let r2: f64 = rng.gen_range(0.0..0.5);
            zs.iter()
                .map(|&z| spec.kappa * z * z * (-z).exp() * (1.0 + r1 * z + r2 * z * z))
                .collect()
        }
        PerturbationFamily::TailBalance => {
            let k = rng.gen_range(1..=3) as f64;
            let theta: f64 = rng.gen_range(0.0..2.0 * PI);
            zs.iter()
                .zip(us)
                .map(|(&z, &u)| spec.kappa * tail_shape(z).powi(2) * (2.0 * PI * k * u + theta).cos())
                .collect()
        }
    }
}

/// The self-similar pieces of a built initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremData {
    pub state: TraceState,
    /// `ã₀` on `[0, 1/ν₀]`, self-similar units.
    pub atil0: Field,
    /// Coefficient of `−ψ` that balances the mean.
    pub m: f64,
}

/// Builds the physical state on `n` nodes of `[0, 1]`.
pub fn build_theorem_data(spec: &InitialDataSpec, n: usize) -> Result<TraceState, InitialError> {
    Ok(build_theorem_data_detailed(spec, n)?.state)
}

pub fn build_theorem_data_detailed(spec: &InitialDataSpec, n: usize) -> Result<TheoremData, InitialError> {
    spec.validate()?;
    let unit = Grid::new(0.0, 1.0, n)?;
    let zg = Grid::new(0.0, 1.0 / spec.nu0, n)?;
    let us = unit.nodes();
    let zs = zg.nodes();
    let phi = Field::new(unit, zs.iter().map(|&z| profile(z)).collect())?;
    let psi = Field::new(unit, zs.iter().map(|&z| tail_shape(z)).collect())?;
    let member = Field::new(unit, family_member(spec, &zs, &us))?;
    let int_psi = integral(&psi);
    let m = (integral(&phi) + integral(&member)) / int_psi;
    let atil: Vec<f64> = psi
        .values()
        .iter()
        .zip(member.values())
        .map(|(&p, &q)| q - m * p)
        .collect();
    let max = atil.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max >= BALANCE_LIMIT {
        return Err(InitialError::InfeasibleBalance {
            max,
            limit: BALANCE_LIMIT,
        });
    }
    let inv = 1.0 / spec.lambda0;
    let mut a: Vec<f64> = phi
        .values()
        .iter()
        .zip(&atil)
        .map(|(&p, &q)| inv * (p + q))
        .collect();
    let drift = integral(&Field::new(unit, a.clone())?);
    a.iter_mut().for_each(|v| *v -= drift);

    let c_scale = spec.c_kappa / spec.lambda0.powi(1 + spec.sigma.as_int());
    let mut c: Vec<f64> = zs
        .iter()
        .map(|&z| {
            let base = z * z * (-z).exp();
            match spec.sigma {
                Sigma::NonDiffusive => c_scale * base,
                Sigma::Diffusive => c_scale * base * (1.0 - spec.nu0 * z),
            }
        })
        .collect();
    if spec.sigma == Sigma::Diffusive {
        c[n - 1] = 0.0;
    }
    let state = TraceState::new(Field::new(unit, a)?, Field::new(unit, c)?, spec.sigma, 0.0)?;
    Ok(TheoremData {
        state,
        atil0: Field::new(zg, atil)?,
        m,
    })
}

/// `m` from the closed form `ν₀(1 − e^{-1/ν₀}) / ∫₀¹ ψ(Z/ν₀) dZ`.
pub fn tail_balance_coefficient(nu0: f64) -> f64 {
    let l = 1.0 / nu0;
    // ∫₀^L ψ = L − 2 + (2 + L) e^{-L}
    let int_psi = nu0 * (l - 2.0 + (2.0 + l) * (-l).exp());
    nu0 * (1.0 - (-l).exp()) / int_psi
}

/// `sup|f| + sup_{x≠y} |f(x) − f(y)| / |x − y|^β` over node pairs.
pub fn holder_norm(f: &Field, beta: f64) -> f64 {
    f.max_abs() + holder_seminorm(f, beta)
}

pub fn holder_seminorm(f: &Field, beta: f64) -> f64 {
    let g = f.grid();
    let v = f.values();
    let h = g.spacing();
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let q = (v[j] - v[i]).abs() / (h * (j - i) as f64).powf(beta);
            best = best.max(q);
        }
    }
    best
}

/// `C^{1,β}` norm `sup|f| + sup|f'| + [f']_β`.
pub fn c1_holder_norm(f: &Field, beta: f64) -> f64 {
    let d = derivative(f, DerivOrder::First);
    f.max_abs() + d.max_abs() + holder_seminorm(&d, beta)
}

/// `λ̄₀ = (λ̃₀⁻¹ + ã₀(0))⁻¹`, `ν̄₀ = (λ̃₀/λ̄₀) ν̃₀`.
pub fn redecompose(lam_t: f64, nu_t: f64, atil0_at_0: f64) -> Result<(f64, f64), InitialError> {
    let inv = 1.0 / lam_t + atil0_at_0;
    if !(inv > 0.0) {
        return Err(InitialError::DegenerateTrace(inv));
    }
    let lam_bar = 1.0 / inv;
    Ok((lam_bar, lam_t / lam_bar * nu_t))
}
