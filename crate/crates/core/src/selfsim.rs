//! Dynamic-rescaling frame around the profile `φ(z) = e^{-z}`.
//!
//! A physical state is written as
//!
//! ```text
//! a(t, Z) = (φ(z) + ã(s, z)) / λ,    c(t, Z) = c̃(s, z) / λ^{1+σ},
//! z = Z / ν,    ds/dt = 1/λ,
//! ```
//!
//! with `(λ, ν)` fixed by `ã(0) = ∂_z ã(0) = 0`. The perturbation grid always
//! spans `[0, 1/ν]` with the same node count as the physical grid, so its nodes
//! are the images of the physical nodes and changing `ν` never interpolates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, antiderivative, derivative, integral, DerivOrder, Field, Grid, GridError};
use crate::trace::crank_nicolson_dirichlet;
use crate::Sigma;

/// `|ã(0)|` tolerance.
pub const ORTHO_VALUE_TOL: f64 = 1e-10;
/// `|∂_z ã(0)|` tolerance.
pub const ORTHO_SLOPE_TOL: f64 = 1e-8;
/// `|∫₀^{1/ν} (φ + ã)|` tolerance.
pub const MASS_TOL: f64 = 1e-8;
/// `|c̃(0)|` tolerance for σ = 0.
pub const TEMP_ORIGIN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelfSimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("trace cannot be matched to the profile: a(0) = {a0:e}, a_Z(0) = {slope:e}")]
    DegenerateTrace { a0: f64, slope: f64 },
    #[error("perturbation grid [{lo}, {hi}] does not match [0, 1/nu = {expected}]")]
    DomainMismatch { lo: f64, hi: f64, expected: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("self-similar step {ds:e} fell below the floor {floor:e} at s = {s}")]
    TimeStepUnderflow { ds: f64, floor: f64, s: f64 },
    #[error("negative or non-finite step {0}")]
    InvalidStep(f64),
}

#[inline]
pub fn profile(z: f64) -> f64 {
    (-z).exp()
}

/// `∂_z⁻¹ φ = 1 − e^{-z}`.
#[inline]
pub fn profile_primitive(z: f64) -> f64 {
    -(-z).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarState {
    atil: Field,
    ctil: Field,
    lambda: f64,
    nu: f64,
    s: f64,
    /// Physical time, advanced with `dt = λ ds`.
    t: f64,
    sigma: Sigma,
}

impl SelfSimilarState {
    /// Checked constructor: the grid must be `[0, 1/ν]` and every frame
    /// invariant must hold.
    pub fn new(
        atil: Field,
        ctil: Field,
        lambda: f64,
        nu: f64,
        s: f64,
        sigma: Sigma,
    ) -> Result<Self, SelfSimError> {
        let st = Self::from_raw(atil, ctil, lambda, nu, s, sigma)?;
        st.check_invariants()?;
        Ok(st)
    }

    /// Constructor that only checks the domain, not the orthogonality or mass
    /// conditions. Useful for probing the right-hand sides on arbitrary data.
    pub fn from_raw(
        atil: Field,
        ctil: Field,
        lambda: f64,
        nu: f64,
        s: f64,
        sigma: Sigma,
    ) -> Result<Self, SelfSimError> {
        if !(lambda > 0.0 && nu > 0.0 && lambda.is_finite() && nu.is_finite()) {
            return Err(SelfSimError::Invariant(format!(
                "lambda = {lambda}, nu = {nu} must be positive"
            )));
        }
        let g = *atil.grid();
        let expected = 1.0 / nu;
        if g.lo() != 0.0 || (g.hi() - expected).abs() > 1e-12 * expected || *ctil.grid() != g {
            return Err(SelfSimError::DomainMismatch {
                lo: g.lo(),
                hi: g.hi(),
                expected,
            });
        }
        Ok(Self {
            atil,
            ctil,
            lambda,
            nu,
            s,
            t: 0.0,
            sigma,
        })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn atil(&self) -> &Field {
        &self.atil
    }

    pub fn ctil(&self) -> &Field {
        &self.ctil
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn grid(&self) -> &Grid {
        self.atil.grid()
    }

    /// `φ + ã` on the perturbation grid.
    pub fn total(&self) -> Field {
        let g = *self.grid();
        let mut f = Field::from_fn(g, profile);
        for (v, p) in f.values_mut().iter_mut().zip(self.atil.values()) {
            *v += p;
        }
        f
    }

    /// `(ã(0), ∂_z ã(0))`. The slope is taken on `φ + ã` and corrected by the
    /// exact `φ'(0) = −1`, matching how [`decompose`] fixes `ν`.
    pub fn orthogonality_defect(&self) -> (f64, f64) {
        (self.atil.first(), self.total().slope_at_lo() + 1.0)
    }

    /// `∫₀^{1/ν} (φ + ã) dz`.
    pub fn mass(&self) -> f64 {
        integral(&self.total())
    }

    pub fn check_invariants(&self) -> Result<(), SelfSimError> {
        let (v0, d0) = self.orthogonality_defect();
        if v0.abs() > ORTHO_VALUE_TOL {
            return Err(SelfSimError::Invariant(format!("atil(0) = {v0:e}")));
        }
        if d0.abs() > ORTHO_SLOPE_TOL {
            return Err(SelfSimError::Invariant(format!("d_z atil(0) = {d0:e}")));
        }
        let mass = self.mass();
        if mass.abs() > MASS_TOL {
            return Err(SelfSimError::Invariant(format!(
                "integral of phi + atil = {mass:e}"
            )));
        }
        let scale = self.ctil.max_abs().max(1.0);
        match self.sigma {
            Sigma::NonDiffusive => {
                if self.ctil.first().abs() > TEMP_ORIGIN_TOL * scale {
                    return Err(SelfSimError::Invariant(format!(
                        "ctil(0) = {:e}",
                        self.ctil.first()
                    )));
                }
            }
            Sigma::Diffusive => {
                if self.ctil.first().abs() > TEMP_ORIGIN_TOL * scale
                    || self.ctil.last().abs() > TEMP_ORIGIN_TOL * scale
                {
                    return Err(SelfSimError::Invariant(format!(
                        "ctil Dirichlet values {:e}, {:e}",
                        self.ctil.first(),
                        self.ctil.last()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Logarithmic rates of the modulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationRates {
    /// `λ_s / λ`
    pub dlog_lambda: f64,
    /// `ν_s / ν`, always `−1 − λ_s/λ`.
    pub dlog_nu: f64,
}

/// Splits a physical trace into profile, perturbation and modulation
/// parameters: `λ = 1/a(0)`, `ν = −1/(λ a_Z(0))`.
pub fn decompose(a: &Field, c: &Field, sigma: Sigma, s: f64) -> Result<SelfSimilarState, SelfSimError> {
    let a0 = a.first();
    let slope = a.slope_at_lo();
    if !(a0 > 0.0 && slope < 0.0) {
        return Err(SelfSimError::DegenerateTrace { a0, slope });
    }
    let lambda = 1.0 / a0;
    let nu = -1.0 / (lambda * slope);
    let zg = Grid::new(0.0, 1.0 / nu, a.grid().len())?;
    let atil: Vec<f64> = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| lambda * v - profile(zg.node(i)))
        .collect();
    let scale = lambda.powi(1 + sigma.as_int());
    let ctil: Vec<f64> = c.values().iter().map(|&v| scale * v).collect();
    Ok(SelfSimilarState {
        atil: Field::new(zg, atil)?,
        ctil: Field::new(zg, ctil)?,
        lambda,
        nu,
        s,
        t: 0.0,
        sigma,
    })
}

/// Maps a self-similar state back to `(a, c)` on `Z ∈ [0, 1]`.
pub fn reconstruct(st: &SelfSimilarState) -> (Field, Field) {
    let n = st.grid().len();
    let zg = Grid::new(0.0, 1.0 / st.nu, n).expect("valid self-similar domain");
    let (atil, ctil) = if (st.grid().hi() - zg.hi()).abs() <= 1e-12 * zg.hi() {
        (st.atil.clone(), st.ctil.clone())
    } else {
        (
            grid::resample(&st.atil, zg).field,
            grid::resample(&st.ctil, zg).field,
        )
    };
    let unit = Grid::new(0.0, 1.0, n).expect("unit grid");
    let inv_l = 1.0 / st.lambda;
    let inv_lc = 1.0 / st.lambda.powi(1 + st.sigma.as_int());
    let a: Vec<f64> = atil
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| inv_l * (profile(zg.node(i)) + v))
        .collect();
    let c: Vec<f64> = ctil.values().iter().map(|&v| inv_lc * v).collect();
    (
        Field::new(unit, a).expect("finite"),
        Field::new(unit, c).expect("finite"),
    )
}

/// Weight on the temperature term of the `λ` equation: `λ` for σ = 0, 1 for σ = 1.
fn temperature_coupling(st: &SelfSimilarState) -> f64 {
    match st.sigma {
        Sigma::NonDiffusive => st.lambda,
        Sigma::Diffusive => 1.0,
    }
}

/// `λ_s/λ + 1 = 2ν ∫(φ+ã)² − w ν² ∫ ∂⁻¹c̃` and `ν_s/ν = −1 − λ_s/λ`.
pub fn modulation_rates(st: &SelfSimilarState) -> ModulationRates {
    let total = st.total();
    let sq = total.map(|v| v * v);
    let c_prim = antiderivative(&st.ctil);
    let w = temperature_coupling(st);
    let dlog_lambda =
        -1.0 + 2.0 * st.nu * integral(&sq) - w * st.nu * st.nu * integral(&c_prim);
    ModulationRates {
        dlog_lambda,
        dlog_nu: -1.0 - dlog_lambda,
    }
}

/// `(ã_s, c̃_s)` at fixed `z`, all terms included.
pub fn perturbation_rhs(st: &SelfSimilarState, rates: &ModulationRates) -> (Field, Field) {
    let (da, mut dc) = rhs_terms(st, rates, true);
    if st.sigma == Sigma::Diffusive {
        let czz = derivative(&st.ctil, DerivOrder::Second);
        let d = st.lambda / (st.nu * st.nu);
        for (v, x) in dc.values_mut().iter_mut().zip(czz.values()) {
            *v += d * x;
        }
        let n = dc.values().len();
        dc.values_mut()[0] = 0.0;
        dc.values_mut()[n - 1] = 0.0;
    }
    (da, dc)
}

/// Transport-reaction part of the perturbation equations. With
/// `include_stretch = false` the `(ν_s/ν) z ∂_z` terms are dropped, which is
/// the time derivative at a fixed node index (the grid is tied to `ν`).
fn rhs_terms(st: &SelfSimilarState, rates: &ModulationRates, include_stretch: bool) -> (Field, Field) {
    let g = *st.grid();
    let n = g.len();
    let z = g.nodes();
    let at = st.atil.values();
    let ct = st.ctil.values();
    let a_z = derivative(&st.atil, DerivOrder::First);
    let c_z = derivative(&st.ctil, DerivOrder::First);
    let a_prim = antiderivative(&st.atil);
    let c_prim = antiderivative(&st.ctil);
    let (a_z, c_z) = (a_z.values(), c_z.values());
    let (ap, cp) = (a_prim.values(), c_prim.values());

    let ll = rates.dlog_lambda;
    let nn = rates.dlog_nu;
    let stretch = if include_stretch { nn } else { 0.0 };
    let w = temperature_coupling(st);
    let nu = st.nu;

    let sq = st.total().map(|v| v * v);
    let nonlocal = 2.0 * nu * integral(&sq) - w * nu * nu * integral(&c_prim);
    let c_gain = match st.sigma {
        Sigma::NonDiffusive => ll,
        Sigma::Diffusive => 2.0 * ll,
    };

    let mut da = vec![0.0; n];
    let mut dc = vec![0.0; n];
    for i in 0..n {
        let phi = profile(z[i]);
        let big_phi = profile_primitive(z[i]);
        da[i] = ll * at[i] + stretch * z[i] * a_z[i] + 2.0 * phi * at[i] - big_phi * a_z[i]
            + ap[i] * phi
            + at[i] * at[i]
            - ap[i] * a_z[i]
            + (ll + 1.0) * phi
            - nn * z[i] * phi
            - nonlocal
            - w * nu * cp[i];
        dc[i] = c_gain * ct[i] + stretch * z[i] * c_z[i] + 2.0 * (at[i] + phi) * ct[i]
            - (ap[i] + big_phi) * c_z[i];
    }
    (
        Field::new(g, da).expect("finite rhs"),
        Field::new(g, dc).expect("finite rhs"),
    )
}

/// Default step `0.25 h / max(1, max|∂⁻¹(φ + ã)|)`.
pub fn default_ds(st: &SelfSimilarState) -> f64 {
    let speed = antiderivative(&st.total()).max_abs();
    0.25 * st.grid().spacing() / speed.max(1.0)
}

#[derive(Clone)]
struct Stage {
    atil: Vec<f64>,
    ctil: Vec<f64>,
    log_lambda: f64,
    log_nu: f64,
    t: f64,
}

impl Stage {
    fn of(st: &SelfSimilarState) -> Self {
        Self {
            atil: st.atil.values().to_vec(),
            ctil: st.ctil.values().to_vec(),
            log_lambda: st.lambda.ln(),
            log_nu: st.nu.ln(),
            t: st.t,
        }
    }

    fn state(&self, n: usize, s: f64, sigma: Sigma) -> SelfSimilarState {
        let lambda = self.log_lambda.exp();
        let nu = self.log_nu.exp();
        let g = Grid::new(0.0, 1.0 / nu, n).expect("valid domain");
        SelfSimilarState {
            atil: Field::new(g, self.atil.clone()).expect("finite"),
            ctil: Field::new(g, self.ctil.clone()).expect("finite"),
            lambda,
            nu,
            s,
            t: self.t,
            sigma,
        }
    }

    fn axpy(&self, k: &Stage, w: f64) -> Stage {
        Stage {
            atil: self.atil.iter().zip(&k.atil).map(|(x, d)| x + w * d).collect(),
            ctil: self.ctil.iter().zip(&k.ctil).map(|(x, d)| x + w * d).collect(),
            log_lambda: self.log_lambda + w * k.log_lambda,
            log_nu: self.log_nu + w * k.log_nu,
            t: self.t + w * k.t,
        }
    }
}

fn stage_rhs(st: &SelfSimilarState) -> Stage {
    let rates = modulation_rates(st);
    let (da, dc) = rhs_terms(st, &rates, false);
    Stage {
        atil: da.into_values(),
        ctil: dc.into_values(),
        log_lambda: rates.dlog_lambda,
        log_nu: rates.dlog_nu,
        t: st.lambda,
    }
}

/// Diffusion of `c̃` over `ds`: in node-index coordinates the coefficient
/// `λ/ν²` over spacing `h_z = h_Z/ν` reduces to `λ` over `h_Z`.
fn diffuse(st: &mut SelfSimilarState, ds: f64) {
    let h_unit = 1.0 / (st.grid().len() - 1) as f64;
    crank_nicolson_dirichlet(st.ctil.values_mut(), h_unit, st.lambda, ds);
}

/// RK4 on `(ã, c̃, log λ, log ν, t)`, Strang-split diffusion for σ = 1, then
/// re-orthogonalization by reconstruct-and-decompose.
pub fn step_selfsim(st: &SelfSimilarState, ds: f64) -> Result<SelfSimilarState, SelfSimError> {
    if !(ds >= 0.0 && ds.is_finite()) {
        return Err(SelfSimError::InvalidStep(ds));
    }
    if ds == 0.0 {
        return Ok(st.clone());
    }
    let n = st.grid().len();
    let sigma = st.sigma;
    let mut start = st.clone();
    if sigma == Sigma::Diffusive {
        diffuse(&mut start, 0.5 * ds);
    }
    let y0 = Stage::of(&start);
    let s0 = st.s;
    let k1 = stage_rhs(&start);
    let y1 = y0.axpy(&k1, 0.5 * ds);
    let k2 = stage_rhs(&y1.state(n, s0 + 0.5 * ds, sigma));
    let y2 = y0.axpy(&k2, 0.5 * ds);
    let k3 = stage_rhs(&y2.state(n, s0 + 0.5 * ds, sigma));
    let y3 = y0.axpy(&k3, ds);
    let k4 = stage_rhs(&y3.state(n, s0 + ds, sigma));
    let y = y0
        .axpy(&k1, ds / 6.0)
        .axpy(&k2, ds / 3.0)
        .axpy(&k3, ds / 3.0)
        .axpy(&k4, ds / 6.0);
    let mut next = y.state(n, s0 + ds, sigma);
    if sigma == Sigma::Diffusive {
        diffuse(&mut next, 0.5 * ds);
        let v = next.ctil.values_mut();
        v[0] = 0.0;
        v[n - 1] = 0.0;
    } else {
        next.ctil.values_mut()[0] = 0.0;
    }
    let t = next.t;
    let (a, c) = reconstruct(&next);
    Ok(decompose(&a, &c, sigma, s0 + ds)?.with_time(t))
}
