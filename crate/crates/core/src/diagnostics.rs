//! Weighted energies of the perturbation, the closeness and trapping
//! verdicts, the Hardy inequality and vanishing-speed exponents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{derivative, DerivOrder, Field};
use crate::params::{FrameworkParams, Regime};
use crate::selfsim::{SelfSimilarState, MASS_TOL, ORTHO_SLOPE_TOL, ORTHO_VALUE_TOL};
use crate::verdict::{Relation, Verdict};

/// Ratio of first-cell to second-cell integrand above which a weighted
/// integral is declared singular.
pub const SINGULAR_RATIO: f64 = 10.0;
/// Magnitudes below this are ignored by [`vanishing_exponent`].
pub const EXPONENT_FLOOR: f64 = 1e-14;
pub const MIN_FIT_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("{quantity}: integrand {first:e} at the first node exceeds {SINGULAR_RATIO} x {second:e}")]
    SingularWeight {
        quantity: &'static str,
        first: f64,
        second: f64,
    },
    #[error("only {usable} usable nodes in the fitting window")]
    InsufficientData { usable: usize },
    #[error("parameters are for sigma = {params}, state has sigma = {state}")]
    SigmaMismatch { params: i32, state: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "I_a2")]
    pub ia2: f64,
    #[serde(rename = "E_a2")]
    pub ea2: f64,
    #[serde(rename = "I_c2", skip_serializing_if = "Option::is_none")]
    pub ic2: Option<f64>,
    #[serde(rename = "E_c2", skip_serializing_if = "Option::is_none")]
    pub ec2: Option<f64>,
    #[serde(rename = "T_k_eta", skip_serializing_if = "Option::is_none")]
    pub t_k_eta: Option<f64>,
    pub s: f64,
}

impl EnergyReport {
    /// `I_c²` for σ = 0, `T^{2η₀}` for σ = 1.
    pub fn temperature_energy(&self, p: &FrameworkParams) -> f64 {
        match p.regime {
            Regime::NonDiffusive { .. } => self.ic2.unwrap_or(0.0),
            Regime::Diffusive { eta0, .. } => self.t_k_eta.unwrap_or(0.0).powf(2.0 * eta0),
        }
    }
}

/// `∫₀^{upper} g` by the trapezoid rule on the nodes of `f`'s grid, with the
/// value at `z = 0` replaced by 0. `g(i, z)` is evaluated for `i ≥ 1` only.
fn weighted_integral(
    f: &Field,
    upper: f64,
    quantity: &'static str,
    g: impl Fn(usize, f64) -> f64,
) -> Result<f64, DiagError> {
    let grid = f.grid();
    let n = grid.len();
    let h = grid.spacing();
    let upper = upper.min(grid.hi());
    if upper <= 0.0 {
        return Ok(0.0);
    }
    let g1 = g(1, grid.node(1));
    if n > 2 {
        let g2 = g(2, grid.node(2));
        if g1 > SINGULAR_RATIO * g2 && g1 > 0.0 {
            return Err(DiagError::SingularWeight {
                quantity,
                first: g1,
                second: g2,
            });
        }
    }
    let mut sum = 0.0;
    let mut prev = 0.0;
    let mut z_prev = 0.0;
    for i in 1..n {
        let z = grid.node(i);
        let gi = if i == 1 { g1 } else { g(i, z) };
        if z <= upper {
            sum += 0.5 * (z - z_prev) * (prev + gi);
            prev = gi;
            z_prev = z;
            if z == upper {
                break;
            }
        } else {
            let w = (upper - z_prev) / h;
            let g_up = prev + w * (gi - prev);
            sum += 0.5 * (upper - z_prev) * (prev + g_up);
            break;
        }
    }
    Ok(sum)
}

fn sup_square_beyond(f: &Field, lo: f64) -> f64 {
    let g = f.grid();
    f.values()
        .iter()
        .enumerate()
        .filter(|(i, _)| g.node(*i) >= lo)
        .map(|(_, v)| v * v)
        .fold(0.0, f64::max)
}

/// `∫₀^{z*} z^{-w} f_z² dz`.
pub fn weighted_gradient_energy(
    f: &Field,
    weight: f64,
    z_star: f64,
    quantity: &'static str,
) -> Result<f64, DiagError> {
    let fz = derivative(f, DerivOrder::First);
    let d = fz.values();
    weighted_integral(f, z_star, quantity, |i, z| z.powf(-weight) * d[i] * d[i])
}

fn check_sigma(st: &SelfSimilarState, p: &FrameworkParams) -> Result<(), DiagError> {
    if st.sigma() != p.sigma() {
        return Err(DiagError::SigmaMismatch {
            params: p.sigma().as_int(),
            state: st.sigma().as_int(),
        });
    }
    Ok(())
}

pub fn energy_report(st: &SelfSimilarState, p: &FrameworkParams) -> Result<EnergyReport, DiagError> {
    check_sigma(st, p)?;
    let ia2 = weighted_gradient_energy(st.atil(), p.alpha, p.z_star, "I_a2")?;
    let ea2 = sup_square_beyond(st.atil(), p.z_star);
    let mut rep = EnergyReport {
        ia2,
        ea2,
        ic2: None,
        ec2: None,
        t_k_eta: None,
        s: st.s(),
    };
    match p.regime {
        Regime::NonDiffusive { gamma, .. } => {
            rep.ic2 = Some(weighted_gradient_energy(st.ctil(), gamma, p.z_star, "I_c2")?);
            rep.ec2 = Some(sup_square_beyond(st.ctil(), p.z_star));
        }
        Regime::Diffusive { k, eta0, .. } => {
            let c = st.ctil().values();
            let power = 2.0 * eta0;
            let integral = weighted_integral(st.ctil(), f64::INFINITY, "T_k_eta", |i, z| {
                z.powf(-k * eta0) * c[i].abs().powf(power)
            })?;
            rep.t_k_eta = Some(integral.powf(1.0 / power));
        }
    }
    Ok(rep)
}

/// A Holder-type norm of the initial data, reported next to its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaNorm {
    pub name: String,
    pub value: f64,
    pub bound: f64,
}

/// Evaluates every line of the initial-closeness definition at `s = st.s()`.
pub fn check_initial_closeness(
    st: &SelfSimilarState,
    p: &FrameworkParams,
    kappa_norms: &[KappaNorm],
) -> Result<Verdict, DiagError> {
    use Relation::*;
    let rep = energy_report(st, p)?;
    let s0 = st.s();
    let lam = st.lambda();
    let nu = st.nu();
    let mut v = Verdict::default();
    let target = s0 * (-s0).exp();
    v.check("lambda0 = s0 exp(-s0)", ((lam - target) / target).abs(), LessEq, 1e-12);
    v.check("nu0 >= 1/(N0 s0)", nu, GreaterEq, 1.0 / (p.n0 * s0));
    v.check("nu0 <= N0/s0", nu, LessEq, p.n0 / s0);
    let (a0, da0) = st.orthogonality_defect();
    v.check("atil(0) = 0", a0.abs(), LessEq, ORTHO_VALUE_TOL);
    v.check("d_z atil(0) = 0", da0.abs(), LessEq, ORTHO_SLOPE_TOL);
    v.check("integral condition", st.mass().abs(), LessEq, MASS_TOL);
    let decay_a = s0.powf(-p.h_a);
    v.check("I_a^2 < delta^2 s0^-h_a", rep.ia2, Less, p.delta * p.delta * decay_a);
    v.check("E_a^2 < s0^-h_a/16", rep.ea2, Less, decay_a / 16.0);
    match p.regime {
        Regime::NonDiffusive { h_c, .. } => {
            let decay_c = (-h_c * s0).exp();
            v.check(
                "I_c^2 < delta^2 exp(-h_c s0)",
                rep.ic2.unwrap_or(0.0),
                Less,
                p.delta * p.delta * decay_c,
            );
            v.check("E_c^2 < exp(-h_c s0)/16", rep.ec2.unwrap_or(0.0), Less, decay_c / 16.0);
        }
        Regime::Diffusive { eta0, l, .. } => {
            v.check(
                "T^(2 eta0) < exp(-eta0 l s0)/4",
                rep.temperature_energy(p),
                Less,
                0.25 * (-eta0 * l * s0).exp(),
            );
        }
    }
    for k in kappa_norms {
        v.check(format!("{} <= kappa", k.name), k.value, LessEq, k.bound);
    }
    Ok(v)
}

/// The trapping inequalities at `rep.s`; margins are [`crate::verdict::Check::ratio`].
pub fn check_trapped(rep: &EnergyReport, p: &FrameworkParams, lam: f64, nu: f64) -> Verdict {
    use Relation::*;
    let s = rep.s;
    let se = s * (-s).exp();
    let mut v = Verdict::default();
    v.check("lambda > s exp(-s)/M", lam, Greater, se / p.m);
    v.check("lambda < M s exp(-s)", lam, Less, p.m * se);
    v.check("nu > 1/(N s)", nu, Greater, 1.0 / (p.n * s));
    v.check("nu < N/s", nu, Less, p.n / s);
    let decay_a = s.powf(-p.h_a);
    v.check("I_a^2 < s^-h_a", rep.ia2, Less, decay_a);
    v.check("E_a^2 < s^-h_a", rep.ea2, Less, decay_a);
    match p.regime {
        Regime::NonDiffusive { h_c, .. } => {
            let decay_c = (-h_c * s).exp();
            v.check("I_c^2 < exp(-h_c s)", rep.ic2.unwrap_or(0.0), Less, decay_c);
            v.check("E_c^2 < exp(-h_c s)", rep.ec2.unwrap_or(0.0), Less, decay_c);
        }
        Regime::Diffusive { eta0, l, .. } => {
            v.check(
                "T^(2 eta0) < exp(-eta0 l s)",
                rep.temperature_energy(p),
                Less,
                (-eta0 * l * s).exp(),
            );
        }
    }
    v
}

/// Both sides of `∫₀^a f² x^{-k-2} ≤ (2/(1+k))² ∫₀^a f'² x^{-k}`.
pub fn hardy_check(f: &Field, k: f64) -> Result<(f64, f64), DiagError> {
    let v = f.values();
    let fx = derivative(f, DerivOrder::First);
    let d = fx.values();
    let lo = f.grid().lo();
    let lhs = weighted_integral(f, f64::INFINITY, "hardy lhs", |i, x| {
        v[i] * v[i] * (x - lo).powf(-k - 2.0)
    })?;
    let grad = weighted_integral(f, f64::INFINITY, "hardy rhs", |i, x| {
        d[i] * d[i] * (x - lo).powf(-k)
    })?;
    let c = 2.0 / (1.0 + k);
    Ok((lhs, c * c * grad))
}

/// Least-squares slope of `log|f|` against `log z` on `[z_fit/10, z_fit]`.
pub fn vanishing_exponent(f: &Field, z_fit: f64) -> Result<f64, DiagError> {
    let g = f.grid();
    let (xs, ys): (Vec<f64>, Vec<f64>) = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (g.node(i), v))
        .filter(|&(z, v)| z > 0.0 && z >= z_fit / 10.0 && z <= z_fit && v.abs() >= EXPONENT_FLOOR)
        .map(|(z, v)| (z.ln(), v.abs().ln()))
        .unzip();
    if xs.len() < MIN_FIT_NODES {
        return Err(DiagError::InsufficientData { usable: xs.len() });
    }
    Ok(crate::fit::linear_fit(&xs, &ys).slope)
}

/// Default exponent window `z*/4`.
pub fn default_z_fit(p: &FrameworkParams) -> f64 {
    p.z_star / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::selfsim::decompose;
    use crate::Sigma;

    fn zero_state(nu: f64, n: usize, sigma: Sigma, s: f64) -> SelfSimilarState {
        let g = Grid::new(0.0, 1.0 / nu, n).unwrap();
        SelfSimilarState::from_raw(Field::zeros(g), Field::zeros(g), s * (-s).exp(), nu, s, sigma)
            .unwrap()
    }

    #[test]
    fn zero_perturbation_has_zero_energies() {
        let st = zero_state(0.05, 513, Sigma::NonDiffusive, 20.0);
        let rep = energy_report(&st, &FrameworkParams::reference_nondiffusive()).unwrap();
        assert_eq!((rep.ia2, rep.ea2, rep.ic2, rep.ec2), (0.0, 0.0, Some(0.0), Some(0.0)));
        let st = zero_state(0.05, 513, Sigma::Diffusive, 20.0);
        let rep = energy_report(&st, &FrameworkParams::reference_diffusive()).unwrap();
        assert_eq!(rep.t_k_eta, Some(0.0));
    }

    #[test]
    fn ia2_closed_form() {
        // ã = z³/3 so ã_z = z², ∫₀^{z*} z^{-2} z⁴ = z*³/3
        let nu = 0.05;
        let g = Grid::new(0.0, 1.0 / nu, 4001).unwrap();
        let st = SelfSimilarState::from_raw(
            Field::from_fn(g, |z| z.powi(3) / 3.0),
            Field::zeros(g),
            1e-3,
            nu,
            0.0,
            Sigma::NonDiffusive,
        )
        .unwrap();
        let rep = energy_report(&st, &FrameworkParams::reference_nondiffusive()).unwrap();
        assert!((rep.ia2 - 64.0 / 3.0).abs() < 1e-3 * 64.0 / 3.0, "{}", rep.ia2);
    }

    #[test]
    fn t_norm_closed_form() {
        // c̃ = z, weight z^{-6}, power 8: ∫₀^{1/ν} z² = ν^{-3}/3
        let nu = 0.25;
        let g = Grid::new(0.0, 1.0 / nu, 4001).unwrap();
        let st = SelfSimilarState::from_raw(
            Field::zeros(g),
            Field::from_fn(g, |z| z),
            1e-3,
            nu,
            0.0,
            Sigma::Diffusive,
        )
        .unwrap();
        let rep = energy_report(&st, &FrameworkParams::reference_diffusive()).unwrap();
        let t8 = rep.t_k_eta.unwrap().powi(8);
        let expect = nu.powi(-3) / 3.0;
        assert!((t8 - expect).abs() < 1e-5 * expect, "{t8} vs {expect}");
    }

    #[test]
    fn singular_integrand_is_flagged() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let f = Field::from_fn(g, |x| x);
        // f² x^{-5} ~ x^{-4}: first cell 16x the second
        let f = f.map(|x| x.sqrt());
        assert!(matches!(
            hardy_check(&f, 3.0),
            Err(DiagError::SingularWeight { .. })
        ));
    }

    #[test]
    fn hardy_zero_and_cubic() {
        let g = Grid::new(0.0, 1.0, 2001).unwrap();
        assert_eq!(hardy_check(&Field::zeros(g), 1.0).unwrap(), (0.0, 0.0));
        let f = Field::from_fn(g, |x| x * x * (1.0 - x));
        let (lhs, rhs) = hardy_check(&f, 1.0).unwrap();
        // lhs = ∫ x(1-x)² = 1/12, rhs = ∫ (2x - 3x²)²/x = 4/2 - 12/3 + 9/4 = 1/4
        assert!((lhs - 1.0 / 12.0).abs() < 1e-5);
        assert!((rhs - 0.25).abs() < 1e-4);
        assert!(lhs < rhs);
    }

    #[test]
    fn exponent_examples() {
        let g = Grid::new(0.0, 4.0, 2001).unwrap();
        let e2 = vanishing_exponent(&Field::from_fn(g, |z| z * z), 1.0).unwrap();
        assert!((e2 - 2.0).abs() < 0.02);
        let e15 = vanishing_exponent(&Field::from_fn(g, |z| z.powf(1.5)), 1.0).unwrap();
        assert!((e15 - 1.5).abs() < 0.05);
        assert_eq!(
            vanishing_exponent(&Field::zeros(g), 1.0),
            Err(DiagError::InsufficientData { usable: 0 })
        );
    }

    #[test]
    fn closeness_lines_for_bare_profile() {
        let s0 = 30.0;
        let p = FrameworkParams::reference_nondiffusive();
        let v = check_initial_closeness(&zero_state(1.0 / s0, 1025, Sigma::NonDiffusive, s0), &p, &[])
            .unwrap();
        let names: Vec<_> = v.failures().iter().map(|c| c.condition.as_str()).collect();
        assert_eq!(names, ["integral condition"]);
        let v = check_initial_closeness(
            &zero_state(2.0 * p.n0 / s0, 1025, Sigma::NonDiffusive, s0),
            &p,
            &[],
        )
        .unwrap();
        let names: Vec<_> = v.failures().iter().map(|c| c.condition.as_str()).collect();
        assert_eq!(names, ["nu0 <= N0/s0", "integral condition"]);
    }

    #[test]
    fn trapped_examples() {
        let p = FrameworkParams::reference_nondiffusive();
        let s = 12.0;
        let rep = EnergyReport {
            ia2: 0.0,
            ea2: 0.0,
            ic2: Some(0.0),
            ec2: Some(0.0),
            t_k_eta: None,
            s,
        };
        let se = s * (-s).exp();
        let v = check_trapped(&rep, &p, se, 1.0 / s);
        assert!(v.passed());
        assert_eq!(v.get("I_a^2 < s^-h_a").unwrap().ratio(), 0.0);
        let v = check_trapped(&rep, &p, 3.0 * se, 1.0 / s);
        let names: Vec<_> = v.failures().iter().map(|c| c.condition.as_str()).collect();
        assert_eq!(names, ["lambda < M s exp(-s)"]);
    }

    #[test]
    fn sigma_mismatch() {
        let st = zero_state(0.05, 65, Sigma::Diffusive, 10.0);
        assert!(matches!(
            energy_report(&st, &FrameworkParams::reference_nondiffusive()),
            Err(DiagError::SigmaMismatch { .. })
        ));
    }

    #[test]
    fn decomposed_profile_is_orthogonal() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let a = Field::from_fn(g, |z| 1e3 * (-z / 0.07).exp());
        let st = decompose(&a, &Field::zeros(g), Sigma::NonDiffusive, 0.0).unwrap();
        let (v, d) = st.orthogonality_defect();
        assert!(v.abs() < 1e-12 && d.abs() < 1e-12);
    }
}
