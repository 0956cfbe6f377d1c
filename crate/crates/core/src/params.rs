//! Bootstrap framework parameters: the α₀ threshold and feasibility checks
//! for the transported (σ=0) and diffusive (σ=1) regimes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::{Relation, Verdict};
use crate::Sigma;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("alpha = {alpha} outside ({lo}, {hi})")]
    OutOfRange { alpha: f64, lo: f64, hi: f64 },
}

/// Regime-specific part of the parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// σ = 0: weight `z^{-γ}` on `c̃_z`, decay rate `h_c`.
    NonDiffusive { gamma: f64, h_c: f64 },
    /// σ = 1: weighted `L^{2η₀}` norm with weight `z^{-kη₀}`, decay rate `l`.
    ///
    /// `eta0` is kept real so that a non-integer value can be reported by
    /// [`validate_params`] instead of being unrepresentable.
    Diffusive { k: f64, eta0: f64, l: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameworkParams {
    pub alpha: f64,
    pub h_a: f64,
    pub eps_a: f64,
    pub eps_c: f64,
    pub regime: Regime,
    /// Bound on `λ / (s e^{-s})` while trapped.
    pub m: f64,
    /// Bound on `ν s` while trapped.
    pub n: f64,
    /// Bound on `ν₀ s₀` initially.
    pub n0: f64,
    pub z_star: f64,
    pub delta: f64,
}

pub const DEFAULT_M: f64 = 2.0;
pub const DEFAULT_N: f64 = 4.0;
pub const DEFAULT_N0: f64 = 3.0;
pub const DEFAULT_Z_STAR: f64 = 4.0;
pub const DEFAULT_DELTA: f64 = 0.1;

impl FrameworkParams {
    /// `(α, γ, h_a, h_c, ε_a, ε_c) = (2, 2, 4/3, 1/2, 3/5, 3/4)`.
    pub fn reference_nondiffusive() -> Self {
        Self::with_defaults(
            2.0,
            4.0 / 3.0,
            0.6,
            0.75,
            Regime::NonDiffusive { gamma: 2.0, h_c: 0.5 },
        )
    }

    /// `(α, η₀, k, h_a, l, ε_a, ε_c) = (2, 4, 3/2, 4/3, 1, 3/4, 9/10)`.
    pub fn reference_diffusive() -> Self {
        Self::with_defaults(
            2.0,
            4.0 / 3.0,
            0.75,
            0.9,
            Regime::Diffusive { k: 1.5, eta0: 4.0, l: 1.0 },
        )
    }

    pub fn with_defaults(alpha: f64, h_a: f64, eps_a: f64, eps_c: f64, regime: Regime) -> Self {
        Self {
            alpha,
            h_a,
            eps_a,
            eps_c,
            regime,
            m: DEFAULT_M,
            n: DEFAULT_N,
            n0: DEFAULT_N0,
            z_star: DEFAULT_Z_STAR,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn sigma(&self) -> Sigma {
        match self.regime {
            Regime::NonDiffusive { .. } => Sigma::NonDiffusive,
            Regime::Diffusive { .. } => Sigma::Diffusive,
        }
    }
}

/// Left-hand side whose unique positive root is α₀.
pub fn alpha0_residual(alpha: f64) -> f64 {
    -alpha + 1.0
        + 1.0 / (alpha + 1.0).sqrt()
        + 4.0 / (alpha + 3.0) * (3.0 / (8.0 * (alpha + 1.0))).sqrt()
}

/// Lower end of the admissible α range (≈ 1.88415), by bisection on [1, 3].
pub fn alpha0() -> f64 {
    let (mut lo, mut hi) = (1.0_f64, 3.0_f64);
    let mut f_lo = alpha0_residual(lo);
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        let f_mid = alpha0_residual(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Evaluates every inequality of the parameter regime, keeping strict and
/// non-strict comparisons distinct.
pub fn validate_params(p: &FrameworkParams) -> Verdict {
    use Relation::*;
    let a0 = alpha0();
    let mut v = Verdict::default();
    match p.regime {
        Regime::NonDiffusive { gamma, h_c } => {
            v.check("alpha > alpha0", p.alpha, Greater, a0);
            v.check("alpha < 3", p.alpha, Less, 3.0);
            v.check("gamma > 1", gamma, Greater, 1.0);
            v.check("gamma < 3", gamma, Less, 3.0);
            v.check("h_a > 1", p.h_a, Greater, 1.0);
            v.check("h_a < 2", p.h_a, Less, 2.0);
            v.check("h_c > 0", h_c, Greater, 0.0);
            v.check("h_c < gamma - 1", h_c, Less, gamma - 1.0);
            v.check("eps_a > (alpha - 1)/2", p.eps_a, Greater, (p.alpha - 1.0) / 2.0);
            v.check("eps_a <= eps_c", p.eps_a, LessEq, p.eps_c);
            v.check("eps_c > (gamma - 1)/2", p.eps_c, Greater, (gamma - 1.0) / 2.0);
            v.check("eps_c < 1", p.eps_c, Less, 1.0);
        }
        Regime::Diffusive { k, eta0, l } => {
            v.check("alpha > alpha0", p.alpha, Greater, a0);
            v.check("alpha < 3 - 2/eta0", p.alpha, Less, 3.0 - 2.0 / eta0);
            v.check("eta0 >= 2", eta0, GreaterEq, 2.0);
            v.check("eta0 integer", eta0.fract().abs(), LessEq, 0.0);
            v.check("k > alpha - 1 + 1/eta0", k, Greater, p.alpha - 1.0 + 1.0 / eta0);
            v.check("k < 2 - 1/eta0", k, Less, 2.0 - 1.0 / eta0);
            v.check("h_a > 1", p.h_a, Greater, 1.0);
            v.check("h_a < 2", p.h_a, Less, 2.0);
            v.check("l > 0", l, Greater, 0.0);
            v.check("l < k - 1/eta0", l, Less, k - 1.0 / eta0);
            v.check("eps_a > (alpha - 1)/2", p.eps_a, Greater, (p.alpha - 1.0) / 2.0);
            v.check("eps_a <= eps_c", p.eps_a, LessEq, p.eps_c);
            v.check(
                "eps_c > k/2 + 1/(2 eta0)",
                p.eps_c,
                Greater,
                k / 2.0 + 1.0 / (2.0 * eta0),
            );
            v.check("eps_c < 1", p.eps_c, Less, 1.0);
        }
    }
    v
}

/// The one-parameter diffusive family
/// `(η₀, k, h_a, l, ε_a, ε_c) = (4, (α+1)/2, 3/2, (2α+1)/8, (10α+3)/32, (2α+11)/16)`
/// for `α₀ < α < 5/2`.
pub fn fixed_diffusive_choice(alpha: f64) -> Result<FrameworkParams, ParamsError> {
    let lo = alpha0();
    if !(alpha > lo && alpha < 2.5) {
        return Err(ParamsError::OutOfRange { alpha, lo, hi: 2.5 });
    }
    Ok(FrameworkParams::with_defaults(
        alpha,
        1.5,
        (10.0 * alpha + 3.0) / 32.0,
        (2.0 * alpha + 11.0) / 16.0,
        Regime::Diffusive {
            k: (alpha + 1.0) / 2.0,
            eta0: 4.0,
            l: (2.0 * alpha + 1.0) / 8.0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha0_matches_reported_value() {
        let a = alpha0();
        assert!((a - 1.88415).abs() < 5e-5, "alpha0 = {a}");
        assert!(alpha0_residual(a).abs() <= 1e-10);
    }

    #[test]
    fn residual_sign_at_bracket_ends() {
        // −2 + 1/2 + (2/3)·sqrt(3/32)
        let f3 = -1.5 + (2.0 / 3.0) * (3.0_f64 / 32.0).sqrt();
        assert!((alpha0_residual(3.0) - f3).abs() < 1e-15);
        assert!(alpha0_residual(3.0) < 0.0);
        assert!(alpha0_residual(1.0) > 0.0);
    }

    #[test]
    fn single_sign_change_on_bracket() {
        let changes = (0..2000)
            .map(|i| 1.0 + i as f64 * 1e-3)
            .collect::<Vec<_>>()
            .windows(2)
            .filter(|w| alpha0_residual(w[0]).signum() != alpha0_residual(w[1]).signum())
            .count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn reference_tuples_validate() {
        assert!(validate_params(&FrameworkParams::reference_nondiffusive()).passed());
        assert!(validate_params(&FrameworkParams::reference_diffusive()).passed());
    }

    #[test]
    fn low_alpha_fails_one_line() {
        let mut p = FrameworkParams::reference_nondiffusive();
        p.alpha = 1.5;
        let v = validate_params(&p);
        let fails = v.failures();
        assert_eq!(fails.len(), 1);
        assert_eq!(fails[0].condition, "alpha > alpha0");
    }

    #[test]
    fn boundary_value_is_tagged_non_strict() {
        let mut p = FrameworkParams::reference_nondiffusive();
        p.h_a = 2.0;
        let v = validate_params(&p);
        let f = v.get("h_a < 2").unwrap();
        assert!(!f.pass);
        assert_eq!(f.tag.as_deref(), Some("non-strict violation"));
    }

    #[test]
    fn fixed_choice_at_two() {
        let p = fixed_diffusive_choice(2.0).unwrap();
        assert_eq!(p.h_a, 1.5);
        assert_eq!(p.eps_a, 23.0 / 32.0);
        assert_eq!(p.eps_c, 15.0 / 16.0);
        assert_eq!(p.regime, Regime::Diffusive { k: 1.5, eta0: 4.0, l: 5.0 / 8.0 });
        assert!(validate_params(&p).passed());
    }

    #[test]
    fn fixed_choice_range() {
        assert!(matches!(
            fixed_diffusive_choice(2.6),
            Err(ParamsError::OutOfRange { .. })
        ));
        assert!(fixed_diffusive_choice(1.5).is_err());
        let lo = alpha0() + 0.01;
        for i in 0..50 {
            let a = lo + (2.49 - lo) * i as f64 / 49.0;
            let p = fixed_diffusive_choice(a).unwrap();
            assert!(validate_params(&p).passed(), "alpha = {a}");
        }
    }
}
