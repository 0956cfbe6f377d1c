use proptest::prelude::*;

use tracelab::diagnostics::hardy_check;
use tracelab::grid::{antiderivative, derivative, integral, DerivOrder, Field, Grid};
use tracelab::initial::{build_theorem_data, redecompose, InitialDataSpec, PerturbationFamily};
use tracelab::params::{validate_params, FrameworkParams};
use tracelab::selfsim::{decompose, modulation_rates, step_selfsim, ORTHO_SLOPE_TOL, ORTHO_VALUE_TOL};
use tracelab::trace::{step, SolverConfig, StepOutcome, TraceState};
use tracelab::Sigma;

fn unit(n: usize) -> Grid {
    Grid::new(0.0, 1.0, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derivative_undoes_antiderivative(c in prop::collection::vec(-1.0f64..1.0, 4)) {
        let f = Field::from_fn(unit(513), |x| c[0] + c[1] * x + c[2] * (3.0 * x).sin() + c[3] * (-x).exp());
        let back = derivative(&antiderivative(&f), DerivOrder::First);
        for (x, y) in back.values().iter().zip(f.values()) {
            prop_assert!((x - y).abs() <= 1e-4);
        }
    }

    #[test]
    fn antiderivative_ends_at_integral(c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let f = Field::from_fn(unit(257), |x| c[0] + c[1] * x * x + c[2] * (5.0 * x).cos());
        prop_assert!((antiderivative(&f).last() - integral(&f)).abs() <= 1e-12);
    }

    #[test]
    fn hardy_inequality_holds(
        end in 0.5f64..2.0,
        c1 in -0.5f64..0.5,
        c2 in -0.5f64..0.5,
        k in prop::sample::select(vec![0.5, 1.0, 1.5, 3.0]),
    ) {
        let p = if k < 2.0 { 2 } else { 3 };
        let g = Grid::new(0.0, end, 2001).unwrap();
        let f = Field::from_fn(g, |x| x.powi(p) * (end - x) * (1.0 + c1 * x + c2 * x * x));
        let (lhs, rhs) = hardy_check(&f, k).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-6), "{} > {}", lhs, rhs);
    }

    #[test]
    fn redecompose_matches_decompose(
        log_lam in -6.0f64..-2.0,
        nu in 0.05f64..0.3,
        frac in -0.5f64..0.5,
    ) {
        let lam = 10f64.powf(log_lam);
        let b = frac / lam;
        let a = Field::from_fn(unit(2049), |z| (-z / nu).exp() / lam + b * (std::f64::consts::PI * z).cos());
        let st = decompose(&a, &Field::zeros(unit(2049)), Sigma::NonDiffusive, 0.0).unwrap();
        let (lb, nb) = redecompose(lam, nu, b).unwrap();
        prop_assert!((st.lambda() - lb).abs() <= 1e-8 * lb);
        prop_assert!((st.nu() - nb).abs() <= 1e-8 * nb);
    }

    #[test]
    fn width_rate_mirrors_amplitude_rate(kappa in 0.0f64..0.05, seed in 0u64..1000, diffusive in any::<bool>()) {
        let sigma = if diffusive { Sigma::Diffusive } else { Sigma::NonDiffusive };
        let mut spec = InitialDataSpec::canonical(1e-3, sigma);
        spec.kappa = kappa;
        spec.seed = seed;
        spec.family = PerturbationFamily::PolynomialBump;
        spec.c_kappa = 1e-3;
        let st = build_theorem_data(&spec, 513).unwrap();
        let ss = decompose(st.a(), st.c(), sigma, 9.0).unwrap();
        let r = modulation_rates(&ss);
        prop_assert_eq!(r.dlog_nu, -1.0 - r.dlog_lambda);
    }

    #[test]
    fn self_similar_step_preserves_orthogonality(kappa in 0.0f64..0.05, seed in 0u64..1000) {
        let mut spec = InitialDataSpec::canonical(1e-3, Sigma::NonDiffusive);
        spec.kappa = kappa;
        spec.seed = seed;
        spec.family = PerturbationFamily::TailBalance;
        let st = build_theorem_data(&spec, 513).unwrap();
        let ss = decompose(st.a(), st.c(), Sigma::NonDiffusive, 9.0).unwrap();
        let next = step_selfsim(&ss, 1e-2).unwrap();
        let (value, slope) = next.orthogonality_defect();
        prop_assert!(value.abs() <= ORTHO_VALUE_TOL && slope.abs() <= ORTHO_SLOPE_TOL);
    }

    #[test]
    fn physical_step_conserves_mean(c in prop::collection::vec(-1.0f64..1.0, 3)) {
        // cosine modes have zero mean on [0, 1]
        let g = unit(257);
        let a = Field::from_fn(g, |z| {
            (1..=3).map(|m| c[m - 1] * (m as f64 * std::f64::consts::PI * z).cos()).sum()
        });
        let st = TraceState::new(a, Field::zeros(g), Sigma::NonDiffusive, 0.0).unwrap();
        let cfg = SolverConfig::for_state(&st);
        match step(&st, &cfg).unwrap() {
            StepOutcome::Advanced { state, mean_before_projection, .. } => {
                prop_assert!(mean_before_projection.abs() <= 1e-14);
                prop_assert!(integral(state.a()).abs() <= 1e-14);
            }
            StepOutcome::BlowupDetected => prop_assert!(false),
        }
    }

    #[test]
    fn one_entry_out_of_range_fails_validation(h_a in prop_oneof![0.0f64..1.0, 2.0f64..3.0]) {
        let mut p = FrameworkParams::reference_nondiffusive();
        p.h_a = h_a;
        let v = validate_params(&p);
        let failures: Vec<&str> = v.failures().iter().map(|c| c.condition.as_str()).collect();
        prop_assert_eq!(failures.len(), 1);
        prop_assert!(failures[0].starts_with("h_a"));
    }
}
