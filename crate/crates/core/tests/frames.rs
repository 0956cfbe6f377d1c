use tracelab::diagnostics::{check_initial_closeness, energy_report, vanishing_exponent};
use tracelab::grid::{Field, Grid};
use tracelab::initial::{build_theorem_data, build_theorem_data_detailed, InitialDataSpec, PerturbationFamily};
use tracelab::monitor::{run_selfsim, SelfSimConfig};
use tracelab::params::FrameworkParams;
use tracelab::selfsim::{
    decompose, modulation_rates, perturbation_rhs, reconstruct, step_selfsim, SelfSimilarState,
};
use tracelab::Sigma;

fn bare(lambda: f64, nu: f64, n: usize, sigma: Sigma) -> SelfSimilarState {
    let g = Grid::new(0.0, 1.0 / nu, n).unwrap();
    SelfSimilarState::from_raw(Field::zeros(g), Field::zeros(g), lambda, nu, 10.0, sigma).unwrap()
}

#[test]
fn bare_profile_rates_match_closed_form() {
    // λ_s/λ = −1 + 2ν ∫₀^{1/ν} e^{-2z} dz
    for nu in [0.05, 0.1, 0.3] {
        let r = modulation_rates(&bare(1e-3, nu, 4097, Sigma::NonDiffusive));
        let exact = -1.0 + nu * (1.0 - (-2.0 / nu).exp());
        assert!((r.dlog_lambda - exact).abs() <= 1e-9, "{nu}: {} vs {exact}", r.dlog_lambda);
        assert_eq!(r.dlog_nu, -1.0 - r.dlog_lambda);
    }
}

#[test]
fn reconstruct_inverts_decompose() {
    let mut spec = InitialDataSpec::canonical(1e-3, Sigma::Diffusive);
    spec.c_kappa = 1e-2;
    spec.kappa = 1e-2;
    spec.family = PerturbationFamily::PolynomialBump;
    let st = build_theorem_data(&spec, 1025).unwrap();
    let ss = decompose(st.a(), st.c(), Sigma::Diffusive, 9.0).unwrap();
    let (a, c) = reconstruct(&ss);
    for (x, y) in a.values().iter().zip(st.a().values()) {
        assert!((x - y).abs() <= 1e-12 * st.a().max_abs());
    }
    for (x, y) in c.values().iter().zip(st.c().values()) {
        assert!((x - y).abs() <= 1e-12 * st.c().max_abs());
    }
}

#[test]
fn rhs_of_bare_profile_is_explicit() {
    // With ã = 0 the perturbation equation reduces to A((1+z)e^{-z} − 1) with
    // A = λ_s/λ + 1 once the stretching of the profile is included.
    let st = bare(1e-3, 0.1, 2049, Sigma::NonDiffusive);
    let rates = modulation_rates(&st);
    let (da, _) = perturbation_rhs(&st, &rates);
    let big = rates.dlog_lambda + 1.0;
    let g = st.grid();
    for i in 1..g.len() - 1 {
        let z = g.node(i);
        let exact = big * ((1.0 + z) * (-z).exp() - 1.0);
        assert!((da.values()[i] - exact).abs() <= 1e-5 * big.abs().max(1.0), "z={z}");
    }
}

#[test]
fn small_step_from_theorem_data_keeps_invariants() {
    let spec = InitialDataSpec::canonical(1e-3, Sigma::Diffusive);
    let st = build_theorem_data(&spec, 1025).unwrap();
    let ss = decompose(st.a(), st.c(), Sigma::Diffusive, 9.0).unwrap();
    ss.check_invariants().unwrap();
    let next = step_selfsim(&ss, 1e-3).unwrap();
    next.check_invariants().unwrap();
    assert!(next.s() > ss.s() && next.t() > ss.t());
    let change = next
        .atil()
        .values()
        .iter()
        .zip(ss.atil().values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(change < 1e-2, "{change}");
}

#[test]
fn energies_are_quadratic_in_the_perturbation() {
    let p = FrameworkParams::reference_nondiffusive();
    let nu = 0.1;
    let g = Grid::new(0.0, 1.0 / nu, 2049).unwrap();
    let shape = |amp: f64| Field::from_fn(g, move |z| amp * z * z * z * (-z).exp());
    let one = SelfSimilarState::from_raw(shape(1e-3), shape(1e-4), 1e-3, nu, 9.0, Sigma::NonDiffusive).unwrap();
    let two = SelfSimilarState::from_raw(shape(2e-3), shape(2e-4), 1e-3, nu, 9.0, Sigma::NonDiffusive).unwrap();
    let (e1, e2) = (energy_report(&one, &p).unwrap(), energy_report(&two, &p).unwrap());
    assert!((e2.ia2 / e1.ia2 - 4.0).abs() <= 1e-12);
    assert!((e2.ic2.unwrap() / e1.ic2.unwrap() - 4.0).abs() <= 1e-12);
}

#[test]
fn theorem_data_perturbation_vanishes_quadratically() {
    let spec = InitialDataSpec::canonical(1e-3, Sigma::NonDiffusive);
    let d = build_theorem_data_detailed(&spec, 8193).unwrap();
    let p = FrameworkParams::reference_nondiffusive();
    let e = vanishing_exponent(&d.atil0, 0.1).unwrap();
    assert!((e - 2.0).abs() <= 0.05, "{e}");
    assert!(e >= p.eps_a + 1.0);
}

fn close_state(s0: f64) -> SelfSimilarState {
    let mut spec = InitialDataSpec::canonical(s0 * (-s0).exp(), Sigma::NonDiffusive);
    spec.c_kappa = 1e-2 * (-0.25 * s0).exp();
    let st = build_theorem_data(&spec, 4097).unwrap();
    decompose(st.a(), st.c(), Sigma::NonDiffusive, s0).unwrap()
}

#[test]
fn inflated_perturbation_fails_only_the_ia2_line() {
    let p = FrameworkParams::reference_nondiffusive();
    let s0: f64 = 80.0;
    let ss = close_state(s0);
    // zero-mean bump concentrated inside z*, cut off on the nodes the slope
    // stencil reads so the orthogonality conditions are untouched
    let g = *ss.grid();
    let cut = 6.0 * g.spacing();
    let shape = move |z: f64| if z < cut { 0.0 } else { z.powi(3) * (-3.0 * z).exp() };
    let s0f = Field::from_fn(g, shape);
    let s1f = Field::from_fn(g, move |z| z * shape(z));
    let ratio = s0f.integral() / s1f.integral();
    let bump = s0f.zip_with(&s1f, |u, v| u - ratio * v);
    let with = |f: f64| {
        let atil = ss.atil().zip_with(&bump, |a, b| a + f * b);
        SelfSimilarState::from_raw(atil, ss.ctil().clone(), ss.lambda(), ss.nu(), s0, Sigma::NonDiffusive).unwrap()
    };
    let ia2 = |f: f64| energy_report(&with(f), &p).unwrap().ia2;
    // Ia2 is a quadratic form, so three samples determine it
    let (a, plus, minus) = (ia2(0.0), ia2(1.0), ia2(-1.0));
    let (b, c) = ((plus - minus) / 2.0, (plus + minus) / 2.0 - a);
    let target = 2.0 * p.delta * p.delta * s0.powf(-p.h_a);
    let f = (-b + (b * b - 4.0 * c * (a - target)).sqrt()) / (2.0 * c);
    assert!((ia2(f) / target - 1.0).abs() <= 1e-9);
    let v = check_initial_closeness(&with(f), &p, &[]).unwrap();
    let failed: Vec<&str> = v.failures().iter().map(|c| c.condition.as_str()).collect();
    assert_eq!(failed, ["I_a^2 < delta^2 s0^-h_a"]);
}

#[test]
fn trapped_run_regression() {
    let p = FrameworkParams::reference_nondiffusive();
    let s0: f64 = 80.0;
    let ss = close_state(s0);
    assert!(check_initial_closeness(&ss, &p, &[]).unwrap().passed());
    let cfg = SelfSimConfig {
        duration: 2.0,
        ..SelfSimConfig::default()
    };
    let run = run_selfsim(&ss, &p, &cfg);
    assert!(run.error.is_none(), "{:?}", run.error);
    assert!(run.all_trapped());
    let last = run.records.last().unwrap();
    assert_eq!(last.s, s0 + 2.0);
    // λ tracks s e^{-s} and ν s stays of order one
    let ratio = last.lambda / (last.s * (-last.s).exp());
    assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    assert!(last.nu * last.s > 0.25 && last.nu * last.s < 4.0);
}

#[test]
fn canonical_data_at_moderate_s0_misses_the_energy_lines() {
    // at s0 ≈ 9.1 the tail balance term alone exceeds δ² s0^{-h_a}
    let spec = InitialDataSpec::canonical(1e-3, Sigma::NonDiffusive);
    let st = build_theorem_data(&spec, 2049).unwrap();
    let ss = decompose(st.a(), st.c(), Sigma::NonDiffusive, tracelab::initial::initial_self_similar_time(1e-3)).unwrap();
    let v = check_initial_closeness(&ss, &FrameworkParams::reference_nondiffusive(), &[]).unwrap();
    let failed: Vec<&str> = v.failures().iter().map(|c| c.condition.as_str()).collect();
    assert_eq!(failed, ["I_a^2 < delta^2 s0^-h_a", "E_a^2 < s0^-h_a/16"]);
}
