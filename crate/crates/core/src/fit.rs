//! Blow-up time and rate estimation from physical-frame trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::g17;
use crate::params::{FrameworkParams, Regime};
use crate::selfsim::decompose;
use crate::trace::Trajectory;
use crate::Sigma;

/// Allowed shortfall of a measured temperature decay rate.
pub const TEMPERATURE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degenerate fit: {0}")]
    FitDegenerate(String),
}

fn degenerate(msg: impl Into<String>) -> FitError {
    FitError::FitDegenerate(msg.into())
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the residuals.
    pub rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    LinearFit {
        slope,
        intercept,
        rms,
    }
}

/// Fit of `log y = log C − p s + ξ log s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateFit {
    pub log_prefactor: f64,
    pub p: f64,
    pub xi: f64,
    pub rms: f64,
}

/// Least squares on the basis `(1, −s, log s)` via the normal equations.
pub fn template_fit(s: &[f64], log_y: &[f64]) -> Result<TemplateFit, FitError> {
    if s.len() < 4 {
        return Err(degenerate("template fit needs at least 4 samples"));
    }
    let rows: Vec<[f64; 3]> = s.iter().map(|&v| [1.0, -v, v.ln()]).collect();
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (row, &y) in rows.iter().zip(log_y) {
        for i in 0..3 {
            r[i] += row[i] * y;
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let c = solve3(m, r).ok_or_else(|| degenerate("singular template system"))?;
    let rms = (rows
        .iter()
        .zip(log_y)
        .map(|(row, y)| (y - c[0] * row[0] - c[1] * row[1] - c[2] * row[2]).powi(2))
        .sum::<f64>()
        / s.len() as f64)
        .sqrt();
    Ok(TemplateFit {
        log_prefactor: c[0],
        p: c[1],
        xi: c[2],
        rms,
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let acc: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - acc) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Blow-up time from the x-intercept of `1/max|a|` against `t` over the final
/// `tail_fraction` of the samples.
pub fn estimate_t(traj: &Trajectory, tail_fraction: f64) -> Result<f64, FitError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(degenerate(format!("tail fraction {tail_fraction} outside (0, 0.5]")));
    }
    let n = traj.samples.len();
    let take = ((n as f64 * tail_fraction).ceil() as usize).max(3);
    if n < take || n < 3 {
        return Err(degenerate(format!("{n} samples are too few")));
    }
    let tail = &traj.samples[n - take..];
    let t: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let inv: Vec<f64> = tail.iter().map(|s| 1.0 / s.max_a).collect();
    if inv.windows(2).any(|w| !(w[1] < w[0])) || t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(degenerate("1/max|a| is not decreasing over the tail"));
    }
    let fit = linear_fit(&t, &inv);
    let t_hat = -fit.intercept / fit.slope;
    let last = t[t.len() - 1];
    if !(fit.slope < 0.0 && t_hat.is_finite() && t_hat > last) {
        return Err(degenerate(format!("intercept {t_hat} does not exceed last time {last}")));
    }
    Ok(t_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of the `log(T̂ − t)` range, nearest to blow-up, used by the fits.
    pub log_window: f64,
    pub z_values: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            log_window: 0.5,
            z_values: vec![0.0, 0.25, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRate {
    #[serde(rename = "Z")]
    pub z: f64,
    pub exponent: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResiduals {
    pub rate_a: f64,
    pub nu_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    #[serde(rename = "T_hat")]
    pub t_hat: f64,
    pub rate_a: f64,
    /// `exp(intercept)` of the `max|a|` fit, the inverse of the fitted `λ∞`.
    pub prefactor: f64,
    /// `NaN` when no snapshots were available.
    pub nu_slope: f64,
    pub pointwise: Vec<PointwiseRate>,
    pub residuals: FitResiduals,
}

pub const RATES_HEADER: &str = "Z,exponent,rms";

impl BlowupFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }

    pub fn rates_csv(&self) -> String {
        let mut out = format!("{RATES_HEADER}\n");
        for p in &self.pointwise {
            out.push_str(&format!("{},{},{}\n", g17(p.z), g17(p.exponent), g17(p.rms)));
        }
        out
    }
}

fn in_window(gap: f64, lo: f64, hi: f64, window: f64) -> bool {
    gap > 0.0 && gap.ln() <= lo + window * (hi - lo)
}

/// Log-log fits of `max|a|` and `a(t, Z)` against `T̂ − t`, and the linear
/// fit of `1/ν` against `|log(T̂ − t)|`, over the final `log_window` of the
/// logarithmic time range.
pub fn fit_rates_with(traj: &Trajectory, t_hat: f64, opts: &FitOptions) -> Result<BlowupFit, FitError> {
    let last = traj.last_time();
    if !(t_hat > last) {
        return Err(degenerate(format!("T_hat {t_hat} does not exceed last time {last}")));
    }
    let first = traj.samples.first().map_or(0.0, |s| s.t);
    let lo = (t_hat - last).ln();
    let hi = (t_hat - first).ln();

    let (x, y): (Vec<f64>, Vec<f64>) = traj
        .samples
        .iter()
        .filter(|s| in_window(t_hat - s.t, lo, hi, opts.log_window) && s.max_a > 0.0)
        .map(|s| ((t_hat - s.t).ln(), s.max_a.ln()))
        .unzip();
    if x.len() < 3 {
        return Err(degenerate("fewer than 3 samples in the fitting window"));
    }
    let rate = linear_fit(&x, &y);

    let snaps: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|s| in_window(t_hat - s.t(), lo, hi, opts.log_window))
        .collect();

    let mut pointwise = Vec::new();
    let mut nu_fit = LinearFit {
        slope: f64::NAN,
        intercept: f64::NAN,
        rms: f64::NAN,
    };
    if snaps.len() >= 3 {
        let xs: Vec<f64> = snaps.iter().map(|s| (t_hat - s.t()).ln()).collect();
        for &z in &opts.z_values {
            let ys: Vec<f64> = snaps.iter().map(|s| value_at(s.a(), z).abs().ln()).collect();
            if ys.iter().any(|v| !v.is_finite()) {
                return Err(degenerate(format!("a vanishes at Z = {z}")));
            }
            let f = linear_fit(&xs, &ys);
            pointwise.push(PointwiseRate {
                z,
                exponent: f.slope,
                rms: f.rms,
            });
        }
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (s, &xl) in snaps.iter().zip(&xs) {
            if let Ok(st) = decompose(s.a(), s.c(), s.sigma(), 0.0) {
                lx.push(xl.abs());
                ly.push(1.0 / st.nu());
            }
        }
        if lx.len() < 3 {
            return Err(degenerate("fewer than 3 decomposable snapshots"));
        }
        nu_fit = linear_fit(&lx, &ly);
    } else if !opts.z_values.is_empty() && !traj.snapshots.is_empty() {
        return Err(degenerate("fewer than 3 snapshots in the fitting window"));
    }

    Ok(BlowupFit {
        t_hat,
        rate_a: rate.slope,
        prefactor: rate.intercept.exp(),
        nu_slope: nu_fit.slope,
        pointwise,
        residuals: FitResiduals {
            rate_a: rate.rms,
            nu_slope: nu_fit.rms,
        },
    })
}

pub fn fit_rates(traj: &Trajectory, t_hat: f64) -> Result<BlowupFit, FitError> {
    fit_rates_with(traj, t_hat, &FitOptions::default())
}

/// Linear interpolation of a field at `x`.
fn value_at(f: &crate::Field, x: f64) -> f64 {
    let g = f.grid();
    let v = f.values();
    let pos = ((x - g.lo()) / g.spacing()).clamp(0.0, (g.len() - 1) as f64);
    let i = (pos.floor() as usize).min(g.len() - 2);
    let w = pos - i as f64;
    if w == 0.0 {
        v[i]
    } else {
        (1.0 - w) * v[i] + w * v[i + 1]
    }
}

/// Self-similar time along a physical trajectory, `s = s₀ + ∫ max|a| dt`
/// (trapezoid), using `max|a| = a(0) = 1/λ` near the profile.
pub fn self_similar_times(traj: &Trajectory, s0: f64) -> Vec<f64> {
    let mut s = Vec::with_capacity(traj.samples.len());
    let mut acc = s0;
    for (i, smp) in traj.samples.iter().enumerate() {
        if i > 0 {
            let prev = &traj.samples[i - 1];
            acc += 0.5 * (smp.t - prev.t) * (smp.max_a + prev.max_a);
        }
        s.push(acc);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReport {
    pub sigma: i32,
    /// σ = 0: exponent of `max|c̃|` in `T̂ − t`; σ = 1: the fitted `p`.
    pub measured: Option<f64>,
    /// σ = 1 only: the fitted `ξ`.
    pub xi: Option<f64>,
    /// Decay rate the theorem guarantees.
    pub theorem: f64,
    pub rms: Option<f64>,
    pub pass: bool,
}

/// Decay of `max|c̃| = λ^{1+σ} max|c|` with `λ = 1/max|a|`. For σ = 0 the
/// exponent in `T̂ − t` is compared with `h_c/2`; for σ = 1 the template
/// `e^{-ps} s^ξ` is fitted in self-similar time and `p` compared with
/// `(α+1)/16`. Samples outside the final `log_window` are ignored for σ = 0.
pub fn temperature_rates(
    traj: &Trajectory,
    t_hat: f64,
    p: &FrameworkParams,
    s0: f64,
) -> Result<TemperatureReport, FitError> {
    let sigma = traj.sigma;
    if p.sigma() != sigma {
        return Err(degenerate("parameter regime does not match the trajectory"));
    }
    let theorem = match p.regime {
        Regime::NonDiffusive { h_c, .. } => h_c / 2.0,
        Regime::Diffusive { .. } => (p.alpha + 1.0) / 16.0,
    };
    let power = 1 + sigma.as_int();
    let ctil: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| s.max_c * s.max_a.powi(-power))
        .collect();
    if ctil.iter().all(|&v| v == 0.0) {
        return Ok(TemperatureReport {
            sigma: sigma.as_int(),
            measured: None,
            xi: None,
            theorem,
            rms: None,
            pass: true,
        });
    }
    if !(t_hat > traj.last_time()) {
        return Err(degenerate("T_hat does not exceed the last sample time"));
    }
    match sigma {
        Sigma::NonDiffusive => {
            let first = traj.samples[0].t;
            let lo = (t_hat - traj.last_time()).ln();
            let hi = (t_hat - first).ln();
            let (x, y): (Vec<f64>, Vec<f64>) = traj
                .samples
                .iter()
                .zip(&ctil)
                .filter(|(s, &c)| c > 0.0 && in_window(t_hat - s.t, lo, hi, 1.0))
                .map(|(s, &c)| ((t_hat - s.t).ln(), c.ln()))
                .unzip();
            if x.len() < 3 {
                return Err(degenerate("fewer than 3 positive temperature samples"));
            }
            let f = linear_fit(&x, &y);
            Ok(TemperatureReport {
                sigma: 0,
                measured: Some(f.slope),
                xi: None,
                theorem,
                rms: Some(f.rms),
                pass: f.slope >= theorem - TEMPERATURE_TOL,
            })
        }
        Sigma::Diffusive => {
            let s = self_similar_times(traj, s0);
            let (x, y): (Vec<f64>, Vec<f64>) = s
                .iter()
                .zip(&ctil)
                .filter(|(_, &c)| c > 0.0)
                .map(|(&s, &c)| (s, c.ln()))
                .unzip();
            let f = template_fit(&x, &y)?;
            Ok(TemperatureReport {
                sigma: 1,
                measured: Some(f.p),
                xi: Some(f.xi),
                theorem,
                rms: Some(f.rms),
                pass: f.p >= theorem - TEMPERATURE_TOL,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use crate::trace::{Sample, Termination, TraceState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(law: impl Fn(f64) -> f64, n: usize, t_end: f64) -> Trajectory {
        let samples = (0..n)
            .map(|i| {
                let t = t_end * i as f64 / (n - 1) as f64;
                Sample {
                    t,
                    max_a: law(t),
                    max_c: 0.0,
                    mean_a: 0.0,
                    dt: 0.0,
                }
            })
            .collect();
        Trajectory {
            samples,
            snapshots: Vec::new(),
            termination: Termination::BlowupCap,
            sigma: Sigma::NonDiffusive,
        }
    }

    #[test]
    fn exact_law_recovers_t() {
        let traj = synthetic(|t| 1.0 / (1.0 - t), 200, 0.99);
        let t = estimate_t(&traj, 0.25).unwrap();
        assert!((t - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_law_recovers_t() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..50).map(|_| 1.0 + rng.gen_range(-0.01..0.01)).collect();
            let mut traj = synthetic(|t| 1.0 / (1.0 - t), 50, 0.9);
            for (s, e) in traj.samples.iter_mut().zip(&noise) {
                s.max_a *= e;
            }
            let t = estimate_t(&traj, 0.5).unwrap();
            assert!((t - 1.0).abs() < 5e-3, "seed {seed}: {t}");
        }
    }

    #[test]
    fn flat_trajectory_is_degenerate() {
        let traj = synthetic(|_| 1.0, 100, 1.0);
        assert!(matches!(estimate_t(&traj, 0.3), Err(FitError::FitDegenerate(_))));
        assert!(estimate_t(&traj, 0.7).is_err());
    }

    #[test]
    fn time_shift_moves_t_hat() {
        let traj = synthetic(|t| 1.0 / (2.0 - t).powf(1.1), 300, 1.9);
        let t0 = estimate_t(&traj, 0.2).unwrap();
        let mut shifted = traj.clone();
        shifted.samples.iter_mut().for_each(|s| s.t += 3.5);
        let t1 = estimate_t(&shifted, 0.2).unwrap();
        assert!((t1 - t0 - 3.5).abs() < 1e-9);
    }

    #[test]
    fn pointwise_exponents_of_synthetic_field() {
        let g = Grid::new(0.0, 1.0, 65).unwrap();
        let snaps: Vec<TraceState> = (0..40)
            .map(|i| {
                let t = 1.0 - 10f64.powf(-1.0 - 0.1 * i as f64);
                let a = Field::from_fn(g, |z| (1.0 - t).powf(-1.0 + z));
                TraceState::trusted(a, Field::zeros(g), Sigma::NonDiffusive, t)
            })
            .collect();
        let mut traj = synthetic(|t| 1.0 / (1.0 - t), 2, 0.0);
        traj.samples = snaps
            .iter()
            .map(|s| Sample {
                t: s.t(),
                max_a: s.a().max_abs(),
                max_c: 0.0,
                mean_a: 0.0,
                dt: 0.0,
            })
            .collect();
        traj.snapshots = snaps;
        let opts = FitOptions {
            log_window: 1.0,
            z_values: vec![0.0, 0.25, 0.5, 0.75],
        };
        let fit = fit_rates_with(&traj, 1.0, &opts).unwrap();
        for p in &fit.pointwise {
            assert!((p.exponent - (-1.0 + p.z)).abs() < 0.01, "{p:?}");
        }
        assert!((fit.rate_a + 1.0).abs() < 1e-3);
    }

    #[test]
    fn power_law_exponent_independent_of_prefactor() {
        for pref in [1e-3, 1.0, 1e4] {
            let traj = synthetic(|t| pref * (1.0 - t).powf(-1.3), 400, 0.999);
            let opts = FitOptions {
                log_window: 1.0,
                z_values: vec![],
            };
            let fit = fit_rates_with(&traj, 1.0, &opts).unwrap();
            assert!((fit.rate_a + 1.3).abs() < 1e-3);
        }
    }

    #[test]
    fn template_recovers_parameters() {
        let (p, xi) = (3.0 / 16.0, 0.75);
        let s: Vec<f64> = (0..200).map(|i| 10.0 + 0.2 * i as f64).collect();
        let y: Vec<f64> = s.iter().map(|&v| 2.0 - p * v + xi * v.ln()).collect();
        let f = template_fit(&s, &y).unwrap();
        assert!((f.p - p).abs() < 0.05 * p);
        assert!((f.xi - xi).abs() < 0.05 * xi);
    }

    #[test]
    fn zero_temperature_passes() {
        let traj = synthetic(|t| 1.0 / (1.0 - t), 50, 0.9);
        let r = temperature_rates(&traj, 1.0, &FrameworkParams::reference_nondiffusive(), 5.0)
            .unwrap();
        assert!(r.pass && r.measured.is_none());
    }
}
