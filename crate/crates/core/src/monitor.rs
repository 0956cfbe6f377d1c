//! Self-similar runs with per-step energy and trapping records.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_trapped, energy_report, DiagError, EnergyReport};
use crate::format::g17;
use crate::params::FrameworkParams;
use crate::selfsim::{default_ds, modulation_rates, step_selfsim, SelfSimError, SelfSimilarState};
use crate::verdict::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimConfig {
    /// Self-similar duration of the run.
    pub duration: f64,
    /// Fixed step; `None` uses [`default_ds`] at every step.
    pub ds: Option<f64>,
    pub ds_floor: f64,
    /// Record every `stride`-th step (the first and last are always kept).
    pub stride: usize,
    pub max_steps: usize,
}

impl Default for SelfSimConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            ds: None,
            ds_floor: 1e-12,
            stride: 1,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimRecord {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    pub nu: f64,
    pub dlog_lambda: f64,
    pub max_atil: f64,
    pub max_ctil: f64,
    pub energies: EnergyReport,
    /// `I_c²` for σ = 0, `T^{2η₀}` for σ = 1.
    pub temperature_energy: f64,
    pub trapped: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimRun {
    pub records: Vec<SelfSimRecord>,
    pub last: SelfSimilarState,
    /// Set when the run stopped early.
    pub error: Option<String>,
}

pub const SELFSIM_HEADER: &str = "s,lambda,nu,max_atil,max_ctil,I_a2,E_a2,I_c2_or_T,trapped";

impl SelfSimRun {
    pub fn all_trapped(&self) -> bool {
        self.records.iter().all(|r| r.trapped.passed())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SELFSIM_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                g17(r.s),
                g17(r.lambda),
                g17(r.nu),
                g17(r.max_atil),
                g17(r.max_ctil),
                g17(r.energies.ia2),
                g17(r.energies.ea2),
                g17(r.temperature_energy),
                u8::from(r.trapped.passed())
            ));
        }
        out
    }
}

pub fn record(st: &SelfSimilarState, p: &FrameworkParams) -> Result<SelfSimRecord, DiagError> {
    let energies = energy_report(st, p)?;
    Ok(SelfSimRecord {
        s: st.s(),
        t: st.t(),
        lambda: st.lambda(),
        nu: st.nu(),
        dlog_lambda: modulation_rates(st).dlog_lambda,
        max_atil: st.atil().max_abs(),
        max_ctil: st.ctil().max_abs(),
        energies,
        temperature_energy: energies.temperature_energy(p),
        trapped: check_trapped(&energies, p, st.lambda(), st.nu()),
    })
}

/// Evolves `st0` for `cfg.duration` units of `s`, recording energies and the
/// trapping verdict.
pub fn run_selfsim(st0: &SelfSimilarState, p: &FrameworkParams, cfg: &SelfSimConfig) -> SelfSimRun {
    let s_end = st0.s() + cfg.duration;
    let mut st = st0.clone();
    let mut records = Vec::new();
    let mut error = None;
    match record(&st, p) {
        Ok(r) => records.push(r),
        Err(e) => {
            return SelfSimRun {
                records,
                last: st,
                error: Some(e.to_string()),
            }
        }
    }
    let mut steps = 0usize;
    while st.s() < s_end && steps < cfg.max_steps {
        let mut ds = cfg.ds.unwrap_or_else(|| default_ds(&st));
        let remaining = s_end - st.s();
        let clipped = ds >= remaining;
        if clipped {
            ds = remaining;
        } else if ds < cfg.ds_floor {
            error = Some(
                SelfSimError::TimeStepUnderflow {
                    ds,
                    floor: cfg.ds_floor,
                    s: st.s(),
                }
                .to_string(),
            );
            break;
        }
        match step_selfsim(&st, ds) {
            Ok(next) => st = next,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
        if clipped {
            // land exactly on the end time
            st = st.clone().with_s(s_end);
        }
        steps += 1;
        let last = st.s() >= s_end;
        if last || steps % cfg.stride.max(1) == 0 {
            match record(&st, p) {
                Ok(r) => records.push(r),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
    }
    SelfSimRun {
        records,
        last: st,
        error,
    }
}
