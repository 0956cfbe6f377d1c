//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;

use tracelab::format::g17;
use tracelab::initial::{build_theorem_data, initial_self_similar_time, InitialDataSpec, PerturbationFamily};
use tracelab::params::{FrameworkParams, Regime};
use tracelab::trace::{SolverConfig, DEFAULT_CAP_FACTOR};
use tracelab::Sigma;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Selfsim,
    ValidateParams,
    Alpha0,
    Energies,
    Fit,
    Redecompose,
    Sweep,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Self::Simulate,
            "selfsim" => Self::Selfsim,
            "validate-params" => Self::ValidateParams,
            "alpha0" => Self::Alpha0,
            "energies" => Self::Energies,
            "fit" => Self::Fit,
            "redecompose" => Self::Redecompose,
            "sweep" => Self::Sweep,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Selfsim => "selfsim",
            Self::ValidateParams => "validate-params",
            Self::Alpha0 => "alpha0",
            Self::Energies => "energies",
            Self::Fit => "fit",
            Self::Redecompose => "redecompose",
            Self::Sweep => "sweep",
        }
    }
}

/// Every key the parser accepts. Keys left unset take defaults at
/// resolution time.
pub const KEYS: &[&str] = &[
    "run.mode",
    "run.sigma",
    "solver.n",
    "solver.dt_safety",
    "solver.blowup_cap",
    "solver.dt_floor",
    "solver.upwind",
    "solver.t_max",
    "solver.dt_max",
    "solver.max_steps",
    "solver.snapshot_stride",
    "initial.lambda0",
    "initial.nu0",
    "initial.kappa",
    "initial.family",
    "initial.seed",
    "initial.c_kappa",
    "params.alpha",
    "params.h_a",
    "params.eps_a",
    "params.eps_c",
    "params.gamma",
    "params.h_c",
    "params.k",
    "params.eta0",
    "params.l",
    "params.m",
    "params.n",
    "params.n0",
    "params.z_star",
    "params.delta",
    "selfsim.s0",
    "selfsim.duration",
    "selfsim.ds",
    "selfsim.ds_floor",
    "selfsim.stride",
    "selfsim.max_steps",
    "fit.trajectory",
    "fit.snapshots",
    "fit.tail_fraction",
    "fit.log_window",
    "fit.z_values",
    "redecompose.lambda",
    "redecompose.nu",
    "redecompose.atil0",
    "sweep.mode",
    "sweep.key",
    "sweep.values",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw key-value pairs in insertion order; later assignments win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<(String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
            raw.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {e}", i + 1)))?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key '{key}'")));
        }
        self.entries.retain(|(k, _)| k != key);
        self.entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Parses a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub trajectory: Option<String>,
    pub snapshots: Option<String>,
    pub tail_fraction: f64,
    pub log_window: f64,
    pub z_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimSettings {
    pub s0: f64,
    pub duration: f64,
    pub ds: Option<f64>,
    pub ds_floor: f64,
    pub stride: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub mode: Mode,
    pub key: String,
    pub values: Vec<String>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub sigma: Sigma,
    pub solver: SolverConfig,
    pub initial: InitialDataSpec,
    pub params: FrameworkParams,
    pub selfsim: SelfSimSettings,
    pub fit: FitSettings,
    pub redecompose: (f64, f64, f64),
    pub sweep: Option<SweepSettings>,
}

fn num(raw: &RawConfig, key: &str, default: f64) -> Result<f64, ConfigError> {
    match raw.get(key) {
        None | Some("auto") => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| ConfigError(format!("{key}: '{v}' is not a number"))),
    }
}

fn opt_num(raw: &RawConfig, key: &str) -> Result<Option<f64>, ConfigError> {
    match raw.get(key) {
        None | Some("auto") => Ok(None),
        Some(_) => num(raw, key, 0.0).map(Some),
    }
}

fn count(raw: &RawConfig, key: &str, default: usize) -> Result<usize, ConfigError> {
    match raw.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| ConfigError(format!("{key}: '{v}' is not a non-negative integer"))),
    }
}

fn flag(raw: &RawConfig, key: &str, default: bool) -> Result<bool, ConfigError> {
    match raw.get(key) {
        None => Ok(default),
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(v) => Err(ConfigError(format!("{key}: '{v}' is not a boolean"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl RunConfig {
    /// Fills every unset key with its default. Defaults that depend on the
    /// initial data (`ν₀`, `s₀`, the blow-up cap) are computed here.
    pub fn resolve(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mode_name = raw.get("run.mode").unwrap_or("simulate");
        let mode = Mode::parse(mode_name).ok_or_else(|| ConfigError(format!("unknown mode '{mode_name}'")))?;
        let sigma_v = num(raw, "run.sigma", 0.0)?;
        let sigma = Sigma::from_int(sigma_v as i64)
            .filter(|_| sigma_v.fract() == 0.0)
            .ok_or_else(|| ConfigError(format!("run.sigma must be 0 or 1, got {sigma_v}")))?;

        let base = SolverConfig::default();
        let n = count(raw, "solver.n", base.n)?;
        let lambda0 = num(raw, "initial.lambda0", 1e-3)?;
        let family_name = raw.get("initial.family").unwrap_or("none");
        let family = PerturbationFamily::parse(family_name)
            .ok_or_else(|| ConfigError(format!("unknown perturbation family '{family_name}'")))?;
        let mut initial = InitialDataSpec::canonical(lambda0, sigma);
        initial.nu0 = num(raw, "initial.nu0", initial.nu0)?;
        initial.kappa = num(raw, "initial.kappa", 0.0)?;
        initial.family = family;
        initial.seed = count(raw, "initial.seed", 0)? as u64;
        initial.c_kappa = num(raw, "initial.c_kappa", 0.0)?;

        let mut solver = SolverConfig {
            n,
            dt_safety: num(raw, "solver.dt_safety", base.dt_safety)?,
            blowup_cap: base.blowup_cap,
            dt_floor: num(raw, "solver.dt_floor", base.dt_floor)?,
            upwind: flag(raw, "solver.upwind", base.upwind)?,
            t_max: num(raw, "solver.t_max", base.t_max)?,
            dt_max: num(raw, "solver.dt_max", base.dt_max)?,
            max_steps: count(raw, "solver.max_steps", base.max_steps)?,
            snapshot_stride: count(raw, "solver.snapshot_stride", 20)?,
        };
        let needs_data = matches!(mode, Mode::Simulate | Mode::Selfsim | Mode::Energies);
        solver.blowup_cap = match opt_num(raw, "solver.blowup_cap")? {
            Some(v) => v,
            None if needs_data => {
                initial.validate().map_err(|e| ConfigError(e.to_string()))?;
                let st = build_theorem_data(&initial, n).map_err(|e| ConfigError(e.to_string()))?;
                DEFAULT_CAP_FACTOR * st.a().max_abs().max(1.0)
            }
            None => base.blowup_cap,
        };

        let reference = match sigma {
            Sigma::NonDiffusive => FrameworkParams::reference_nondiffusive(),
            Sigma::Diffusive => FrameworkParams::reference_diffusive(),
        };
        let regime = match reference.regime {
            Regime::NonDiffusive { gamma, h_c } => Regime::NonDiffusive {
                gamma: num(raw, "params.gamma", gamma)?,
                h_c: num(raw, "params.h_c", h_c)?,
            },
            Regime::Diffusive { k, eta0, l } => Regime::Diffusive {
                k: num(raw, "params.k", k)?,
                eta0: num(raw, "params.eta0", eta0)?,
                l: num(raw, "params.l", l)?,
            },
        };
        let params = FrameworkParams {
            alpha: num(raw, "params.alpha", reference.alpha)?,
            h_a: num(raw, "params.h_a", reference.h_a)?,
            eps_a: num(raw, "params.eps_a", reference.eps_a)?,
            eps_c: num(raw, "params.eps_c", reference.eps_c)?,
            regime,
            m: num(raw, "params.m", reference.m)?,
            n: num(raw, "params.n", reference.n)?,
            n0: num(raw, "params.n0", reference.n0)?,
            z_star: num(raw, "params.z_star", reference.z_star)?,
            delta: num(raw, "params.delta", reference.delta)?,
        };

        let s0_default = if lambda0 > 0.0 && lambda0 < (-1.0f64).exp() {
            initial_self_similar_time(lambda0)
        } else {
            f64::NAN
        };
        let selfsim = SelfSimSettings {
            s0: num(raw, "selfsim.s0", s0_default)?,
            duration: num(raw, "selfsim.duration", 5.0)?,
            ds: opt_num(raw, "selfsim.ds")?,
            ds_floor: num(raw, "selfsim.ds_floor", 1e-12)?,
            stride: count(raw, "selfsim.stride", 1)?,
            max_steps: count(raw, "selfsim.max_steps", 10_000_000)?,
        };

        let z_values = match raw.get("fit.z_values") {
            None => vec![0.0, 0.25, 0.5],
            Some(v) => list(v)
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| ConfigError(format!("fit.z_values: '{v}' is not a list of numbers")))?,
        };
        let fit = FitSettings {
            trajectory: raw.get("fit.trajectory").map(str::to_string),
            snapshots: raw.get("fit.snapshots").map(str::to_string),
            tail_fraction: num(raw, "fit.tail_fraction", 0.25)?,
            log_window: num(raw, "fit.log_window", 0.5)?,
            z_values,
        };

        let redecompose = (
            num(raw, "redecompose.lambda", lambda0)?,
            num(raw, "redecompose.nu", initial.nu0)?,
            num(raw, "redecompose.atil0", 0.0)?,
        );

        let sweep = if mode == Mode::Sweep {
            let inner = raw.get("sweep.mode").unwrap_or("simulate");
            let inner = Mode::parse(inner)
                .filter(|m| *m != Mode::Sweep)
                .ok_or_else(|| ConfigError(format!("sweep.mode '{inner}' is not a runnable mode")))?;
            let key = raw
                .get("sweep.key")
                .ok_or_else(|| ConfigError("sweep needs sweep.key".into()))?
                .to_string();
            if !KEYS.contains(&key.as_str()) || key.starts_with("sweep.") || key == "run.mode" {
                return Err(ConfigError(format!("sweep.key '{key}' cannot be swept")));
            }
            let values = list(raw.get("sweep.values").unwrap_or(""));
            if values.is_empty() {
                return Err(ConfigError("sweep needs a non-empty sweep.values list".into()));
            }
            Some(SweepSettings { mode: inner, key, values })
        } else {
            None
        };

        Ok(Self {
            mode,
            sigma,
            solver,
            initial,
            params,
            selfsim,
            fit,
            redecompose,
            sweep,
        })
    }

    /// Writes the resolved configuration; parsing it back resolves to the
    /// same values bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("run.mode", self.mode.name().into());
        line("run.sigma", self.sigma.as_int().to_string());
        let s = &self.solver;
        line("solver.n", s.n.to_string());
        line("solver.dt_safety", g17(s.dt_safety));
        line("solver.blowup_cap", g17(s.blowup_cap));
        line("solver.dt_floor", g17(s.dt_floor));
        line("solver.upwind", s.upwind.to_string());
        line("solver.t_max", g17(s.t_max));
        line("solver.dt_max", g17(s.dt_max));
        line("solver.max_steps", s.max_steps.to_string());
        line("solver.snapshot_stride", s.snapshot_stride.to_string());
        let i = &self.initial;
        line("initial.lambda0", g17(i.lambda0));
        line("initial.nu0", g17(i.nu0));
        line("initial.kappa", g17(i.kappa));
        line("initial.family", i.family.name().into());
        line("initial.seed", i.seed.to_string());
        line("initial.c_kappa", g17(i.c_kappa));
        let p = &self.params;
        line("params.alpha", g17(p.alpha));
        line("params.h_a", g17(p.h_a));
        line("params.eps_a", g17(p.eps_a));
        line("params.eps_c", g17(p.eps_c));
        match p.regime {
            Regime::NonDiffusive { gamma, h_c } => {
                line("params.gamma", g17(gamma));
                line("params.h_c", g17(h_c));
            }
            Regime::Diffusive { k, eta0, l } => {
                line("params.k", g17(k));
                line("params.eta0", g17(eta0));
                line("params.l", g17(l));
            }
        }
        line("params.m", g17(p.m));
        line("params.n", g17(p.n));
        line("params.n0", g17(p.n0));
        line("params.z_star", g17(p.z_star));
        line("params.delta", g17(p.delta));
        let ss = &self.selfsim;
        line("selfsim.s0", g17(ss.s0));
        line("selfsim.duration", g17(ss.duration));
        line("selfsim.ds", ss.ds.map_or_else(|| "auto".into(), g17));
        line("selfsim.ds_floor", g17(ss.ds_floor));
        line("selfsim.stride", ss.stride.to_string());
        line("selfsim.max_steps", ss.max_steps.to_string());
        let f = &self.fit;
        if let Some(t) = &f.trajectory {
            line("fit.trajectory", t.clone());
        }
        if let Some(t) = &f.snapshots {
            line("fit.snapshots", t.clone());
        }
        line("fit.tail_fraction", g17(f.tail_fraction));
        line("fit.log_window", g17(f.log_window));
        let zs: Vec<String> = f.z_values.iter().map(|&z| g17(z)).collect();
        line("fit.z_values", zs.join(","));
        let (l, nu, a0) = self.redecompose;
        line("redecompose.lambda", g17(l));
        line("redecompose.nu", g17(nu));
        line("redecompose.atil0", g17(a0));
        if let Some(sw) = &self.sweep {
            line("sweep.mode", sw.mode.name().into());
            line("sweep.key", sw.key.clone());
            line("sweep.values", sw.values.join(","));
        }
        out
    }
}
