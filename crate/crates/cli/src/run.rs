//! Mode execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use tracelab::diagnostics::{check_initial_closeness, energy_report};
use tracelab::fit::{estimate_t, fit_rates_with, temperature_rates, FitOptions};
use tracelab::format::g17;
use tracelab::grid::{Field, Grid};
use tracelab::initial::{build_theorem_data, redecompose};
use tracelab::monitor::{record, run_selfsim, SelfSimConfig, SelfSimRun};
use tracelab::params::{alpha0, validate_params};
use tracelab::selfsim::{decompose, SelfSimilarState};
use tracelab::trace::{run_to_blowup, Termination, TraceState, Trajectory};

use crate::config::{Mode, RawConfig, RunConfig};

pub const SNAPSHOT_HEADER: &str = "t,Z,a,c";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Exit code 1.
    Io(String),
    /// Exit code 2.
    Validation(String),
    /// Exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Validation(m) => write!(f, "validation failed: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn io(e: std::io::Error, path: &Path) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io(e, &path))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io(e, path))
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Runs one resolved configuration into `out`, which is created if needed.
pub fn execute(cfg: &RunConfig, raw: &RawConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io(e, out))?;
    write(out, "resolved.config", &cfg.to_text())?;
    let ctx = Ctx { cfg, out, quiet };
    match cfg.mode {
        Mode::Alpha0 => {
            println!("{}", g17(alpha0()));
            Ok(())
        }
        Mode::ValidateParams => validate(&ctx),
        Mode::Simulate => simulate(&ctx),
        Mode::Selfsim => selfsim(&ctx),
        Mode::Energies => energies(&ctx),
        Mode::Fit => fit(&ctx),
        Mode::Redecompose => redecomp(&ctx),
        Mode::Sweep => sweep(&ctx, raw),
    }
}

fn validate(ctx: &Ctx) -> Result<(), CliError> {
    let v = validate_params(&ctx.cfg.params);
    write(ctx.out, "verdict.json", &v.to_json())?;
    ctx.say(&v.to_json());
    if v.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = v.failures().iter().map(|c| c.condition.as_str()).collect();
        Err(CliError::Validation(names.join("; ")))
    }
}

fn initial_state(cfg: &RunConfig) -> Result<TraceState, CliError> {
    cfg.initial
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    build_theorem_data(&cfg.initial, cfg.solver.n).map_err(|e| CliError::Validation(e.to_string()))
}

fn initial_selfsim(cfg: &RunConfig) -> Result<SelfSimilarState, CliError> {
    let st = initial_state(cfg)?;
    decompose(st.a(), st.c(), cfg.sigma, cfg.selfsim.s0).map_err(|e| CliError::Numerical(e.to_string()))
}

fn snapshots_csv(traj: &Trajectory) -> String {
    let mut out = format!("{SNAPSHOT_HEADER}\n");
    for snap in &traj.snapshots {
        let g = snap.grid();
        for i in 0..g.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g17(snap.t()),
                g17(g.node(i)),
                g17(snap.a().values()[i]),
                g17(snap.c().values()[i])
            ));
        }
    }
    out
}

fn parse_snapshots(text: &str, cfg: &RunConfig) -> Result<Vec<TraceState>, CliError> {
    let bad = |m: String| CliError::Validation(format!("snapshots: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SNAPSHOT_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        if cols.len() != 4 {
            return Err(bad(format!("line {}: expected 4 columns", i + 2)));
        }
        match groups.last_mut() {
            Some((t, a, c)) if *t == cols[0] => {
                a.push(cols[2]);
                c.push(cols[3]);
            }
            _ => groups.push((cols[0], vec![cols[2]], vec![cols[3]])),
        }
    }
    groups
        .into_iter()
        .map(|(t, a, c)| {
            let g = Grid::new(0.0, 1.0, a.len()).map_err(|e| bad(e.to_string()))?;
            let a = Field::new(g, a).map_err(|e| bad(e.to_string()))?;
            let c = Field::new(g, c).map_err(|e| bad(e.to_string()))?;
            TraceState::new(a, c, cfg.sigma, t).map_err(|e| bad(e.to_string()))
        })
        .collect()
}

fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let st0 = initial_state(ctx.cfg)?;
    let traj = run_to_blowup(&st0, &ctx.cfg.solver);
    write(ctx.out, "trajectory.csv", &traj.to_csv())?;
    if ctx.cfg.solver.snapshot_stride > 0 {
        write(ctx.out, "snapshots.csv", &snapshots_csv(&traj))?;
    }
    let last = traj.samples.last().expect("initial sample");
    ctx.say(&format!(
        "steps {} termination {:?} t {} max|a| {}",
        traj.samples.len() - 1,
        traj.termination,
        g17(last.t),
        g17(last.max_a)
    ));
    if traj.termination == Termination::TimeStepUnderflow {
        return Err(CliError::Numerical(format!("time step underflow at t = {}", g17(last.t))));
    }
    Ok(())
}

fn selfsim(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let ss = initial_selfsim(cfg)?;
    let closeness =
        check_initial_closeness(&ss, &cfg.params, &[]).map_err(|e| CliError::Numerical(e.to_string()))?;
    let run = run_selfsim(
        &ss,
        &cfg.params,
        &SelfSimConfig {
            duration: cfg.selfsim.duration,
            ds: cfg.selfsim.ds,
            ds_floor: cfg.selfsim.ds_floor,
            stride: cfg.selfsim.stride,
            max_steps: cfg.selfsim.max_steps,
        },
    );
    write(ctx.out, "energies.csv", &run.to_csv())?;
    let first_untrapped = run.records.iter().find(|r| !r.trapped.passed()).map(|r| {
        json!({
            "s": r.s,
            "failures": r.trapped.failures(),
        })
    });
    let verdict = json!({
        "initial_closeness": closeness,
        "initially_close": closeness.passed(),
        "all_trapped": run.all_trapped(),
        "first_untrapped": first_untrapped,
        "s_end": run.last.s(),
        "error": run.error,
    });
    write(ctx.out, "verdict.json", &pretty(&verdict))?;
    ctx.say(&format!(
        "records {} initially close {} all trapped {} s_end {}",
        run.records.len(),
        closeness.passed(),
        run.all_trapped(),
        g17(run.last.s())
    ));
    match run.error {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(()),
    }
}

fn energies(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let ss = initial_selfsim(cfg)?;
    let num = |e: tracelab::diagnostics::DiagError| CliError::Numerical(e.to_string());
    let rep = energy_report(&ss, &cfg.params).map_err(num)?;
    let rec = record(&ss, &cfg.params).map_err(num)?;
    let closeness = check_initial_closeness(&ss, &cfg.params, &[]).map_err(num)?;
    let single = SelfSimRun {
        records: vec![rec],
        last: ss,
        error: None,
    };
    write(ctx.out, "energies.csv", &single.to_csv())?;
    write(ctx.out, "verdict.json", &closeness.to_json())?;
    ctx.say(&pretty(&json!({ "energies": rep, "initially_close": closeness.passed() })));
    Ok(())
}

fn fit(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let traj_path = cfg
        .fit
        .trajectory
        .as_ref()
        .map_or_else(|| ctx.out.join("trajectory.csv"), PathBuf::from);
    let snap_path = cfg
        .fit
        .snapshots
        .as_ref()
        .map(PathBuf::from)
        .or_else(|| Some(traj_path.with_file_name("snapshots.csv")).filter(|p| p.exists()));
    let mut traj = Trajectory::from_csv(&read(&traj_path)?, cfg.sigma, Termination::BlowupCap)
        .map_err(|e| CliError::Validation(format!("{}: {e}", traj_path.display())))?;
    if let Some(p) = snap_path {
        traj.snapshots = parse_snapshots(&read(&p)?, cfg)?;
    }
    let degenerate = |e: tracelab::fit::FitError| CliError::Numerical(e.to_string());
    let t_hat = estimate_t(&traj, cfg.fit.tail_fraction).map_err(degenerate)?;
    let opts = FitOptions {
        log_window: cfg.fit.log_window,
        z_values: cfg.fit.z_values.clone(),
    };
    let fitted = fit_rates_with(&traj, t_hat, &opts).map_err(degenerate)?;
    let temperature = match temperature_rates(&traj, t_hat, &cfg.params, cfg.selfsim.s0) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut doc = serde_json::to_value(&fitted).expect("fit serializes");
    doc["temperature"] = temperature;
    write(ctx.out, "fit.json", &pretty(&doc))?;
    write(ctx.out, "rates.csv", &fitted.rates_csv())?;
    ctx.say(&format!(
        "T_hat {} rate_a {} nu_slope {}",
        g17(fitted.t_hat),
        g17(fitted.rate_a),
        g17(fitted.nu_slope)
    ));
    Ok(())
}

fn redecomp(ctx: &Ctx) -> Result<(), CliError> {
    let (lam, nu, a0) = ctx.cfg.redecompose;
    let (lb, nb) = redecompose(lam, nu, a0).map_err(|e| CliError::Validation(e.to_string()))?;
    let doc = pretty(&json!({ "lambda_bar": lb, "nu_bar": nb }));
    write(ctx.out, "redecompose.json", &doc)?;
    ctx.say(&doc);
    Ok(())
}

fn sweep(ctx: &Ctx, raw: &RawConfig) -> Result<(), CliError> {
    let sw = ctx.cfg.sweep.as_ref().expect("resolved sweep settings");
    let codes: Vec<u8> = sw
        .values
        .par_iter()
        .enumerate()
        .map(|(i, value)| {
            let dir = ctx.out.join(format!("run_{i:03}"));
            let mut child = raw.clone();
            let outcome = child
                .set(&sw.key, value)
                .and_then(|_| child.set("run.mode", sw.mode.name()))
                .map_err(|e| CliError::Validation(e.to_string()))
                .and_then(|_| RunConfig::resolve(&child).map_err(|e| CliError::Validation(e.to_string())))
                .and_then(|cfg| execute(&cfg, &child, &dir, true));
            match outcome {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("{}: {e}", dir.display());
                    e.code()
                }
            }
        })
        .collect();
    let mut index = String::from("run,value,exit\n");
    for (i, (v, c)) in sw.values.iter().zip(&codes).enumerate() {
        index.push_str(&format!("run_{i:03},{v},{c}\n"));
    }
    write(ctx.out, "sweep.csv", &index)?;
    ctx.say(&index);
    match codes.iter().copied().max().unwrap_or(0) {
        0 => Ok(()),
        1 => Err(CliError::Io("a sweep member failed".into())),
        2 => Err(CliError::Validation("a sweep member failed validation".into())),
        _ => Err(CliError::Numerical("a sweep member failed numerically".into())),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}
