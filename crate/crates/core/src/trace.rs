//! Physical-frame solver for the trace system on `Z ∈ [0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::g17;
use crate::grid::{self, antiderivative, derivative, integral, DerivOrder, Field, Grid, GridError};
use crate::Sigma;

/// `|∫a|` allowed by [`TraceState::new`], relative to `max(1, max|a|)`.
pub const MEAN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("trace fields must live on Z in [0, 1], got [{lo}, {hi}]")]
    NotUnitInterval { lo: f64, hi: f64 },
    #[error("a and c are sampled on different grids")]
    GridMismatch,
    #[error("compatibility condition violated: integral of a = {0:e}")]
    NonZeroMean(f64),
    #[error("Dirichlet condition violated: c(0) = {left:e}, c(1) = {right:e}")]
    DirichletViolated { left: f64, right: f64 },
    #[error("time step {dt:e} fell below the floor {floor:e} at t = {t}")]
    TimeStepUnderflow { dt: f64, floor: f64, t: f64 },
}

/// `(a, c)` at physical time `t`; `a = −u_X` and `c = θ_XX` on the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceState {
    a: Field,
    c: Field,
    sigma: Sigma,
    t: f64,
}

impl TraceState {
    pub fn new(a: Field, c: Field, sigma: Sigma, t: f64) -> Result<Self, TraceError> {
        let g = *a.grid();
        if g.lo() != 0.0 || g.hi() != 1.0 {
            return Err(TraceError::NotUnitInterval { lo: g.lo(), hi: g.hi() });
        }
        if *c.grid() != g {
            return Err(TraceError::GridMismatch);
        }
        let mean = integral(&a);
        if mean.abs() > MEAN_TOLERANCE * a.max_abs().max(1.0) {
            return Err(TraceError::NonZeroMean(mean));
        }
        if sigma == Sigma::Diffusive {
            let tol = 1e-12 * c.max_abs().max(1.0);
            if c.first().abs() > tol || c.last().abs() > tol {
                return Err(TraceError::DirichletViolated {
                    left: c.first(),
                    right: c.last(),
                });
            }
        }
        Ok(Self { a, c, sigma, t })
    }

    /// Builds a state without re-checking invariants; used after a solver
    /// step that re-imposes them itself.
    pub(crate) fn trusted(a: Field, c: Field, sigma: Sigma, t: f64) -> Self {
        Self { a, c, sigma, t }
    }

    pub fn a(&self) -> &Field {
        &self.a
    }

    pub fn c(&self) -> &Field {
        &self.c
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    pub dt_safety: f64,
    /// Stop once `max|a|` reaches this value.
    pub blowup_cap: f64,
    pub dt_floor: f64,
    /// First-order upwinding of the `(∂⁻¹a) ∂_Z` transport.
    pub upwind: bool,
    pub t_max: f64,
    pub dt_max: f64,
    pub max_steps: usize,
    /// Keep every `snapshot_stride`-th state in the trajectory (0 = none).
    pub snapshot_stride: usize,
}

/// Factor between the initial `max|a|` and the default blow-up cap.
pub const DEFAULT_CAP_FACTOR: f64 = 1e6;

impl SolverConfig {
    /// Defaults with the blow-up cap at `10⁶ · max|a₀|`.
    pub fn for_state(state: &TraceState) -> Self {
        Self {
            n: state.grid().len(),
            blowup_cap: DEFAULT_CAP_FACTOR * state.a.max_abs().max(1.0),
            ..Self::default()
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 1025,
            dt_safety: 0.5,
            blowup_cap: 1e9,
            dt_floor: 1e-300,
            upwind: false,
            t_max: f64::INFINITY,
            dt_max: 1e-2,
            max_steps: 10_000_000,
            snapshot_stride: 0,
        }
    }
}

/// Right-hand side of the full system, diffusion included.
///
/// The spatial constant is evaluated as the quadrature mean of the local
/// terms `a² − (∂⁻¹a)a_Z − ∂⁻¹c`. Integrating `(∂⁻¹a)a_Z` by parts shows this
/// equals `∫₀¹(2a² − ∂⁻¹c)` whenever `∫a = 0`, and it makes `∫ da = 0` hold to
/// rounding on the grid.
pub fn trace_rhs(state: &TraceState) -> (Field, Field) {
    let (da, mut dc) = transport_reaction(&state.a, &state.c, false);
    if state.sigma == Sigma::Diffusive {
        let czz = derivative(&state.c, DerivOrder::Second);
        for (d, v) in dc.values_mut().iter_mut().zip(czz.values()) {
            *d += v;
        }
        zero_ends(&mut dc);
    }
    (da, dc)
}

fn transport_reaction(a: &Field, c: &Field, upwind: bool) -> (Field, Field) {
    let big_a = antiderivative(a);
    let big_c = antiderivative(c);
    let (a_z, c_z) = if upwind {
        (
            grid::upwind_derivative(a, big_a.values()),
            grid::upwind_derivative(c, big_a.values()),
        )
    } else {
        (derivative(a, DerivOrder::First), derivative(c, DerivOrder::First))
    };
    let n = a.values().len();
    let (av, cv) = (a.values(), c.values());
    let (av_z, cv_z) = (a_z.values(), c_z.values());
    let (ba, bc) = (big_a.values(), big_c.values());

    let local: Vec<f64> = (0..n).map(|i| av[i] * av[i] - ba[i] * av_z[i] - bc[i]).collect();
    let mut da = Field::new(*a.grid(), local).expect("finite rhs");
    let k = integral(&da);
    da.values_mut().iter_mut().for_each(|v| *v -= k);

    let dc: Vec<f64> = (0..n).map(|i| 2.0 * av[i] * cv[i] - ba[i] * cv_z[i]).collect();
    (da, Field::new(*c.grid(), dc).expect("finite rhs"))
}

fn zero_ends(f: &mut Field) {
    let v = f.values_mut();
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
}

/// Solves `(I − τ D ∂²) u_new = (I + τ D ∂²) u` (Crank–Nicolson with `τ` the
/// half of `dt` handed in) with homogeneous Dirichlet ends.
pub(crate) fn crank_nicolson_dirichlet(u: &mut [f64], h: f64, diffusivity: f64, dt: f64) {
    let n = u.len();
    if n < 3 || dt == 0.0 || diffusivity == 0.0 {
        return;
    }
    let r = 0.5 * diffusivity * dt / (h * h);
    let m = n - 2;
    let mut rhs = vec![0.0; m];
    for j in 0..m {
        let i = j + 1;
        rhs[j] = (1.0 - 2.0 * r) * u[i] + r * (u[i - 1] + u[i + 1]);
    }
    // constant-coefficient tridiagonal: sub = sup = -r, diag = 1 + 2r
    let diag = 1.0 + 2.0 * r;
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = -r / diag;
    dp[0] = rhs[0] / diag;
    for j in 1..m {
        let denom = diag + r * cp[j - 1];
        cp[j] = -r / denom;
        dp[j] = (rhs[j] + r * dp[j - 1]) / denom;
    }
    u[m] = dp[m - 1];
    for j in (0..m - 1).rev() {
        u[j + 1] = dp[j] - cp[j] * u[j + 2];
    }
    u[0] = 0.0;
    u[n - 1] = 0.0;
}

/// Result of one call to [`step`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Advanced {
        state: TraceState,
        dt: f64,
        /// `∫a` after the update and before the mean projection.
        mean_before_projection: f64,
    },
    /// `max|a|` already exceeds the cap; nothing was done.
    BlowupDetected,
}

/// Time step from the transport CFL and the reaction time scale.
pub fn stable_dt(state: &TraceState, cfg: &SolverConfig) -> f64 {
    let h = state.grid().spacing();
    let speed = antiderivative(&state.a).max_abs();
    let amp = state.a.max_abs();
    let cfl = if speed > 0.0 { h / speed } else { f64::INFINITY };
    let react = if amp > 0.0 { 1.0 / amp } else { f64::INFINITY };
    (cfg.dt_safety * cfl.min(react)).min(cfg.dt_max)
}

/// One RK4 step of transport-reaction; for σ = 1 wrapped in Crank–Nicolson
/// half steps of the diffusion (Strang splitting).
pub fn step(state: &TraceState, cfg: &SolverConfig) -> Result<StepOutcome, TraceError> {
    if state.a.max_abs() > cfg.blowup_cap {
        return Ok(StepOutcome::BlowupDetected);
    }
    let mut dt = stable_dt(state, cfg);
    let remaining = cfg.t_max - state.t;
    let clipped = remaining < dt;
    if clipped {
        dt = remaining;
    }
    if !clipped && dt < cfg.dt_floor {
        return Err(TraceError::TimeStepUnderflow {
            dt,
            floor: cfg.dt_floor,
            t: state.t,
        });
    }
    let (a, c, mean) = advance(&state.a, &state.c, state.sigma, dt, cfg.upwind);
    Ok(StepOutcome::Advanced {
        state: TraceState::trusted(a, c, state.sigma, state.t + dt),
        dt,
        mean_before_projection: mean,
    })
}

fn advance(a0: &Field, c0: &Field, sigma: Sigma, dt: f64, upwind: bool) -> (Field, Field, f64) {
    let h = a0.grid().spacing();
    let mut c_start = c0.clone();
    if sigma == Sigma::Diffusive {
        crank_nicolson_dirichlet(c_start.values_mut(), h, 1.0, 0.5 * dt);
    }

    let stage = |a: &Field, c: &Field, da: &Field, dc: &Field, w: f64| {
        (
            a.zip_with(da, |x, d| x + w * d),
            c.zip_with(dc, |x, d| x + w * d),
        )
    };
    let (k1a, k1c) = transport_reaction(a0, &c_start, upwind);
    let (a1, c1) = stage(a0, &c_start, &k1a, &k1c, 0.5 * dt);
    let (k2a, k2c) = transport_reaction(&a1, &c1, upwind);
    let (a2, c2) = stage(a0, &c_start, &k2a, &k2c, 0.5 * dt);
    let (k3a, k3c) = transport_reaction(&a2, &c2, upwind);
    let (a3, c3) = stage(a0, &c_start, &k3a, &k3c, dt);
    let (k4a, k4c) = transport_reaction(&a3, &c3, upwind);

    let combine = |x0: &Field, k1: &Field, k2: &Field, k3: &Field, k4: &Field| {
        let mut out = x0.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v += dt / 6.0
                * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
        }
        out
    };
    let mut a = combine(a0, &k1a, &k2a, &k3a, &k4a);
    let mut c = combine(&c_start, &k1c, &k2c, &k3c, &k4c);

    if sigma == Sigma::Diffusive {
        crank_nicolson_dirichlet(c.values_mut(), h, 1.0, 0.5 * dt);
        zero_ends(&mut c);
    }
    let mean = integral(&a);
    a.values_mut().iter_mut().for_each(|v| *v -= mean);
    (a, c, mean)
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    BlowupCap,
    TimeStepUnderflow,
    TimeLimit,
    StepLimit,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub max_a: f64,
    pub max_c: f64,
    /// `∫a` right after the step, before projection (0 for the initial sample).
    pub mean_a: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<TraceState>,
    pub termination: Termination,
    pub sigma: Sigma,
}

pub const TRAJECTORY_HEADER: &str = "t,max_a,max_c,mean_a,dt";

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g17(s.t),
                g17(s.max_a),
                g17(s.max_c),
                g17(s.mean_a),
                g17(s.dt)
            ));
        }
        out
    }

    /// Parses the CSV written by [`Trajectory::to_csv`]; snapshots are not
    /// part of the file.
    pub fn from_csv(text: &str, sigma: Sigma, termination: Termination) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRAJECTORY_HEADER => {}
            other => return Err(format!("unexpected trajectory header {other:?}")),
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if cols.len() != 5 {
                return Err(format!("line {}: expected 5 columns", i + 2));
            }
            samples.push(Sample {
                t: cols[0],
                max_a: cols[1],
                max_c: cols[2],
                mean_a: cols[3],
                dt: cols[4],
            });
        }
        Ok(Self {
            samples,
            snapshots: Vec::new(),
            termination,
            sigma,
        })
    }
}

fn sample_of(state: &TraceState, mean_a: f64, dt: f64) -> Sample {
    Sample {
        t: state.t,
        max_a: state.a.max_abs(),
        max_c: state.c.max_abs(),
        mean_a,
        dt,
    }
}

/// Steps until `max|a|` reaches the cap, the step underflows, or the time or
/// step limit is hit. Underflow is a normal termination here.
pub fn run_to_blowup(state0: &TraceState, cfg: &SolverConfig) -> Trajectory {
    let mut state = state0.clone();
    let mut samples = vec![sample_of(&state, 0.0, 0.0)];
    let mut snapshots = Vec::new();
    if cfg.snapshot_stride > 0 {
        snapshots.push(state.clone());
    }
    let mut steps = 0usize;
    let termination = loop {
        if state.a.max_abs() >= cfg.blowup_cap {
            break Termination::BlowupCap;
        }
        if state.t >= cfg.t_max {
            break Termination::TimeLimit;
        }
        if steps >= cfg.max_steps {
            break Termination::StepLimit;
        }
        match step(&state, cfg) {
            Ok(StepOutcome::Advanced {
                state: next,
                dt,
                mean_before_projection,
            }) => {
                state = next;
                steps += 1;
                samples.push(sample_of(&state, mean_before_projection, dt));
                if cfg.snapshot_stride > 0 && steps % cfg.snapshot_stride == 0 {
                    snapshots.push(state.clone());
                }
            }
            Ok(StepOutcome::BlowupDetected) => break Termination::BlowupCap,
            Err(_) => break Termination::TimeStepUnderflow,
        }
    };
    if cfg.snapshot_stride > 0 && snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    Trajectory {
        samples,
        snapshots,
        termination,
        sigma: state0.sigma,
    }
}
