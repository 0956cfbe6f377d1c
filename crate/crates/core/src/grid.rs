//! Uniform 1D grids and sampled fields.
//!
//! Everything downstream (trace solver, self-similar frame, energies) works on
//! node values over a uniform grid. Integrals use composite Simpson with a
//! trapezoid cell when the cell count is odd; derivatives are second-order
//! central differences with one-sided closures of matching order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest node count accepted by [`Grid::new`].
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("field has {values} values but grid has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

/// Uniform grid `lo = x_0 < x_1 < ... < x_{n-1} = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, GridError> {
        if n < MIN_NODES {
            return Err(GridError::TooFewNodes(n));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(GridError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    /// Node `i`; the last node is `hi` exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Same node count on a different interval.
    pub fn with_interval(&self, lo: f64, hi: f64) -> Result<Self, GridError> {
        Self::new(lo, hi, self.n)
    }
}

/// Real function sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                values: values.len(),
                nodes: grid.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Same values, reinterpreted on `grid` (node counts must agree).
    pub fn relabel(&self, grid: Grid) -> Result<Self, GridError> {
        Self::new(grid, self.values.clone())
    }

    /// Integral over the whole grid.
    pub fn integral(&self) -> f64 {
        integral(self)
    }

    /// Mean value over the grid interval.
    pub fn mean(&self) -> f64 {
        integral(self) / (self.grid.hi - self.grid.lo)
    }

    /// Fifth-order one-sided slope at the left endpoint.
    ///
    /// The modulation parameters are read off `f(lo)` and `f'(lo)`, so this
    /// uses a wider stencil than [`derivative`].
    pub fn slope_at_lo(&self) -> f64 {
        const W: [f64; 6] = [-137.0 / 60.0, 5.0, -5.0, 10.0 / 3.0, -5.0 / 4.0, 1.0 / 5.0];
        let v = &self.values;
        W.iter().zip(v).map(|(w, f)| w * f).sum::<f64>() / self.grid.spacing()
    }
}

/// Cumulative integral `g(x) = ∫_lo^x f` with `g(lo) = 0` exactly.
///
/// Node pairs are closed with Simpson's rule; the odd node inside a pair uses
/// the quadratic through the pair, and a leftover final cell (even `n`) uses
/// the trapezoid rule.
pub fn antiderivative(f: &Field) -> Field {
    let h = f.grid.spacing();
    let v = &f.values;
    let n = v.len();
    let mut g = vec![0.0; n];
    let mut i = 0;
    while i + 2 < n {
        g[i + 1] = g[i] + h * (5.0 * v[i] + 8.0 * v[i + 1] - v[i + 2]) / 12.0;
        g[i + 2] = g[i] + h * (v[i] + 4.0 * v[i + 1] + v[i + 2]) / 3.0;
        i += 2;
    }
    if i + 1 < n {
        g[i + 1] = g[i] + 0.5 * h * (v[i] + v[i + 1]);
    }
    Field {
        grid: f.grid,
        values: g,
    }
}

/// Composite Simpson integral over the whole grid; equals the last value of
/// [`antiderivative`].
pub fn integral(f: &Field) -> f64 {
    let h = f.grid.spacing();
    let v = &f.values;
    let n = v.len();
    let mut acc = Neumaier::default();
    let mut i = 0;
    while i + 2 < n {
        acc.add(h * v[i] / 3.0);
        acc.add(4.0 * h * v[i + 1] / 3.0);
        acc.add(h * v[i + 2] / 3.0);
        i += 2;
    }
    if i + 1 < n {
        acc.add(0.5 * h * v[i]);
        acc.add(0.5 * h * v[i + 1]);
    }
    acc.total()
}

/// Compensated summation.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    First,
    Second,
}

/// Second-order finite differences, one-sided at the endpoints.
pub fn derivative(f: &Field, order: DerivOrder) -> Field {
    let h = f.grid.spacing();
    let v = &f.values;
    let n = v.len();
    let mut d = vec![0.0; n];
    match order {
        DerivOrder::First => {
            let inv = 1.0 / (2.0 * h);
            d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * inv;
            for i in 1..n - 1 {
                d[i] = (v[i + 1] - v[i - 1]) * inv;
            }
            d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * inv;
        }
        DerivOrder::Second => {
            let inv = 1.0 / (h * h);
            d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * inv;
            for i in 1..n - 1 {
                d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv;
            }
            d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * inv;
        }
    }
    Field {
        grid: f.grid,
        values: d,
    }
}

/// First-order upwind derivative for the transport term `velocity · f_x`.
pub fn upwind_derivative(f: &Field, velocity: &[f64]) -> Field {
    let h = f.grid.spacing();
    let v = &f.values;
    let n = v.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if (velocity[i] >= 0.0 && i > 0) || i + 1 == n {
            (v[i] - v[i - 1]) / h
        } else {
            (v[i + 1] - v[i]) / h
        };
    }
    Field {
        grid: f.grid,
        values: d,
    }
}

/// Output of [`resample`]: the new field plus the number of target nodes that
/// fell outside the source extent and were filled by constant extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub field: Field,
    pub extrapolated: usize,
}

/// Local cubic (4-point Lagrange) interpolation onto `target`.
pub fn resample(f: &Field, target: Grid) -> Resampled {
    let src = f.grid;
    let h = src.spacing();
    let n = src.len();
    let v = &f.values;
    let tol = 1e-12 * h;
    let mut extrapolated = 0;
    let mut out = Vec::with_capacity(target.len());
    for x in target.nodes() {
        if x > src.hi() + tol || x < src.lo() - tol {
            extrapolated += 1;
            out.push(if x > src.hi() { v[n - 1] } else { v[0] });
            continue;
        }
        let u = ((x - src.lo()) / h).clamp(0.0, (n - 1) as f64);
        let k = u.floor() as usize;
        if (u - k as f64).abs() < 1e-12 && k < n {
            out.push(v[k]);
            continue;
        }
        // stencil i0..i0+3 covering the cell [k, k+1]
        let i0 = k.saturating_sub(1).min(n - 4);
        let t = u - i0 as f64;
        let mut acc = 0.0;
        for j in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != j {
                    w *= (t - m as f64) / (j as f64 - m as f64);
                }
            }
            acc += w * v[i0 + j];
        }
        out.push(acc);
    }
    Resampled {
        field: Field {
            grid: target,
            values: out,
        },
        extrapolated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::new(lo, hi, n).unwrap()
    }

    fn max_err(f: &Field, exact: impl Fn(f64) -> f64) -> f64 {
        f.grid()
            .nodes()
            .iter()
            .zip(f.values())
            .map(|(&x, &v)| (v - exact(x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_small_or_inverted_grids() {
        assert_eq!(Grid::new(0.0, 1.0, 7), Err(GridError::TooFewNodes(7)));
        assert!(matches!(
            Grid::new(1.0, 1.0, 9),
            Err(GridError::InvalidInterval { .. })
        ));
        let g = grid(0.0, 1.0, 9);
        assert!(matches!(
            Field::new(g, vec![0.0; 8]),
            Err(GridError::LengthMismatch { .. })
        ));
        let mut bad = vec![0.0; 9];
        bad[4] = f64::NAN;
        assert_eq!(Field::new(g, bad), Err(GridError::NonFinite(4)));
    }

    #[test]
    fn nodes_are_uniform_and_hit_endpoints() {
        let g = grid(0.0, 3.0, 31);
        let x = g.nodes();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[30], 3.0);
        for w in x.windows(2) {
            assert!(((w[1] - w[0]) - g.spacing()).abs() <= 1e-12 * g.spacing());
        }
    }

    #[test]
    fn antiderivative_of_constant_is_exact() {
        for n in [9, 10, 33] {
            let g = grid(0.0, 1.0, n);
            let a = antiderivative(&Field::from_fn(g, |_| 1.0));
            assert!(max_err(&a, |x| x) < 1e-15, "n={n}");
            assert_eq!(a.first(), 0.0);
        }
    }

    #[test]
    fn antiderivative_converges_at_second_order() {
        let err = |n| {
            let g = grid(0.0, 4.0, n);
            max_err(&antiderivative(&Field::from_fn(g, |z| (-z).exp())), |z| {
                1.0 - (-z).exp()
            })
        };
        for n in [64, 65] {
            let ratio = err(n) / err(2 * n - 1);
            assert!(ratio > 3.5, "n={n} ratio={ratio}");
        }
        assert!(err(1025) < 1e-7);
    }

    #[test]
    fn antiderivative_of_cubic() {
        let g = grid(0.0, 1.0, 257);
        let a = antiderivative(&Field::from_fn(g, |z| z * z * z - z));
        // Simpson pairs are exact for cubics; the mid-pair quadratic is not.
        assert!(max_err(&a, |z| z.powi(4) / 4.0 - z * z / 2.0) < 1e-7);
    }

    #[test]
    fn derivative_examples() {
        let g = grid(0.0, 1.0, 65);
        let d = derivative(&Field::from_fn(g, |z| z * z), DerivOrder::First);
        assert!(max_err(&d, |z| 2.0 * z) < 1e-12);
        let c = derivative(&Field::from_fn(g, |_| 3.5), DerivOrder::Second);
        assert!(c.max_abs() < 1e-9);
        let c1 = derivative(&Field::from_fn(g, |_| 3.5), DerivOrder::First);
        assert!(c1.max_abs() < 1e-12);

        let pi = std::f64::consts::PI;
        let err = |n| {
            let g = grid(0.0, 1.0, n);
            let d2 = derivative(&Field::from_fn(g, |z| (pi * z).sin()), DerivOrder::Second);
            max_err(&d2, |z| -pi * pi * (pi * z).sin())
        };
        let ratio = err(129) / err(257);
        assert!(ratio > 3.5, "ratio={ratio}");
    }

    #[test]
    fn integral_examples() {
        let g = grid(0.0, 1.0, 1025);
        assert_eq!(integral(&Field::zeros(g)), 0.0);
        assert!((integral(&Field::from_fn(g, |z| z)) - 0.5).abs() < 1e-10);
        let l: f64 = 6.0;
        let exact = (1.0 - (-2.0 * l).exp()) / 2.0;
        let e = |n| (integral(&Field::from_fn(grid(0.0, l, n), |z| (-2.0 * z).exp())) - exact).abs();
        assert!(e(64) / e(128) > 3.5);
    }

    #[test]
    fn integral_matches_antiderivative_tail() {
        for n in [9, 10, 101, 1024] {
            let g = grid(-1.0, 2.0, n);
            let f = Field::from_fn(g, |x| (3.0 * x).cos() + x * x);
            let i = integral(&f);
            assert!((i - antiderivative(&f).last()).abs() <= 1e-12 * i.abs().max(1.0));
        }
    }

    #[test]
    fn slope_at_lo_is_high_order() {
        let g = grid(0.0, 1.0, 2049);
        let f = Field::from_fn(g, |z| (-z / 0.07).exp());
        let exact = -1.0 / 0.07;
        assert!((f.slope_at_lo() - exact).abs() < 1e-9 * exact.abs());
    }

    #[test]
    fn resample_examples() {
        let g = grid(0.0, 2.0, 33);
        let f = Field::from_fn(g, |z| z * z);
        let same = resample(&f, g);
        assert_eq!(same.field.values(), f.values());
        assert_eq!(same.extrapolated, 0);

        let fine = resample(&f, grid(0.0, 2.0, 65));
        assert!(max_err(&fine.field, |z| z * z) < 1e-12);

        let decay = Field::from_fn(g, |z| 2.0 - z);
        let wide = resample(&decay, grid(0.0, 3.0, 31));
        assert!(wide.extrapolated > 0);
        let tail = &wide.field.values()[21..];
        assert!(tail.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resample_cubic_error_is_fourth_order() {
        let err = |n: usize| {
            let f = Field::from_fn(grid(0.0, 1.0, n), |z| (3.0 * z).sin());
            let r = resample(&f, grid(0.0, 1.0, 2 * n - 1));
            max_err(&r.field, |z| (3.0 * z).sin())
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 12.0, "ratio={ratio}");
    }

    #[test]
    fn upwind_picks_the_upstream_side() {
        let g = grid(0.0, 1.0, 11);
        let f = Field::from_fn(g, |x| x * x);
        let right = upwind_derivative(&f, &[1.0; 11]);
        let left = upwind_derivative(&f, &[-1.0; 11]);
        let h = g.spacing();
        assert!((right.values()[5] - (0.25 - 0.16) / h).abs() < 1e-12);
        assert!((left.values()[5] - (0.36 - 0.25) / h).abs() < 1e-12);
    }
}
