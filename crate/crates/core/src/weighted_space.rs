//! Weight functions, the truncated space-time grid, grid functions, and
//! weighted L^p norms.
//!
//! Two weight families are supported: exponential e^{m|x|} (m > 0) and
//! polynomial (1+x^2)^r (r >= 1). Both satisfy rho >= 1 and
//! |rho'| <= C* rho with C* = m and C* = r respectively.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// Largest exponent fed to `exp` when evaluating the exponential weight.
/// Keeps e^{m|x|} inside double range; configs must keep m*L <= 40.
const WEIGHT_EXP_CLAMP: f64 = 40.0;

/// Sample count for the derivative-ratio verification of a weight.
const CSTAR_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Exponential,
    Polynomial,
}

/// A weight rho(x) >= 1 together with its derivative-ratio constant C*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub kind: WeightKind,
    /// Exponent m for e^{m|x|} (exponential kind) or power r for (1+x^2)^r
    /// (polynomial kind).
    pub exponent: f64,
    /// The constant C* with |rho'(x)| <= C* rho(x).
    pub cstar: f64,
}

impl WeightFunction {
    /// Exponential weight e^{m|x|}, m > 0. C* = m.
    pub fn exponential(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "exponential weight requires m > 0, got {m}"
            )));
        }
        Ok(Self {
            kind: WeightKind::Exponential,
            exponent: m,
            cstar: m,
        })
    }

    /// Polynomial weight (1+x^2)^r, r >= 1. C* = r since
    /// sup_x 2r|x|/(1+x^2) = r at |x| = 1.
    pub fn polynomial(r: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "polynomial weight requires r >= 1, got {r}"
            )));
        }
        Ok(Self {
            kind: WeightKind::Polynomial,
            exponent: r,
            cstar: r,
        })
    }

    /// rho(x). Always >= 1.
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            WeightKind::Exponential => {
                let arg = (self.exponent * x.abs()).min(WEIGHT_EXP_CLAMP);
                arg.exp()
            }
            WeightKind::Polynomial => (1.0 + x * x).powf(self.exponent),
        }
    }

    /// rho'(x) (one-sided at x = 0, where |rho'| <= C* rho still holds).
    pub fn eval_derivative(&self, x: f64) -> f64 {
        match self.kind {
            WeightKind::Exponential => self.exponent * x.signum() * self.eval(x),
            WeightKind::Polynomial => {
                2.0 * self.exponent * x * (1.0 + x * x).powf(self.exponent - 1.0)
            }
        }
    }

    /// Tabulate rho at every node of `grid`.
    pub fn table(&self, grid: &SpaceTimeGrid) -> Vec<f64> {
        (0..grid.nx).map(|j| self.eval(grid.x(j))).collect()
    }
}

/// Report of the sampled verification of |rho'| <= C* rho.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    /// The declared constant C*.
    pub cstar: f64,
    /// Largest sampled ratio |rho'(x)| / rho(x).
    pub max_ratio: f64,
    pub ok: bool,
}

/// Verify |rho'(x)| <= C* rho(x) on a uniform sample and report the tightest
/// sampled ratio.
pub fn check_weight_admissible(w: &WeightFunction) -> AdmissibilityReport {
    let half_width = 16.0;
    let mut max_ratio: f64 = 0.0;
    for i in 0..CSTAR_SAMPLES {
        let x = -half_width + 2.0 * half_width * (i as f64) / (CSTAR_SAMPLES as f64 - 1.0);
        let ratio = w.eval_derivative(x).abs() / w.eval(x);
        max_ratio = max_ratio.max(ratio);
    }
    AdmissibilityReport {
        cstar: w.cstar,
        max_ratio,
        ok: max_ratio <= w.cstar * (1.0 + 1e-12),
    }
}

/// Uniform grid on [-L, L] x [0, T]: nx nodes spaced dx = 2L/(nx-1), nt time
/// steps of size dt. The horizon is adjusted to nt*dt with
/// nt = round(T/dt) so grid times land exactly on the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub l: f64,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    /// Effective horizon nt * dt.
    pub t_final: f64,
    pub nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(l: f64, nx: usize, dt: f64, horizon: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(LabError::InvalidInput(format!("need L > 0, got {l}")));
        }
        if nx < 3 {
            return Err(LabError::InvalidInput(format!("need nx >= 3, got {nx}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "need horizon T > 0, got {horizon}"
            )));
        }
        let dx = 2.0 * l / (nx as f64 - 1.0);
        if !(dt > 0.0) || dt > dx * dx / 2.0 * (1.0 + 1e-12) {
            return Err(LabError::InvalidInput(format!(
                "need 0 < dt <= dx^2/2 = {:.3e}, got {dt:.3e}",
                dx * dx / 2.0
            )));
        }
        let nt = ((horizon / dt).round() as usize).max(1);
        Ok(Self {
            l,
            nx,
            dx,
            dt,
            t_final: nt as f64 * dt,
            nt,
        })
    }

    /// Coordinate of node j.
    pub fn x(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.dx
    }

    /// Time of step n.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// A real-valued function sampled on the nodes of a grid. Boundary values are
/// owned by the function; the solver keeps them pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        Self {
            values: vec![0.0; grid.nx],
            grid,
        }
    }

    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..grid.nx).map(|j| f(grid.x(j))).collect(),
            grid,
        }
    }

    pub fn from_values(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx {
            return Err(LabError::InvalidInput(format!(
                "value count {} does not match grid node count {}",
                values.len(),
                grid.nx
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LabError::InvalidInput(
                "grid function contains non-finite values".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::Config(
                "grid function subtraction across different grids".into(),
            ));
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

/// Weighted L^p norm (sum_j |u_j|^p rho(x_j) dx)^{1/p}, p >= 1.
///
/// The flat-rectangle rule matches the stepper's mass lumping; with zero
/// boundary values it coincides with the trapezoid rule.
pub fn weighted_norm(u: &GridFunction, p: f64, w: &WeightFunction) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidInput(format!("need p >= 1, got {p}")));
    }
    if !u.is_finite() {
        return Err(LabError::InvalidInput(
            "weighted_norm: non-finite values".into(),
        ));
    }
    let mut sum = 0.0;
    if p == 2.0 {
        for (j, &v) in u.values.iter().enumerate() {
            sum += v * v * w.eval(u.grid.x(j));
        }
    } else {
        for (j, &v) in u.values.iter().enumerate() {
            sum += v.abs().powf(p) * w.eval(u.grid.x(j));
        }
    }
    Ok((sum * u.grid.dx).powf(1.0 / p))
}

/// Same norm with a precomputed weight table; used on hot paths.
pub(crate) fn weighted_norm_tabled(values: &[f64], p: f64, table: &[f64], dx: f64) -> f64 {
    let mut sum = 0.0;
    if p == 2.0 {
        for (v, w) in values.iter().zip(table) {
            sum += v * v * w;
        }
    } else if p == 3.0 || p == 4.0 || p == 6.0 {
        let ip = p as i32;
        for (v, w) in values.iter().zip(table) {
            sum += v.abs().powi(ip) * w;
        }
    } else {
        for (v, w) in values.iter().zip(table) {
            sum += v.abs().powf(p) * w;
        }
    }
    (sum * dx).powf(1.0 / p)
}

/// Max over grid nodes x of the quadrature of (G(t,.)*rho)(x) / rho(x).
///
/// The integral extends past [-L, L] using the weight formula directly so the
/// ratio is meaningful up to the boundary. Exponential weights are evaluated
/// unclamped here; callers keep m * (L + window) below overflow range.
pub fn weight_convolution_ratio(w: &WeightFunction, t: f64, grid: &SpaceTimeGrid) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::Domain(format!("need t > 0, got {t}")));
    }
    let width = (4.0 * t).sqrt();
    if width < grid.dx {
        return Err(LabError::Resolution(format!(
            "grid spacing {:.3e} cannot resolve kernel width {width:.3e}",
            grid.dx
        )));
    }
    let window = (8.0 * width / grid.dx).ceil() as i64;
    let pref = 1.0 / (4.0 * std::f64::consts::PI * t).sqrt();
    let mut max_ratio: f64 = 0.0;
    for j in 0..grid.nx {
        let x = grid.x(j);
        let mut conv = 0.0;
        for o in -window..=window {
            let y = x + o as f64 * grid.dx;
            let z = x - y;
            conv += pref * (-z * z / (4.0 * t)).exp() * w.eval(y);
        }
        conv *= grid.dx;
        max_ratio = max_ratio.max(conv / w.eval(x));
    }
    Ok(max_ratio)
}

/// Empirical C_rho(T): max of `weight_convolution_ratio` over a dyadic ladder
/// of times T, T/2, ..., T/32.
pub fn estimate_weight_constant(
    w: &WeightFunction,
    horizon: f64,
    grid: &SpaceTimeGrid,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(LabError::Domain(format!("need T > 0, got {horizon}")));
    }
    let mut best: f64 = 1.0;
    for i in 0..6 {
        let t = horizon / (1u32 << i) as f64;
        best = best.max(weight_convolution_ratio(w, t, grid)?);
    }
    Ok(best)
}
