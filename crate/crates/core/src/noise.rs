//! Brownian-sheet increments for space-time white noise and the diffusion
//! coefficient sigma.
//!
//! Increments are generated by a counter-based scheme: each (seed, step,
//! node) triple is hashed through splitmix64 and fed to a Box-Muller
//! transform. Reproducibility is bit-for-bit and independent of evaluation
//! order, so distinct paths and distinct steps can be generated concurrently.

use crate::error::{LabError, Result};
use crate::weighted_space::{SpaceTimeGrid, WeightFunction};
use serde::{Deserialize, Serialize};

/// One time step of Brownian-sheet increments over the spatial grid. Each
/// entry is N(0, dt*dx).
#[derive(Debug, Clone)]
pub struct NoiseSlab {
    pub step_index: usize,
    pub increments: Vec<f64>,
    pub variance: f64,
}

#[inline]
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Map 64 random bits to (0, 1), never exactly 0 or 1.
#[inline]
fn to_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// One standard normal draw keyed on (seed, step, node).
#[inline]
pub(crate) fn standard_normal(seed: u64, step: u64, node: u64) -> f64 {
    let base = splitmix64(splitmix64(splitmix64(seed) ^ step) ^ node);
    let u1 = to_unit(base);
    let u2 = to_unit(splitmix64(base));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Draw the increment slab for one time step: i.i.d. N(0, dt*dx) per node.
pub fn sample_increments(seed: u64, grid: &SpaceTimeGrid, step_index: usize) -> NoiseSlab {
    let sd = (grid.dt * grid.dx).sqrt();
    NoiseSlab {
        step_index,
        increments: (0..grid.nx)
            .map(|j| sd * standard_normal(seed, step_index as u64, j as u64))
            .collect(),
        variance: grid.dt * grid.dx,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// e^{-beta |x|} sin(u)
    BoundedSin,
    /// e^{-beta |x|} u / (1 + |u|)
    Saturating,
    ConstantZero,
}

/// Diffusion coefficient sigma(x, u) with amplitude envelope b(x) = e^{-beta|x|}
/// and Lipschitz constant in the state variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaCoefficient {
    pub kind: SigmaKind,
    /// Decay rate beta of the amplitude b(x) = e^{-beta |x|}.
    pub beta: f64,
    /// Lipschitz constant in u: 1 for the two active families, 0 for zero.
    pub lipschitz: f64,
}

impl SigmaCoefficient {
    pub fn new(kind: SigmaKind, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "sigma amplitude decay must satisfy beta > 0, got {beta}"
            )));
        }
        let lipschitz = match kind {
            SigmaKind::ConstantZero => 0.0,
            _ => 1.0,
        };
        Ok(Self {
            kind,
            beta,
            lipschitz,
        })
    }

    /// The amplitude envelope b(x).
    pub fn envelope(&self, x: f64) -> f64 {
        match self.kind {
            SigmaKind::ConstantZero => 0.0,
            _ => (-self.beta * x.abs()).exp(),
        }
    }

    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match self.kind {
            SigmaKind::BoundedSin => self.envelope(x) * u.sin(),
            SigmaKind::Saturating => self.envelope(x) * u / (1.0 + u.abs()),
            SigmaKind::ConstantZero => 0.0,
        }
    }
}

/// Result of the sampled verification of the diffusion-coefficient
/// assumptions.
#[derive(Debug, Clone, Copy)]
pub struct SigmaAssumptionReport {
    /// |sigma(x,u)| <= b(x) on all samples.
    pub bound_ok: bool,
    /// |sigma(x,u) - sigma(x,v)| <= L |u - v| on all samples.
    pub lipschitz_ok: bool,
    /// 2 beta > mhat, so that b is square integrable against the weight.
    pub envelope_integrable: bool,
    /// ||b||_{2, rhohat} by quadrature (finite only when integrable).
    pub envelope_norm: f64,
}

impl SigmaAssumptionReport {
    pub fn ok(&self) -> bool {
        self.bound_ok && self.lipschitz_ok && self.envelope_integrable
    }
}

/// Randomly sample (x, u, v) triples to confirm the amplitude bound and the
/// Lipschitz bound, and integrate ||b||_{2, rhohat}^2 = int e^{-2 beta |x|}
/// rhohat(x) dx by quadrature over a wide window.
pub fn check_sigma_assumptions(
    s: &SigmaCoefficient,
    weight_hat: &WeightFunction,
    sample_count: usize,
) -> SigmaAssumptionReport {
    assert!(sample_count >= 1);
    let mut bound_ok = true;
    let mut lipschitz_ok = true;
    for i in 0..sample_count {
        let k = i as u64;
        let x = 30.0 * (to_unit(splitmix64(0xA1_0001 ^ k)) - 0.5);
        let u = 40.0 * (to_unit(splitmix64(0xA1_0002 ^ k)) - 0.5);
        let v = 40.0 * (to_unit(splitmix64(0xA1_0003 ^ k)) - 0.5);
        if s.eval(x, u).abs() > s.envelope(x) * (1.0 + 1e-12) {
            bound_ok = false;
        }
        if (s.eval(x, u) - s.eval(x, v)).abs() > s.lipschitz * (u - v).abs() * (1.0 + 1e-12) {
            lipschitz_ok = false;
        }
    }

    let mhat = match weight_hat.kind {
        crate::weighted_space::WeightKind::Exponential => weight_hat.exponent,
        // Polynomial weights grow slower than any exponential; the envelope
        // is always integrable against them.
        crate::weighted_space::WeightKind::Polynomial => 0.0,
    };
    let envelope_integrable =
        s.kind == SigmaKind::ConstantZero || 2.0 * s.beta > mhat;
    let envelope_norm = if envelope_integrable {
        let h = 1e-3;
        let half = (60.0 / (2.0 * s.beta - mhat).max(0.1)).min(20_000.0);
        let n = (half / h) as i64;
        let mut sum = 0.0;
        for j in -n..=n {
            let x = j as f64 * h;
            let b = s.envelope(x);
            sum += b * b * weight_hat.eval(x) * h;
        }
        sum.sqrt()
    } else {
        f64::INFINITY
    };

    SigmaAssumptionReport {
        bound_ok,
        lipschitz_ok,
        envelope_integrable,
        envelope_norm,
    }
}
